#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mvsim {

/// Brownian increments and iterated integrals for one time step of an
/// N-particle system driven by m-dimensional noise per particle.
///
/// Indexing (all row-major):
///   dW[i*m + j]
///   own_I[(i*m + j2)*m + j1]        = ∫∫ dW^{i,j2} dW^{i,j1}
///   cross_I[(k*m + j2)*(N*m) + i*m + j1] = ∫∫ dW^{k,j2} dW^{i,j1}
/// where ∫∫ dW^a dW^b denotes ∫_t^{t+h} (W^a_s - W^a_t) dW^b_s.
struct NoiseBlock {
  double h = 0.0;
  std::size_t particles = 0;
  std::size_t noise_dim = 0;
  std::vector<double> dW;
  std::vector<double> own_I;
  std::vector<double> cross_I;

  bool has_cross() const noexcept { return !cross_I.empty(); }
  std::size_t stacked_dim() const noexcept { return particles * noise_dim; }

  double increment(std::size_t i, std::size_t j) const { return dW[i * noise_dim + j]; }
  double own(std::size_t i, std::size_t j2, std::size_t j1) const {
    return own_I[(i * noise_dim + j2) * noise_dim + j1];
  }
  double cross(std::size_t k, std::size_t j2, std::size_t i, std::size_t j1) const {
    return cross_I[(k * noise_dim + j2) * stacked_dim() + i * noise_dim + j1];
  }
};

/// Approximate Lévy areas A (antisymmetric, D x D row-major) for increments
/// `dW` over a step of length h: the Fourier series truncated after K terms
/// plus Wiktorsson's Gaussian approximation of the tail.
///
/// `series` holds 2K standard normals per component, laid out component-major
/// (series[c*2K + 2(k-1)] and series[c*2K + 2(k-1) + 1] are the k-th
/// coefficients of component c). `tail` holds D(D-1)/2 standard normals in
/// (i < j) row order. The mean-square error per area is O(h^2 / K^2).
void wiktorsson_levy_area(std::span<const double> dW, double h, std::span<const double> series,
                          std::span<const double> tail, std::span<double> area);

/// Tail scale sum_{k > K} 1/k^2.
double series_tail_weight(std::size_t K) noexcept;

/// Draws the noise for time step `step`. Particle i's increments and series
/// coefficients come from the stream (seed, step, i); the joint tail of the
/// stacked expansion (with_cross) comes from a shared stream of the step.
/// Diagonal integrals are exact: ((dW)^2 - h) / 2.
NoiseBlock sample_step_noise(std::uint64_t seed, std::uint64_t step, std::size_t particles,
                             std::size_t noise_dim, double h, std::size_t K, bool with_cross);

/// Builds a block from given increments and (optional) antisymmetric Lévy
/// areas of the stacked (N*m) system; missing areas are taken as zero.
NoiseBlock noise_from_increments(double h, std::size_t particles, std::size_t noise_dim,
                                 std::vector<double> dW, std::span<const double> stacked_area = {},
                                 bool with_cross = false);

/// Exact composition of iterated integrals over consecutive steps (Chen's
/// relation), folded left to right. Throws std::invalid_argument on an empty
/// list or mismatched shapes.
NoiseBlock chen_aggregate(std::span<const NoiseBlock> fine_blocks);

/// Streaming form of chen_aggregate.
class ChenAccumulator {
 public:
  void push(const NoiseBlock& block);
  std::size_t count() const noexcept { return count_; }
  /// Returns the aggregate and resets the accumulator.
  NoiseBlock take();

 private:
  NoiseBlock acc_;
  std::size_t count_ = 0;
};

}  // namespace mvsim
