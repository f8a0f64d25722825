#include "mvsim/brownian.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/core.h>

#include "mvsim/rng.hpp"

namespace mvsim {

double series_tail_weight(std::size_t K) noexcept {
  double partial = 0.0;
  for (std::size_t k = K; k >= 1; --k) partial += 1.0 / (static_cast<double>(k) * static_cast<double>(k));
  return std::numbers::pi * std::numbers::pi / 6.0 - partial;
}

void wiktorsson_levy_area(std::span<const double> dW, double h, std::span<const double> series,
                          std::span<const double> tail, std::span<double> area) {
  const std::size_t dim = dW.size();
  if (dim == 0 || series.size() % (2 * dim) != 0) throw std::invalid_argument("levy area: bad series size");
  const std::size_t K = series.size() / (2 * dim);
  if (tail.size() != dim * (dim - 1) / 2 || area.size() != dim * dim)
    throw std::invalid_argument("levy area: bad tail or output size");

  const double c = std::sqrt(2.0 / h);
  std::fill(area.begin(), area.end(), 0.0);
  std::vector<double> x(dim), y(dim);
  for (std::size_t k = 1; k <= K; ++k) {
    for (std::size_t p = 0; p < dim; ++p) {
      x[p] = series[p * 2 * K + 2 * (k - 1)];
      y[p] = series[p * 2 * K + 2 * (k - 1) + 1] + c * dW[p];
    }
    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::size_t p = 0; p < dim; ++p)
      for (std::size_t q = p + 1; q < dim; ++q) area[p * dim + q] += inv_k * (x[p] * y[q] - x[q] * y[p]);
  }

  // Tail: (h/2π)·sqrt(a_K)·Σ^{1/2}·G with Σ^{1/2} = (Σ + 2rI) / (sqrt(2)(1 + r)),
  // where (ΣG)_pq = 2G_pq + (2/h)(w_q v_p - w_p v_q) and v = G_antisym · w.
  std::vector<double> v(dim, 0.0);
  {
    std::size_t idx = 0;
    for (std::size_t p = 0; p < dim; ++p)
      for (std::size_t q = p + 1; q < dim; ++q, ++idx) {
        v[p] += tail[idx] * dW[q];
        v[q] -= tail[idx] * dW[p];
      }
  }
  double w_sq = 0.0;
  for (double w : dW) w_sq += w * w;
  const double r = std::sqrt(1.0 + w_sq / h);
  const double tail_scale = std::sqrt(series_tail_weight(K)) / (std::numbers::sqrt2 * (1.0 + r));

  std::size_t idx = 0;
  for (std::size_t p = 0; p < dim; ++p) {
    for (std::size_t q = p + 1; q < dim; ++q, ++idx) {
      const double sigma_g = 2.0 * tail[idx] + (2.0 / h) * (dW[q] * v[p] - dW[p] * v[q]);
      const double value = area[p * dim + q] + tail_scale * (sigma_g + 2.0 * r * tail[idx]);
      area[p * dim + q] = h / (2.0 * std::numbers::pi) * value;
      area[q * dim + p] = -area[p * dim + q];
    }
  }
}

namespace {

void fill_own_from_areas(NoiseBlock& block, std::span<const double> area_of, std::size_t area_stride,
                         std::size_t i) {
  const std::size_t m = block.noise_dim;
  for (std::size_t j2 = 0; j2 < m; ++j2) {
    const double w2 = block.dW[i * m + j2];
    for (std::size_t j1 = 0; j1 < m; ++j1) {
      const double w1 = block.dW[i * m + j1];
      double value;
      if (j1 == j2) {
        value = 0.5 * (w1 * w1 - block.h);
      } else {
        value = 0.5 * w2 * w1 + (area_of.empty() ? 0.0 : area_of[j2 * area_stride + j1]);
      }
      block.own_I[(i * m + j2) * m + j1] = value;
    }
  }
}

void fill_cross_from_areas(NoiseBlock& block, std::span<const double> area) {
  const std::size_t dim = block.stacked_dim();
  block.cross_I.assign(dim * dim, 0.0);
  for (std::size_t p = 0; p < dim; ++p) {
    for (std::size_t q = 0; q < dim; ++q) {
      const double wp = block.dW[p];
      const double wq = block.dW[q];
      block.cross_I[p * dim + q] =
          p == q ? 0.5 * (wp * wp - block.h) : 0.5 * wp * wq + (area.empty() ? 0.0 : area[p * dim + q]);
    }
  }
  // Own integrals are the diagonal blocks of the stacked ones.
  const std::size_t m = block.noise_dim;
  for (std::size_t i = 0; i < block.particles; ++i)
    for (std::size_t j2 = 0; j2 < m; ++j2)
      for (std::size_t j1 = 0; j1 < m; ++j1)
        block.own_I[(i * m + j2) * m + j1] = block.cross_I[(i * m + j2) * dim + i * m + j1];
}

}  // namespace

NoiseBlock sample_step_noise(std::uint64_t seed, std::uint64_t step, std::size_t particles,
                             std::size_t noise_dim, double h, std::size_t K, bool with_cross) {
  if (!(h > 0.0) || K == 0 || particles == 0 || noise_dim == 0)
    throw std::invalid_argument("sample_step_noise: invalid shape or step");

  const std::size_t m = noise_dim;
  NoiseBlock block;
  block.h = h;
  block.particles = particles;
  block.noise_dim = m;
  block.dW.resize(particles * m);
  block.own_I.resize(particles * m * m);
  const double root_h = std::sqrt(h);
  const long long n = static_cast<long long>(particles);

  if (!with_cross) {
#pragma omp parallel
    {
      std::vector<double> series(2 * K * m), tail(m * (m - 1) / 2), area(m * m);
#pragma omp for schedule(static)
      for (long long ii = 0; ii < n; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        CounterRng rng(StreamKey{seed, step, static_cast<std::uint32_t>(i)});
        for (std::size_t j = 0; j < m; ++j) block.dW[i * m + j] = root_h * rng.normal();
        if (m > 1) {
          for (double& s : series) s = rng.normal();
          for (double& t : tail) t = rng.normal();
          wiktorsson_levy_area(std::span<const double>(block.dW).subspan(i * m, m), h, series, tail, area);
          fill_own_from_areas(block, area, m, i);
        } else {
          fill_own_from_areas(block, {}, m, i);
        }
      }
    }
    return block;
  }

  const std::size_t dim = particles * m;
  std::vector<double> series(2 * K * dim);
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    CounterRng rng(StreamKey{seed, step, static_cast<std::uint32_t>(i)});
    for (std::size_t j = 0; j < m; ++j) block.dW[i * m + j] = root_h * rng.normal();
    for (std::size_t s = 0; s < 2 * K * m; ++s) series[i * 2 * K * m + s] = rng.normal();
  }
  std::vector<double> tail(dim * (dim - 1) / 2);
  CounterRng shared(StreamKey{seed, step, kSharedStream});
  for (double& t : tail) t = shared.normal();
  std::vector<double> area(dim * dim);
  wiktorsson_levy_area(block.dW, h, series, tail, area);
  fill_cross_from_areas(block, area);
  return block;
}

NoiseBlock noise_from_increments(double h, std::size_t particles, std::size_t noise_dim, std::vector<double> dW,
                                 std::span<const double> stacked_area, bool with_cross) {
  const std::size_t dim = particles * noise_dim;
  if (dW.size() != dim) throw std::invalid_argument("noise_from_increments: dW has wrong size");
  if (!stacked_area.empty() && stacked_area.size() != dim * dim)
    throw std::invalid_argument("noise_from_increments: area has wrong size");
  NoiseBlock block;
  block.h = h;
  block.particles = particles;
  block.noise_dim = noise_dim;
  block.dW = std::move(dW);
  block.own_I.resize(particles * noise_dim * noise_dim);
  if (with_cross) {
    fill_cross_from_areas(block, stacked_area);
  } else {
    for (std::size_t i = 0; i < particles; ++i) {
      const auto sub = stacked_area.empty()
                           ? std::span<const double>{}
                           : stacked_area.subspan(i * noise_dim * dim + i * noise_dim);
      fill_own_from_areas(block, sub, dim, i);
    }
  }
  return block;
}

namespace {

void append(NoiseBlock& acc, const NoiseBlock& next) {
  if (acc.particles != next.particles || acc.noise_dim != next.noise_dim || acc.has_cross() != next.has_cross())
    throw std::invalid_argument("chen_aggregate: mismatched block shapes");
  const std::size_t m = acc.noise_dim;
  for (std::size_t i = 0; i < acc.particles; ++i)
    for (std::size_t j2 = 0; j2 < m; ++j2)
      for (std::size_t j1 = 0; j1 < m; ++j1)
        acc.own_I[(i * m + j2) * m + j1] += next.own_I[(i * m + j2) * m + j1] + acc.dW[i * m + j2] * next.dW[i * m + j1];
  if (acc.has_cross()) {
    const std::size_t dim = acc.stacked_dim();
    for (std::size_t p = 0; p < dim; ++p)
      for (std::size_t q = 0; q < dim; ++q)
        acc.cross_I[p * dim + q] += next.cross_I[p * dim + q] + acc.dW[p] * next.dW[q];
  }
  for (std::size_t p = 0; p < acc.dW.size(); ++p) acc.dW[p] += next.dW[p];
  acc.h += next.h;
}

}  // namespace

NoiseBlock chen_aggregate(std::span<const NoiseBlock> fine_blocks) {
  if (fine_blocks.empty()) throw std::invalid_argument("chen_aggregate: no blocks");
  NoiseBlock acc = fine_blocks.front();
  for (std::size_t b = 1; b < fine_blocks.size(); ++b) append(acc, fine_blocks[b]);
  return acc;
}

void ChenAccumulator::push(const NoiseBlock& block) {
  if (count_ == 0) {
    acc_ = block;
  } else {
    append(acc_, block);
  }
  ++count_;
}

NoiseBlock ChenAccumulator::take() {
  if (count_ == 0) throw std::logic_error("ChenAccumulator::take on empty accumulator");
  count_ = 0;
  return std::move(acc_);
}

}  // namespace mvsim
