#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvsim/brownian.hpp"
#include "mvsim/models.hpp"
#include "mvsim/taming.hpp"

namespace mvsim {

enum class SchemeKind { classical_milstein, taming_milstein, tamed_euler };

std::string_view to_string(SchemeKind kind) noexcept;
SchemeKind parse_scheme_kind(std::string_view name);

struct SchemeConfig {
  SchemeKind kind = SchemeKind::taming_milstein;
  TamingSpec taming = TamingSpec::uniform(TamingKind::tanh);
  bool include_measure_term = false;
  double dt = 0.015625;
  double T = 1.0;
  double blow_up_threshold = 1e10;
  std::size_t cross_N_ceiling = 64;
  std::size_t wiktorsson_K = 20;

  /// Number of uniform steps T / dt. Throws if dt does not divide T within 1e-12.
  std::size_t steps() const;
  /// Identity in every slot for the classical scheme, the configured spec otherwise.
  TamingSpec effective_taming() const;
  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate(std::size_t particles) const;
};

/// N particle states at a common time. Blown-up particles keep a finite
/// sentinel state on the blow-up sphere and are no longer advanced.
struct ParticleEnsemble {
  double t = 0.0;
  std::size_t dim = 1;
  std::vector<double> states;
  std::vector<std::uint8_t> blown_up;
  std::vector<double> blow_up_time;

  static ParticleEnsemble from_states(std::vector<double> states, std::size_t dim, double t = 0.0);

  std::size_t size() const noexcept { return dim == 0 ? 0 : states.size() / dim; }
  std::span<const double> particle(std::size_t i) const {
    return std::span<const double>(states).subspan(i * dim, dim);
  }
  MeasureView measure() const noexcept { return MeasureView{states, dim}; }
  std::size_t blown_up_count() const noexcept;
};

/// Coordinate means, mean-square norm and the model's kernel averages of
/// the current empirical measure, reduced in an order-independent way.
MeasureSummary interaction_functionals(const ParticleEnsemble& ensemble, const Model& model);

/// W2 distance between the empirical measure and the point mass at the origin.
double wasserstein2_to_origin(const MeasureSummary& summary) noexcept;

/// Advances ensembles under the Milstein-type update. Owns the scratch state
/// for one (model, scheme) pair; reusable across steps and runs.
class Stepper {
 public:
  Stepper(const Model& model, SchemeConfig config);

  /// One step of length config.dt. Every particle reads the measure frozen at
  /// the start of the step; updates are committed after all are computed.
  void advance(ParticleEnsemble& ensemble, const NoiseBlock& noise);

  const SchemeConfig& config() const noexcept { return config_; }

 private:
  const Model& model_;
  SchemeConfig config_;
  TamingSpec taming_;
  std::vector<double> next_;
  std::vector<double> column_cache_;
};

ParticleEnsemble step_particles(const ParticleEnsemble& ensemble, const NoiseBlock& noise, const Model& model,
                                const SchemeConfig& config);

struct Snapshot {
  double t = 0.0;
  std::vector<double> states;
  std::vector<std::uint8_t> blown_up;
};

struct SimulationOptions {
  /// Times at which states are recorded; each maps to the nearest grid step.
  std::vector<double> snapshot_times;
  /// Called with the ensemble at t_0 and after every step.
  std::function<void(const ParticleEnsemble&)> observer;
};

struct SimulationResult {
  std::vector<Snapshot> snapshots;
  ParticleEnsemble final_state;
  std::size_t steps_taken = 0;
  /// True when every particle blew up and the run stopped early.
  bool terminated_early = false;
  std::size_t blown_up_count = 0;
  /// First blow-up times of the blown-up particles, ascending.
  std::vector<double> blow_up_times;
};

/// Draws N i.i.d. initial states from the model's law and advances them to
/// T. Noise for step k comes from streams keyed by (seed, k, particle), so
/// the result depends only on (model, config, N, seed).
SimulationResult run_simulation(const Model& model, const SchemeConfig& config, std::size_t particles,
                                std::uint64_t seed, const SimulationOptions& options = {});

/// CSV with header `time,particle,coord_0..coord_{d-1},blown_up`.
void write_snapshot_csv(std::ostream& out, std::span<const Snapshot> snapshots, std::size_t dim);

/// Shortest round-trip decimal form, used for every numeric output field.
std::string format_real(double value);

}  // namespace mvsim
