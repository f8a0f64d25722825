#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvsim/engine.hpp"
#include "mvsim/models.hpp"

namespace mvsim {

/// One (scheme, dt, seed) cell of a strong-convergence study.
struct ConvergenceRecord {
  std::string model;
  std::string scheme;
  std::string taming;
  double dt = 0.0;
  double ref_dt = 0.0;
  std::size_t particles = 0;
  std::uint64_t seed = 0;
  /// Root-mean-square terminal error; meaningless when diverged.
  double mse = 0.0;
  bool diverged = false;
  double wallclock_s = 0.0;
};

struct StudyOptions {
  /// Measure wallclock per cell; off by default so outputs are reproducible.
  bool record_wallclock = false;
  /// Report the largest RMS error over the coarse grid times instead of the
  /// terminal one.
  bool sup_over_grid = false;
};

/// Runs each scheme on the reference grid ref_dt and on every dt in the
/// list, all driven by the same Brownian paths: coarse noise blocks are the
/// Chen aggregates of the fine ones. The MSE for (scheme, dt) is
/// ((1/N) Σ_i |Y^{i,ref}_T - Y^{i,dt}_T|^2)^{1/2}. Fine and coarse systems
/// are separate particle systems; each sees its own empirical measure.
std::vector<ConvergenceRecord> run_convergence_study(const Model& model, std::span<const SchemeConfig> schemes,
                                                     std::span<const double> dt_list, double ref_dt,
                                                     std::size_t particles, std::uint64_t seed,
                                                     const StudyOptions& options = {});

/// Same protocol with the closed-form solution of the linear benchmark as
/// reference. The Brownian endpoint W_T is accumulated from the noise that
/// drives the scheme on the finest grid `noise_dt`.
std::vector<ConvergenceRecord> run_exact_oracle_study(const LinearBenchmarkModel& model,
                                                      const SchemeConfig& scheme,
                                                      std::span<const double> dt_list, double noise_dt,
                                                      std::size_t paths, std::uint64_t seed);

struct OrderFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_norm = 0.0;
  std::size_t points = 0;
  std::size_t excluded = 0;
};

/// Least squares of log2(MSE) on log2(dt). Records sharing a dt (different
/// seeds) are pooled first as the root mean square of their MSEs; diverged
/// records are excluded and counted. Throws std::invalid_argument with fewer
/// than two distinct finite dt values.
OrderFit fit_order(std::span<const ConvergenceRecord> records);

struct DivergenceStats {
  std::size_t particles = 0;
  std::size_t blown_up = 0;
  double blown_up_fraction = 0.0;
  std::vector<double> first_blow_up_times;
  /// Fraction of all particles that survived and end within `radius` of a
  /// target in their first coordinate.
  double near_target_fraction = 0.0;
};

DivergenceStats divergence_probe(const Model& model, const SchemeConfig& config, std::size_t particles,
                                 std::uint64_t seed, std::span<const double> targets = {},
                                 double radius = 0.5);
/// Fraction of all particles not blown up and within `radius` of a target.
double fraction_near(const ParticleEnsemble& ensemble, std::span<const double> targets, double radius);

struct MomentSeries {
  double dt = 0.0;
  std::vector<double> times;
  std::vector<double> moments;
  std::vector<std::size_t> excluded;
  double supremum = 0.0;
  std::size_t max_excluded = 0;
};

/// (1/N') Σ |Y^i|^p over the N' particles that have not blown up, at every
/// grid time.
MomentSeries moment_monitor(const Model& model, const SchemeConfig& config, std::size_t particles,
                            std::uint64_t seed, double p);

/// Propagation-of-chaos rate: N^-1/2 (d < 4), N^-1/2·ln N (d = 4), N^-2/d (d > 4).
double eta_d(std::size_t d, std::size_t particles);

/// CSV header `model,scheme,taming,dt,ref_dt,N,seed,mse,diverged,wallclock_s`.
void write_convergence_csv(std::ostream& out, std::span<const ConvergenceRecord> records, bool header = true);
std::vector<ConvergenceRecord> read_convergence_csv(std::istream& in);
/// Canonical order: scheme, taming, seed, descending dt.
void sort_records(std::vector<ConvergenceRecord>& records);

}  // namespace mvsim
