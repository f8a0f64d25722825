#include "mvsim/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <fmt/core.h>

namespace mvsim {

namespace {

std::size_t grid_ratio(double coarse, double fine) {
  const double ratio = coarse / fine;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio)
    throw std::invalid_argument(fmt::format("reference step {} does not divide dt {}", fine, coarse));
  return static_cast<std::size_t>(rounded);
}

double rms_difference(const ParticleEnsemble& a, const ParticleEnsemble& b) {
  std::vector<double> squared(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < a.dim; ++c) {
      const double diff = a.states[i * a.dim + c] - b.states[i * b.dim + c];
      sq += diff * diff;
    }
    squared[i] = sq;
  }
  return std::sqrt(exchangeable_mean(squared));
}

/// A coarse-grid system fed with aggregated fine noise.
struct CoupledLevel {
  std::size_t ratio;
  SchemeConfig config;
  Stepper stepper;
  ParticleEnsemble ensemble;
  ChenAccumulator noise;
  double sup_error = 0.0;
};

}  // namespace

std::vector<ConvergenceRecord> run_convergence_study(const Model& model, std::span<const SchemeConfig> schemes,
                                                     std::span<const double> dt_list, double ref_dt,
                                                     std::size_t particles, std::uint64_t seed,
                                                     const StudyOptions& options) {
  if (schemes.empty() || dt_list.empty()) throw std::invalid_argument("empty scheme set or dt list");
  const std::size_t d = model.state_dim();
  const auto initial = sample_initial_states(model.initial_law(), d, particles, seed);
  std::vector<ConvergenceRecord> records;

  for (const auto& base : schemes) {
    const auto start = std::chrono::steady_clock::now();
    SchemeConfig ref_config = base;
    ref_config.dt = ref_dt;
    ref_config.validate(particles);
    const std::size_t fine_steps = ref_config.steps();

    std::vector<CoupledLevel> levels;
    levels.reserve(dt_list.size());
    for (double dt : dt_list) {
      SchemeConfig config = base;
      config.dt = dt;
      config.validate(particles);
      const std::size_t ratio = grid_ratio(dt, ref_dt);
      if (fine_steps % ratio != 0) throw std::invalid_argument("dt does not divide T");
      levels.push_back(CoupledLevel{ratio, config, Stepper(model, config),
                                    ParticleEnsemble::from_states(initial, d), ChenAccumulator{}});
    }

    Stepper ref_stepper(model, ref_config);
    auto reference = ParticleEnsemble::from_states(initial, d);
    for (std::size_t k = 0; k < fine_steps; ++k) {
      const auto noise = sample_step_noise(seed, k, particles, model.noise_dim(), ref_dt, base.wiktorsson_K,
                                           base.include_measure_term);
      ref_stepper.advance(reference, noise);
      for (auto& level : levels) {
        level.noise.push(noise);
        if (level.noise.count() != level.ratio) continue;
        level.stepper.advance(level.ensemble, level.noise.take());
        if (options.sup_over_grid && reference.blown_up_count() == 0 && level.ensemble.blown_up_count() == 0)
          level.sup_error = std::max(level.sup_error, rms_difference(reference, level.ensemble));
      }
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const auto& level = levels[l];
      ConvergenceRecord rec;
      rec.model = model.name();
      rec.scheme = std::string(to_string(base.kind));
      rec.taming = base.effective_taming().label;
      rec.dt = level.config.dt;
      rec.ref_dt = ref_dt;
      rec.particles = particles;
      rec.seed = seed;
      rec.diverged = reference.blown_up_count() > 0 || level.ensemble.blown_up_count() > 0;
      rec.mse = rec.diverged ? 0.0
                : options.sup_over_grid ? level.sup_error
                                        : rms_difference(reference, level.ensemble);
      rec.wallclock_s = options.record_wallclock ? elapsed / static_cast<double>(levels.size()) : 0.0;
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::vector<ConvergenceRecord> run_exact_oracle_study(const LinearBenchmarkModel& model,
                                                      const SchemeConfig& scheme,
                                                      std::span<const double> dt_list, double noise_dt,
                                                      std::size_t paths, std::uint64_t seed) {
  SchemeConfig fine = scheme;
  fine.dt = noise_dt;
  fine.validate(paths);
  const std::size_t fine_steps = fine.steps();
  const auto initial = sample_initial_states(model.initial_law(), 1, paths, seed);

  std::vector<CoupledLevel> levels;
  for (double dt : dt_list) {
    SchemeConfig config = scheme;
    config.dt = dt;
    config.validate(paths);
    levels.push_back(CoupledLevel{grid_ratio(dt, noise_dt), config, Stepper(model, config),
                                  ParticleEnsemble::from_states(initial, 1), ChenAccumulator{}});
  }

  std::vector<double> brownian(paths, 0.0);
  for (std::size_t k = 0; k < fine_steps; ++k) {
    const auto noise = sample_step_noise(seed, k, paths, 1, noise_dt, scheme.wiktorsson_K, false);
    for (std::size_t i = 0; i < paths; ++i) brownian[i] += noise.dW[i];
    for (auto& level : levels) {
      level.noise.push(noise);
      if (level.noise.count() == level.ratio) level.stepper.advance(level.ensemble, level.noise.take());
    }
  }

  auto exact = ParticleEnsemble::from_states(initial, 1);
  for (std::size_t i = 0; i < paths; ++i) exact.states[i] = model.exact_solution(initial[i], scheme.T, brownian[i]);

  std::vector<ConvergenceRecord> records;
  for (const auto& level : levels) {
    ConvergenceRecord rec;
    rec.model = model.name();
    rec.scheme = std::string(to_string(scheme.kind));
    rec.taming = scheme.effective_taming().label;
    rec.dt = level.config.dt;
    rec.ref_dt = 0.0;
    rec.particles = paths;
    rec.seed = seed;
    rec.diverged = level.ensemble.blown_up_count() > 0;
    rec.mse = rec.diverged ? 0.0 : rms_difference(exact, level.ensemble);
    records.push_back(std::move(rec));
  }
  return records;
}

OrderFit fit_order(std::span<const ConvergenceRecord> records) {
  OrderFit fit;
  std::map<double, std::vector<double>> by_dt;
  for (const auto& r : records) {
    if (r.diverged || !std::isfinite(r.mse) || !(r.mse > 0.0)) {
      ++fit.excluded;
      continue;
    }
    by_dt[r.dt].push_back(r.mse);
  }
  if (by_dt.size() < 2) throw std::invalid_argument("fit_order needs at least two finite records");

  std::vector<double> xs, ys;
  for (auto& [dt, values] : by_dt) {
    double sq = 0.0;
    for (double v : values) sq += v * v;
    xs.push_back(std::log2(dt));
    ys.push_back(std::log2(std::sqrt(sq / static_cast<double>(values.size()))));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double res = ys[k] - (fit.intercept + fit.slope * xs[k]);
    rss += res * res;
  }
  fit.residual_norm = std::sqrt(rss);
  fit.points = xs.size();
  return fit;
}

double fraction_near(const ParticleEnsemble& ensemble, std::span<const double> targets, double radius) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    if (ensemble.blown_up[i]) continue;
    const double x = ensemble.states[i * ensemble.dim];
    for (double t : targets) {
      if (std::abs(x - t) < radius) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(ensemble.size());
}

DivergenceStats divergence_probe(const Model& model, const SchemeConfig& config, std::size_t particles,
                                 std::uint64_t seed, std::span<const double> targets, double radius) {
  const auto result = run_simulation(model, config, particles, seed);
  DivergenceStats stats;
  stats.particles = particles;
  stats.blown_up = result.blown_up_count;
  stats.blown_up_fraction = static_cast<double>(result.blown_up_count) / static_cast<double>(particles);
  stats.first_blow_up_times = result.blow_up_times;
  if (!targets.empty()) stats.near_target_fraction = fraction_near(result.final_state, targets, radius);
  return stats;
}

MomentSeries moment_monitor(const Model& model, const SchemeConfig& config, std::size_t particles,
                            std::uint64_t seed, double p) {
  if (!(p >= 2.0)) throw std::invalid_argument("moment order p must be >= 2");
  MomentSeries series;
  series.dt = config.dt;
  std::vector<double> values;
  SimulationOptions options;
  options.observer = [&](const ParticleEnsemble& e) {
    values.clear();
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (e.blown_up[i]) continue;
      double sq = 0.0;
      for (double v : e.particle(i)) sq += v * v;
      values.push_back(std::pow(sq, 0.5 * p));
    }
    const std::size_t excluded = e.size() - values.size();
    const double moment = values.empty() ? std::numeric_limits<double>::quiet_NaN() : exchangeable_mean(values);
    series.times.push_back(e.t);
    series.moments.push_back(moment);
    series.excluded.push_back(excluded);
    if (std::isfinite(moment)) series.supremum = std::max(series.supremum, moment);
    series.max_excluded = std::max(series.max_excluded, excluded);
  };
  run_simulation(model, config, particles, seed, options);
  return series;
}

double eta_d(std::size_t d, std::size_t particles) {
  if (d == 0 || particles < 2) throw std::invalid_argument("eta_d requires d >= 1 and N >= 2");
  const double n = static_cast<double>(particles);
  if (d < 4) return 1.0 / std::sqrt(n);
  if (d == 4) return std::log(n) / std::sqrt(n);
  return std::pow(n, -2.0 / static_cast<double>(d));
}

void write_convergence_csv(std::ostream& out, std::span<const ConvergenceRecord> records, bool header) {
  if (header) out << "model,scheme,taming,dt,ref_dt,N,seed,mse,diverged,wallclock_s\n";
  for (const auto& r : records) {
    out << r.model << ',' << r.scheme << ',' << r.taming << ',' << format_real(r.dt) << ','
        << format_real(r.ref_dt) << ',' << r.particles << ',' << r.seed << ','
        << (r.diverged ? std::string() : format_real(r.mse)) << ',' << (r.diverged ? 1 : 0) << ','
        << format_real(r.wallclock_s) << '\n';
  }
}

std::vector<ConvergenceRecord> read_convergence_csv(std::istream& in) {
  std::vector<ConvergenceRecord> records;
  std::string line;
  if (!std::getline(in, line)) return records;
  if (line != "model,scheme,taming,dt,ref_dt,N,seed,mse,diverged,wallclock_s")
    throw std::runtime_error("convergence CSV has an unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.emplace_back();
    if (fields.size() != 10) throw std::runtime_error(fmt::format("malformed convergence row: {}", line));
    ConvergenceRecord r;
    r.model = fields[0];
    r.scheme = fields[1];
    r.taming = fields[2];
    r.dt = std::stod(fields[3]);
    r.ref_dt = std::stod(fields[4]);
    r.particles = std::stoull(fields[5]);
    r.seed = std::stoull(fields[6]);
    r.diverged = fields[8] == "1";
    r.mse = r.diverged ? 0.0 : std::stod(fields[7]);
    r.wallclock_s = std::stod(fields[9]);
    records.push_back(std::move(r));
  }
  return records;
}

void sort_records(std::vector<ConvergenceRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const ConvergenceRecord& a, const ConvergenceRecord& b) {
    if (a.scheme != b.scheme) return a.scheme < b.scheme;
    if (a.taming != b.taming) return a.taming < b.taming;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.dt > b.dt;
  });
}

}  // namespace mvsim
