#include "mvsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/core.h>

namespace mvsim {

std::string_view to_string(SchemeKind kind) noexcept {
  switch (kind) {
    case SchemeKind::classical_milstein: return "classical_milstein";
    case SchemeKind::taming_milstein: return "taming_milstein";
    case SchemeKind::tamed_euler: return "tamed_euler";
  }
  return "unknown";
}

SchemeKind parse_scheme_kind(std::string_view name) {
  if (name == "classical_milstein") return SchemeKind::classical_milstein;
  if (name == "taming_milstein") return SchemeKind::taming_milstein;
  if (name == "tamed_euler") return SchemeKind::tamed_euler;
  throw std::invalid_argument(fmt::format("unknown scheme kind '{}'", name));
}

std::size_t SchemeConfig::steps() const {
  if (!(dt > 0.0) || !(T > 0.0)) throw std::invalid_argument("dt and T must be positive");
  const double ratio = T / dt;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) * dt > 1e-12)
    throw std::invalid_argument(fmt::format("dt = {} does not divide T = {}", dt, T));
  return static_cast<std::size_t>(rounded);
}

TamingSpec SchemeConfig::effective_taming() const {
  return kind == SchemeKind::classical_milstein ? TamingSpec::uniform(TamingKind::identity) : taming;
}

void SchemeConfig::validate(std::size_t particles) const {
  if (particles == 0) throw std::invalid_argument("particle count must be positive");
  steps();
  if (!(blow_up_threshold > 0.0)) throw std::invalid_argument("blow_up_threshold must be positive");
  if (wiktorsson_K == 0) throw std::invalid_argument("wiktorsson_K must be >= 1");
  if (kind != SchemeKind::classical_milstein) {
    taming.validate();
    if (taming.any_identity())
      throw std::invalid_argument("identity taming is only allowed for classical_milstein");
  }
  if (include_measure_term && particles > cross_N_ceiling)
    throw std::invalid_argument(fmt::format(
        "include_measure_term requires N <= cross_N_ceiling ({}), got N = {}", cross_N_ceiling, particles));
}

ParticleEnsemble ParticleEnsemble::from_states(std::vector<double> states, std::size_t dim, double t) {
  if (dim == 0 || states.size() % dim != 0) throw std::invalid_argument("state buffer is not N x dim");
  ParticleEnsemble e;
  e.t = t;
  e.dim = dim;
  e.states = std::move(states);
  e.blown_up.assign(e.size(), 0);
  e.blow_up_time.assign(e.size(), std::numeric_limits<double>::quiet_NaN());
  return e;
}

std::size_t ParticleEnsemble::blown_up_count() const noexcept {
  return static_cast<std::size_t>(std::count(blown_up.begin(), blown_up.end(), std::uint8_t{1}));
}

MeasureSummary interaction_functionals(const ParticleEnsemble& ensemble, const Model& model) {
  return summarize_measure(model, ensemble.measure());
}

double wasserstein2_to_origin(const MeasureSummary& summary) noexcept {
  return std::sqrt(summary.mean_square_norm);
}

Stepper::Stepper(const Model& model, SchemeConfig config)
    : model_(model), config_(std::move(config)), taming_(config_.effective_taming()) {}

void Stepper::advance(ParticleEnsemble& ensemble, const NoiseBlock& noise) {
  const std::size_t n = ensemble.size();
  const std::size_t d = model_.state_dim();
  const std::size_t m = model_.noise_dim();
  const double dt = config_.dt;
  if (ensemble.dim != d) throw std::invalid_argument("ensemble dimension does not match model");
  if (noise.particles != n || noise.noise_dim != m)
    throw std::invalid_argument("noise block shape does not match ensemble");
  if (std::abs(noise.h - dt) > 1e-9 * dt)
    throw std::invalid_argument(fmt::format("noise step {} does not match dt {}", noise.h, dt));
  const bool milstein = config_.kind != SchemeKind::tamed_euler;
  const bool measure_term = milstein && config_.include_measure_term && model_.measure_dependent_diffusion();
  if (config_.include_measure_term && !noise.has_cross())
    throw std::invalid_argument("measure correction requested but noise block has no cross integrals");

  // Phase 1: functionals of the frozen measure.
  const MeasureSummary mu = interaction_functionals(ensemble, model_);
  if (measure_term) {
    column_cache_.resize(n * m * d);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < m; ++j)
        model_.diffusion(j, ensemble.particle(k), mu,
                         std::span<double>(column_cache_).subspan((k * m + j) * d, d));
  }

  // Phase 2: per-particle updates into a separate buffer.
  next_ = ensemble.states;
  const auto& slots = taming_.slots;
  const double threshold = config_.blow_up_threshold;
  const double t_next = ensemble.t + dt;
  const long long count = static_cast<long long>(n);

#pragma omp parallel
  {
    std::vector<double> f(d), columns(m * d), tamed(d), jac(d * d), lifted(d), increment(d);
#pragma omp for schedule(static)
    for (long long ii = 0; ii < count; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      if (ensemble.blown_up[i]) continue;
      const auto y = ensemble.particle(i);
      bool finite = true;

      model_.drift(y, mu, f);
      finite &= gamma_apply_in_place(slots[0].kind, f, dt);
      for (std::size_t r = 0; r < d; ++r) increment[r] = f[r] * dt;

      for (std::size_t j = 0; j < m; ++j) {
        const auto g = std::span<double>(columns).subspan(j * d, d);
        model_.diffusion(j, y, mu, g);
        std::copy(g.begin(), g.end(), tamed.begin());
        finite &= gamma_apply_in_place(slots[1].kind, tamed, dt);
        const double dw = noise.increment(i, j);
        for (std::size_t r = 0; r < d; ++r) increment[r] += tamed[r] * dw;
      }

      if (milstein) {
        for (std::size_t j1 = 0; j1 < m; ++j1) {
          model_.diffusion_jacobian(j1, y, mu, jac);
          for (std::size_t j2 = 0; j2 < m; ++j2) {
            const double integral = noise.own(i, j2, j1);
            const auto g2 = std::span<const double>(columns).subspan(j2 * d, d);
            for (std::size_t r = 0; r < d; ++r) {
              double acc = 0.0;
              for (std::size_t c = 0; c < d; ++c) acc += jac[r * d + c] * g2[c];
              lifted[r] = acc;
            }
            finite &= gamma_apply_in_place(slots[2].kind, lifted, dt);
            for (std::size_t r = 0; r < d; ++r) increment[r] += lifted[r] * integral;
          }
        }
      }

      if (measure_term) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t k = 0; k < n; ++k) {
          const auto z = ensemble.particle(k);
          for (std::size_t j1 = 0; j1 < m; ++j1) {
            model_.lions_jacobian(j1, y, mu, z, jac);
            for (std::size_t j2 = 0; j2 < m; ++j2) {
              const double integral = noise.cross(k, j2, i, j1);
              const auto gz = std::span<const double>(column_cache_).subspan((k * m + j2) * d, d);
              for (std::size_t r = 0; r < d; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < d; ++c) acc += jac[r * d + c] * gz[c];
                lifted[r] = acc;
              }
              finite &= gamma_apply_in_place(slots[3].kind, lifted, dt);
              for (std::size_t r = 0; r < d; ++r) increment[r] += inv_n * lifted[r] * integral;
            }
          }
        }
      }

      double norm_sq = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        const double v = y[r] + increment[r];
        next_[i * d + r] = v;
        norm_sq += v * v;
      }
      const double norm = std::sqrt(norm_sq);
      if (!finite || !std::isfinite(norm) || norm > threshold) {
        // Freeze on the blow-up sphere along the last finite direction.
        const bool use_new = finite && std::isfinite(norm) && norm > 0.0;
        double base_sq = 0.0;
        for (double v : y) base_sq += v * v;
        const double base = std::sqrt(base_sq);
        for (std::size_t r = 0; r < d; ++r) {
          double dir;
          if (use_new) {
            dir = next_[i * d + r] / norm;
          } else if (base > 0.0) {
            dir = y[r] / base;
          } else {
            dir = r == 0 ? 1.0 : 0.0;
          }
          next_[i * d + r] = threshold * dir;
        }
        ensemble.blown_up[i] = 1;
        ensemble.blow_up_time[i] = t_next;
      }
    }
  }

  // Phase 3: commit.
  ensemble.states.swap(next_);
  ensemble.t = t_next;
}

ParticleEnsemble step_particles(const ParticleEnsemble& ensemble, const NoiseBlock& noise, const Model& model,
                                const SchemeConfig& config) {
  ParticleEnsemble next = ensemble;
  Stepper stepper(model, config);
  stepper.advance(next, noise);
  return next;
}

namespace {

Snapshot take_snapshot(const ParticleEnsemble& e) { return Snapshot{e.t, e.states, e.blown_up}; }

}  // namespace

SimulationResult run_simulation(const Model& model, const SchemeConfig& config, std::size_t particles,
                                std::uint64_t seed, const SimulationOptions& options) {
  config.validate(particles);
  const std::size_t steps = config.steps();
  std::vector<std::size_t> snapshot_steps;
  for (double t : options.snapshot_times) {
    if (t < 0.0 || t > config.T + 1e-12)
      throw std::invalid_argument(fmt::format("snapshot time {} outside [0, T]", t));
    snapshot_steps.push_back(static_cast<std::size_t>(std::llround(t / config.dt)));
  }
  std::sort(snapshot_steps.begin(), snapshot_steps.end());
  snapshot_steps.erase(std::unique(snapshot_steps.begin(), snapshot_steps.end()), snapshot_steps.end());

  const std::size_t d = model.state_dim();
  SimulationResult result;
  result.final_state =
      ParticleEnsemble::from_states(sample_initial_states(model.initial_law(), d, particles, seed), d);
  auto& ensemble = result.final_state;
  auto next_snapshot = snapshot_steps.begin();
  auto record = [&](std::size_t step) {
    if (options.observer) options.observer(ensemble);
    if (next_snapshot != snapshot_steps.end() && *next_snapshot == step) {
      result.snapshots.push_back(take_snapshot(ensemble));
      ++next_snapshot;
    }
  };

  Stepper stepper(model, config);
  record(0);
  for (std::size_t k = 0; k < steps; ++k) {
    const auto noise = sample_step_noise(seed, k, particles, model.noise_dim(), config.dt, config.wiktorsson_K,
                                         config.include_measure_term);
    stepper.advance(ensemble, noise);
    // Accumulated t drifts by rounding; pin it to the grid.
    ensemble.t = static_cast<double>(k + 1) * config.dt;
    ++result.steps_taken;
    record(k + 1);
    if (ensemble.blown_up_count() == particles) {
      result.terminated_early = k + 1 < steps;
      break;
    }
  }

  result.blown_up_count = ensemble.blown_up_count();
  for (std::size_t i = 0; i < particles; ++i)
    if (ensemble.blown_up[i]) result.blow_up_times.push_back(ensemble.blow_up_time[i]);
  std::sort(result.blow_up_times.begin(), result.blow_up_times.end());
  return result;
}

std::string format_real(double value) { return fmt::format("{}", value); }

void write_snapshot_csv(std::ostream& out, std::span<const Snapshot> snapshots, std::size_t dim) {
  out << "time,particle";
  for (std::size_t c = 0; c < dim; ++c) out << ",coord_" << c;
  out << ",blown_up\n";
  for (const auto& snap : snapshots) {
    const std::size_t n = snap.states.size() / dim;
    for (std::size_t i = 0; i < n; ++i) {
      out << format_real(snap.t) << ',' << i;
      for (std::size_t c = 0; c < dim; ++c) out << ',' << format_real(snap.states[i * dim + c]);
      out << ',' << static_cast<int>(snap.blown_up[i]) << '\n';
    }
  }
}

}  // namespace mvsim
