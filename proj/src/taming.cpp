#include "mvsim/taming.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/core.h>

#include "mvsim/rng.hpp"

namespace mvsim {

namespace {

/// Scaled so that finite vectors near the overflow limit keep a finite norm.
double euclidean_norm(std::span<const double> v) noexcept {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double sum = 0.0;
  for (double x : v) sum += (x / scale) * (x / scale);
  return scale * std::sqrt(sum);
}

constexpr double kRoundoffSlack = 1e-12;

}  // namespace

std::string_view to_string(TamingKind kind) noexcept {
  switch (kind) {
    case TamingKind::identity: return "identity";
    case TamingKind::tanh: return "tanh";
    case TamingKind::sine: return "sine";
    case TamingKind::tamed: return "tamed";
  }
  return "unknown";
}

TamingKind parse_taming_kind(std::string_view name) {
  if (name == "identity") return TamingKind::identity;
  if (name == "tanh") return TamingKind::tanh;
  if (name == "sine") return TamingKind::sine;
  if (name == "tamed") return TamingKind::tamed;
  throw std::invalid_argument(fmt::format("unknown taming kind '{}'", name));
}

TamingSpec TamingSpec::uniform(TamingKind kind) {
  TamingSpec spec;
  for (auto& slot : spec.slots) slot.kind = kind;
  switch (kind) {
    case TamingKind::identity: spec.label = "identity"; break;
    case TamingKind::tanh: spec.label = "TanhM"; break;
    case TamingKind::sine: spec.label = "SineM"; break;
    case TamingKind::tamed: spec.label = "TameM"; break;
  }
  return spec;
}

TamingSpec TamingSpec::mixed() {
  TamingSpec spec;
  spec.slots[0].kind = TamingKind::tanh;
  spec.slots[1].kind = TamingKind::sine;
  spec.slots[2].kind = TamingKind::tamed;
  spec.slots[3].kind = TamingKind::tanh;
  spec.label = "MixM";
  return spec;
}

TamingSpec TamingSpec::named(std::string_view family) {
  if (family == "TanhM") return uniform(TamingKind::tanh);
  if (family == "SineM") return uniform(TamingKind::sine);
  if (family == "TameM") return uniform(TamingKind::tamed);
  if (family == "MixM") return mixed();
  if (family == "identity") return uniform(TamingKind::identity);
  throw std::invalid_argument(fmt::format("unknown taming family '{}'", family));
}

bool TamingSpec::any_identity() const noexcept {
  return std::any_of(slots.begin(), slots.end(), [](const TamingSlot& s) { return !s.bounded(); });
}

void TamingSpec::validate() const {
  for (std::size_t l = 0; l < slots.size(); ++l) {
    const auto& s = slots[l];
    const double min_delta = l < 2 ? 1.0 : 0.5;
    if (!(s.zeta > 0.0)) throw std::invalid_argument(fmt::format("slot {}: zeta must be > 0", l + 1));
    if (!(s.delta >= min_delta))
      throw std::invalid_argument(fmt::format("slot {}: delta must be >= {}", l + 1, min_delta));
    if (!(s.gamma >= 1.0)) throw std::invalid_argument(fmt::format("slot {}: gamma must be >= 1", l + 1));
  }
}

bool gamma_apply_in_place(TamingKind kind, std::span<double> value, double dt) noexcept {
  for (double x : value) {
    if (!std::isfinite(x)) return false;
  }
  switch (kind) {
    case TamingKind::identity:
      break;
    case TamingKind::tanh:
      for (double& x : value) x = std::tanh(dt * x) / dt;
      break;
    case TamingKind::sine:
      for (double& x : value) x = std::sin(dt * x) / dt;
      break;
    case TamingKind::tamed: {
      const double scale = 1.0 + dt * euclidean_norm(value);
      if (!std::isfinite(scale)) return false;
      for (double& x : value) x /= scale;
      break;
    }
  }
  return true;
}

std::vector<double> gamma_apply(const TamingSlot& slot, std::span<const double> value, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument(fmt::format("taming step must be positive and finite, got {}", dt));
  }
  std::vector<double> out(value.begin(), value.end());
  if (!gamma_apply_in_place(slot.kind, out, dt)) {
    throw std::invalid_argument(
        fmt::format("non-finite input to {} taming operator", to_string(slot.kind)));
  }
  return out;
}

TamingReport verify_taming_assumptions(const TamingSlot& slot, std::size_t sample_count,
                                       std::span<const double> dt_grid, double magnitude_range,
                                       std::uint64_t rng_seed) {
  if (sample_count == 0) throw std::invalid_argument("sample_count must be >= 1");
  if (dt_grid.empty()) throw std::invalid_argument("dt_grid must be nonempty");
  if (!(magnitude_range > 1.0)) throw std::invalid_argument("magnitude_range must exceed 1");

  TamingReport report;
  report.kind = slot.kind;
  report.samples = sample_count;
  if (!slot.bounded()) {
    report.bounded = false;
    report.diagnostic = "unbounded: identity operator admits no dt^-zeta bound; bound (a) is unverifiable";
    return report;
  }

  const bool componentwise = slot.kind != TamingKind::tamed;
  const double log_lo = -std::log(magnitude_range);
  const double log_hi = std::log(magnitude_range);

  std::array<double, 4> v{};
  std::array<double, 4> out{};
  CounterRng rng(StreamKey{rng_seed, kValidationStep, static_cast<std::uint32_t>(slot.kind)});
  for (std::size_t s = 0; s < sample_count; ++s) {
    const std::size_t len = 1 + rng() % 4;
    for (std::size_t i = 0; i < len; ++i) {
      const double magnitude = std::exp(log_lo + (log_hi - log_lo) * rng.uniform());
      v[i] = (rng() & 1u) ? magnitude : -magnitude;
    }
    const std::span<const double> input(v.data(), len);
    const double norm_v = euclidean_norm(input);
    const double c = componentwise ? std::sqrt(static_cast<double>(len)) : 1.0;

    for (double dt : dt_grid) {
      std::copy_n(v.begin(), len, out.begin());
      const std::span<double> result(out.data(), len);
      gamma_apply_in_place(slot.kind, result, dt);

      double diff_sq = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double d = result[i] - v[i];
        diff_sq += d * d;
        if (std::abs(dt * v[i]) > 1.0) ++report.saturated_components;
      }
      const double norm_out = euclidean_norm(result);

      const double bound = std::min(c * std::pow(dt, -slot.zeta), norm_v);
      const double bound_ratio = norm_out / bound;
      const double diff_rhs = c * std::pow(dt, slot.delta) * std::pow(norm_v, slot.gamma);
      // Subtracting Γ(v) from v carries an absolute error of a few ulps of
      // |v|, which dominates the true difference when Δt·|v| is tiny.
      const double cancellation = 4.0 * std::numeric_limits<double>::epsilon() * norm_v;
      const double diff_ratio = std::max(0.0, std::sqrt(diff_sq) - cancellation) / diff_rhs;

      report.worst_bound_ratio = std::max(report.worst_bound_ratio, bound_ratio);
      report.worst_difference_ratio = std::max(report.worst_difference_ratio, diff_ratio);
      if (bound_ratio > 1.0 + kRoundoffSlack) ++report.bound_violations;
      if (diff_ratio > 1.0 + kRoundoffSlack) ++report.difference_violations;
      ++report.checks;
    }
  }
  report.diagnostic = report.passed() ? "ok" : "inequality violated";
  return report;
}

}  // namespace mvsim
