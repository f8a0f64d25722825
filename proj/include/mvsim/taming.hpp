#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mvsim {

/// Operator families Γ(·, Δt) that modify a coefficient value before it
/// enters the scheme.
enum class TamingKind { identity, tanh, sine, tamed };

std::string_view to_string(TamingKind kind) noexcept;
/// Throws std::invalid_argument for unknown names.
TamingKind parse_taming_kind(std::string_view name);

/// One operator slot together with its declared exponents: the bound
/// |Γ(v)| <= C·Δt^-zeta and the consistency bound |Γ(v) - v| <= C·Δt^delta·|v|^gamma.
struct TamingSlot {
  TamingKind kind = TamingKind::identity;
  double zeta = 1.0;
  double delta = 1.0;
  double gamma = 2.0;

  bool bounded() const noexcept { return kind != TamingKind::identity; }
};

/// The four slots applied to f, g_j, L_y g and L_rho g respectively.
struct TamingSpec {
  std::array<TamingSlot, 4> slots{};
  std::string label = "identity";

  /// All four slots of one kind (TanhM, SineM, TameM, or identity).
  static TamingSpec uniform(TamingKind kind);
  /// tanh / sine / tamed / tanh.
  static TamingSpec mixed();
  /// Resolves "TanhM", "SineM", "TameM", "MixM" or "identity".
  static TamingSpec named(std::string_view family);

  const TamingSlot& slot(std::size_t l) const { return slots.at(l); }
  bool any_identity() const noexcept;
  /// Throws std::invalid_argument if a declared exponent is outside its
  /// admissible range (zeta > 0, delta >= 1/2 or >= 1 for the first two
  /// slots, gamma >= 1).
  void validate() const;
};

/// Γ applied to a copy of `value`. tanh and sine act componentwise as
/// Δt^-1·h(Δt·v_i); tamed uses the Euclidean norm of the whole vector.
/// Throws std::invalid_argument on non-finite input or dt <= 0.
std::vector<double> gamma_apply(const TamingSlot& slot, std::span<const double> value, double dt);

/// In-place variant for the stepping loop. Returns false, leaving `value`
/// unspecified, when the input contains a non-finite entry.
bool gamma_apply_in_place(TamingKind kind, std::span<double> value, double dt) noexcept;

/// Outcome of the sampled inequality check for one slot.
struct TamingReport {
  TamingKind kind = TamingKind::identity;
  bool bounded = true;
  std::size_t samples = 0;
  std::size_t checks = 0;
  std::size_t bound_violations = 0;
  std::size_t difference_violations = 0;
  /// Components with |Δt·v_i| > 1, i.e. outside the cubic-remainder regime.
  std::size_t saturated_components = 0;
  double worst_bound_ratio = 0.0;
  double worst_difference_ratio = 0.0;
  std::string diagnostic;

  bool passed() const noexcept {
    return bounded && bound_violations == 0 && difference_violations == 0;
  }
};

/// Samples vectors of length 1..4 whose components are log-uniform in
/// magnitude on [1/magnitude_range, magnitude_range] with random sign and
/// checks, for every dt in the grid,
///   (a) |Γ(v)| <= min(C·Δt^-zeta, |v|)
///   (b) |Γ(v) - v| <= C·Δt^delta·|v|^gamma
/// with C = 1 for tamed and C = sqrt(length) for the componentwise kinds.
/// Ratios are reported as lhs / rhs; a relative round-off slack of 1e-12 is
/// allowed before a sample counts as a violation.
TamingReport verify_taming_assumptions(const TamingSlot& slot, std::size_t sample_count,
                                       std::span<const double> dt_grid, double magnitude_range,
                                       std::uint64_t rng_seed);

}  // namespace mvsim
