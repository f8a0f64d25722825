#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mvsim/rng.hpp"

namespace mvsim {

using ParamMap = std::map<std::string, double>;

/// Read-only view of N particle states (row-major, N x dim) with uniform
/// weights 1/N: the empirical measure the coefficients are evaluated against.
struct MeasureView {
  std::span<const double> states;
  std::size_t dim = 1;

  std::size_t size() const noexcept { return dim == 0 ? 0 : states.size() / dim; }
  std::span<const double> particle(std::size_t i) const { return states.subspan(i * dim, dim); }
};

/// Particle averages shared by every coefficient evaluation within a step.
struct MeasureSummary {
  std::vector<double> coordinate_mean;
  /// (1/N) Σ |y^i|^2, i.e. the squared W2 distance to the point mass at 0.
  double mean_square_norm = 0.0;
  /// Model-specific kernel averages (see each model's kernel_averages).
  std::vector<double> kernel;
};

/// Mean whose value does not depend on the order of `values` (the buffer
/// is sorted in place) and which is exact when all values coincide.
double exchangeable_mean(std::vector<double>& values);

struct PointMass {
  std::vector<double> value;
};
struct IndependentNormals {
  std::vector<double> mean;
  std::vector<double> stddev;
};
struct MultivariateNormal {
  std::vector<double> mean;
  std::vector<double> covariance;  // row-major dim x dim
};
using InitialLaw = std::variant<PointMass, IndependentNormals, MultivariateNormal>;

/// Throws std::invalid_argument on dimension mismatch, negative stddev, or a
/// covariance that is not symmetric positive semi-definite.
void validate_initial_law(const InitialLaw& law, std::size_t dim);

/// N i.i.d. draws (row-major N x dim); particle i uses its own stream so the
/// draw is independent of N and of thread count.
std::vector<double> sample_initial_states(const InitialLaw& law, std::size_t dim, std::size_t n,
                                          std::uint64_t seed);

/// Coefficients of a McKean-Vlasov SDE dX = f(X, L_X) dt + Σ_j g_j(X, L_X) dW^j.
/// Columns are 0-based. Jacobians are row-major d x d with
/// jac[r * d + c] = ∂[g_j]_r / ∂y_c (state) or ∂[g_j]_r / ∂z_c (Lions derivative at z).
class Model {
 public:
  Model(std::string name, std::size_t state_dim, std::size_t noise_dim, ParamMap params,
        InitialLaw initial_law);
  virtual ~Model() = default;

  const std::string& name() const noexcept { return name_; }
  std::size_t state_dim() const noexcept { return state_dim_; }
  std::size_t noise_dim() const noexcept { return noise_dim_; }
  const ParamMap& params() const noexcept { return params_; }
  const InitialLaw& initial_law() const noexcept { return initial_law_; }
  double param(const std::string& key) const { return params_.at(key); }

  virtual std::vector<double> kernel_averages(MeasureView /*measure*/) const { return {}; }
  /// False when no diffusion column depends on the measure, so every Lions
  /// derivative of g vanishes.
  virtual bool measure_dependent_diffusion() const noexcept = 0;

  virtual void drift(std::span<const double> y, const MeasureSummary& mu, std::span<double> out) const = 0;
  virtual void diffusion(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                         std::span<double> out) const = 0;
  virtual void diffusion_jacobian(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                                  std::span<double> jac) const = 0;
  virtual void lions_jacobian(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                              std::span<const double> z, std::span<double> jac) const = 0;

  /// States used by the derivative checker.
  virtual void sample_probe_state(CounterRng& rng, std::span<double> out) const;
  /// True where the closed-form state Jacobian is not valid within `margin`.
  virtual bool near_nonsmooth_point(std::span<const double> /*y*/, double /*margin*/) const {
    return false;
  }

 private:
  std::string name_;
  std::size_t state_dim_;
  std::size_t noise_dim_;
  ParamMap params_;
  InitialLaw initial_law_;
};

/// Mean-field double-well dynamics, d = m = 1.
class DoubleWellModel final : public Model {
 public:
  DoubleWellModel(ParamMap params, InitialLaw law);
  /// {mean cos z, mean sin z}: the sine interaction is
  /// sin(y)·E[cos z] - cos(y)·E[sin z].
  std::vector<double> kernel_averages(MeasureView measure) const override;
  bool measure_dependent_diffusion() const noexcept override { return mu2_ != 0.0; }
  void drift(std::span<const double> y, const MeasureSummary& mu, std::span<double> out) const override;
  void diffusion(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                 std::span<double> out) const override;
  void diffusion_jacobian(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                          std::span<double> jac) const override;
  void lions_jacobian(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                      std::span<const double> z, std::span<double> jac) const override;

 private:
  double lambda1_, lambda2_, mu1_, mu2_;
};

/// Two-dimensional Cucker-Smale flocking model, state (v, x), m = 1.
class CuckerSmaleModel final : public Model {
 public:
  CuckerSmaleModel(ParamMap params, InitialLaw law);
  bool measure_dependent_diffusion() const noexcept override { return sigma2_ != 0.0; }
  void drift(std::span<const double> y, const MeasureSummary& mu, std::span<double> out) const override;
  void diffusion(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                 std::span<double> out) const override;
  void diffusion_jacobian(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                          std::span<double> jac) const override;
  void lions_jacobian(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                      std::span<const double> z, std::span<double> jac) const override;

 private:
  double lambda1_, lambda2_, sigma1_, sigma2_;
};

/// Mean-field FitzHugh-Nagumo neuron model with synaptic variable, d = m = 3.
class FitzHughNagumoModel final : public Model {
 public:
  FitzHughNagumoModel(ParamMap params, InitialLaw law);
  bool measure_dependent_diffusion() const noexcept override { return sigma_j_ != 0.0; }
  void drift(std::span<const double> y, const MeasureSummary& mu, std::span<double> out) const override;
  void diffusion(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                 std::span<double> out) const override;
  void diffusion_jacobian(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                          std::span<double> jac) const override;
  void lions_jacobian(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                      std::span<const double> z, std::span<double> jac) const override;
  /// x3 uniform on [-0.1, 1.1], the other coordinates standard normal.
  void sample_probe_state(CounterRng& rng, std::span<double> out) const override;
  bool near_nonsmooth_point(std::span<const double> y, double margin) const override;

  /// Synaptic noise intensity σ32(x) and its partial derivatives in x1, x3.
  struct Sigma32 {
    double value = 0.0;
    double d_x1 = 0.0;
    double d_x3 = 0.0;
  };
  Sigma32 sigma32(double x1, double x3) const noexcept;

 private:
  double a_, b_, c_, input_, sigma_ext_, v_rev_, a_r_, a_d_, t_max_, lambda_, coupling_, sigma_j_,
      v_t_, noise_scale_, mollifier_, cubic_;
};

/// dX = a·X dt + b·X dW, d = m = 1, no measure dependence. Its exact solution
/// X_T = X_0·exp((a - b^2/2)T + b·W_T) is the strong-error oracle.
class LinearBenchmarkModel final : public Model {
 public:
  LinearBenchmarkModel(ParamMap params, InitialLaw law);
  bool measure_dependent_diffusion() const noexcept override { return false; }
  void drift(std::span<const double> y, const MeasureSummary& mu, std::span<double> out) const override;
  void diffusion(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                 std::span<double> out) const override;
  void diffusion_jacobian(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                          std::span<double> jac) const override;
  void lions_jacobian(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                      std::span<const double> z, std::span<double> jac) const override;

  double exact_solution(double x0, double t, double brownian) const noexcept;

 private:
  double a_, b_;
};

/// Parameters and initial law for a named model configuration.
struct ModelPreset {
  std::string model;
  std::string preset;
  ParamMap params;
  InitialLaw initial_law;
};

/// Known model names: "double_well", "cucker_smale", "fitzhugh_nagumo",
/// "linear_benchmark".
const std::vector<std::string>& model_names();

/// Resolves "model.case" (e.g. "double_well.case2") or a bare model name
/// (its default preset). Throws std::invalid_argument for unknown names.
ModelPreset resolve_preset(std::string_view qualified);

/// Builds a model from a preset with parameter overrides; unknown parameter
/// keys are rejected.
std::unique_ptr<Model> make_model(const ModelPreset& preset);
std::unique_ptr<Model> make_model(std::string_view qualified, const ParamMap& overrides = {});

MeasureSummary summarize_measure(const Model& model, MeasureView measure);

std::vector<double> drift_eval(const Model& model, std::span<const double> y, MeasureView measure);
std::vector<double> diffusion_eval(const Model& model, std::size_t j, std::span<const double> y,
                                   MeasureView measure);
/// ∂_y g_{j1} · g_{j2} at (y, ρ).
std::vector<double> l_y_eval(const Model& model, std::size_t j1, std::size_t j2,
                             std::span<const double> y, MeasureView measure);
/// ∂_ρ g_{j1}(y, ρ, z) · g_{j2}(z, ρ).
std::vector<double> l_rho_eval(const Model& model, std::size_t j1, std::size_t j2,
                               std::span<const double> y, MeasureView measure,
                               std::span<const double> z);

struct DerivativeReport {
  std::string model;
  std::size_t trials = 0;
  std::size_t skipped = 0;
  std::size_t entries_checked = 0;
  double max_error_state = 0.0;
  double max_error_measure = 0.0;
  double tolerance = 0.0;

  bool passed() const noexcept {
    return max_error_state <= tolerance && max_error_measure <= tolerance;
  }
};

/// Compares the closed-form state Jacobians and Lions derivatives against
/// central differences: in y for ∂_y g_j, and by moving one particle z^k by
/// ±h·e_u and scaling the coefficient change by N/(2h) for ∂_ρ g_j.
/// Errors are |fd - exact| / max(1, |exact|). Trials whose probe state is
/// near a non-smooth point of the model are skipped and counted.
DerivativeReport check_derivatives_fd(const Model& model, std::size_t trial_count,
                                      std::uint64_t rng_seed, double tol);

}  // namespace mvsim
