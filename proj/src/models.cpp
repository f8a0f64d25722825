#include "mvsim/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <fmt/core.h>

namespace mvsim {

namespace {

void require_dim(std::span<const double> y, std::size_t d, std::string_view what) {
  if (y.size() != d) {
    throw std::invalid_argument(fmt::format("{}: expected dimension {}, got {}", what, d, y.size()));
  }
}

void require_column(std::size_t j, std::size_t m) {
  if (j >= m) throw std::invalid_argument(fmt::format("diffusion column {} out of range (m = {})", j, m));
}

double take(const ParamMap& params, const char* key) {
  const auto it = params.find(key);
  if (it == params.end()) throw std::invalid_argument(fmt::format("missing model parameter '{}'", key));
  return it->second;
}

}  // namespace

double exchangeable_mean(std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty ensemble");
  std::sort(values.begin(), values.end());
  const double pivot = values[values.size() / 2];
  double deviation = 0.0;
  for (double v : values) deviation += v - pivot;
  return pivot + deviation / static_cast<double>(values.size());
}

void validate_initial_law(const InitialLaw& law, std::size_t dim) {
  std::visit(
      [dim](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, PointMass>) {
          if (l.value.size() != dim) throw std::invalid_argument("initial point mass has wrong dimension");
        } else if constexpr (std::is_same_v<T, IndependentNormals>) {
          if (l.mean.size() != dim || l.stddev.size() != dim)
            throw std::invalid_argument("initial normal law has wrong dimension");
          for (double s : l.stddev)
            if (!(s >= 0.0)) throw std::invalid_argument("initial normal stddev must be >= 0");
        } else {
          if (l.mean.size() != dim || l.covariance.size() != dim * dim)
            throw std::invalid_argument("initial multivariate normal has wrong dimension");
          const Eigen::Map<const Eigen::MatrixXd> cov(l.covariance.data(), dim, dim);
          if (!cov.isApprox(cov.transpose(), 1e-12))
            throw std::invalid_argument("initial covariance is not symmetric");
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
          if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff()))
            throw std::invalid_argument("initial covariance is not positive semi-definite");
        }
      },
      law);
}

std::vector<double> sample_initial_states(const InitialLaw& law, std::size_t dim, std::size_t n,
                                          std::uint64_t seed) {
  validate_initial_law(law, dim);
  std::vector<double> states(n * dim);
  Eigen::MatrixXd factor;
  if (const auto* mvn = std::get_if<MultivariateNormal>(&law)) {
    const Eigen::Map<const Eigen::MatrixXd> cov(mvn->covariance.data(), dim, dim);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    factor = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  std::vector<double> z(dim);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(StreamKey{seed, kInitialStateStep, static_cast<std::uint32_t>(i)});
    auto out = std::span<double>(states).subspan(i * dim, dim);
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, PointMass>) {
            std::copy(l.value.begin(), l.value.end(), out.begin());
          } else if constexpr (std::is_same_v<T, IndependentNormals>) {
            for (std::size_t c = 0; c < dim; ++c) out[c] = l.mean[c] + l.stddev[c] * rng.normal();
          } else {
            for (auto& v : z) v = rng.normal();
            for (std::size_t r = 0; r < dim; ++r) {
              double acc = l.mean[r];
              for (std::size_t c = 0; c < dim; ++c) acc += factor(r, c) * z[c];
              out[r] = acc;
            }
          }
        },
        law);
  }
  return states;
}

Model::Model(std::string name, std::size_t state_dim, std::size_t noise_dim, ParamMap params,
             InitialLaw initial_law)
    : name_(std::move(name)),
      state_dim_(state_dim),
      noise_dim_(noise_dim),
      params_(std::move(params)),
      initial_law_(std::move(initial_law)) {
  validate_initial_law(initial_law_, state_dim_);
}

void Model::sample_probe_state(CounterRng& rng, std::span<double> out) const {
  for (double& v : out) v = rng.normal();
}

// ---------------------------------------------------------------------------
// Double well

DoubleWellModel::DoubleWellModel(ParamMap params, InitialLaw law)
    : Model("double_well", 1, 1, std::move(params), std::move(law)),
      lambda1_(take(this->params(), "lambda1")),
      lambda2_(take(this->params(), "lambda2")),
      mu1_(take(this->params(), "mu1")),
      mu2_(take(this->params(), "mu2")) {}

std::vector<double> DoubleWellModel::kernel_averages(MeasureView measure) const {
  std::vector<double> cosines(measure.size());
  std::vector<double> sines(measure.size());
  for (std::size_t k = 0; k < measure.size(); ++k) {
    const double z = measure.particle(k)[0];
    cosines[k] = std::cos(z);
    sines[k] = std::sin(z);
  }
  return {exchangeable_mean(cosines), exchangeable_mean(sines)};
}

void DoubleWellModel::drift(std::span<const double> y, const MeasureSummary& mu, std::span<double> out) const {
  const double x = y[0];
  out[0] = lambda1_ * x * (1.0 - x * x) + lambda2_ * mu.coordinate_mean[0];
}

void DoubleWellModel::diffusion(std::size_t, std::span<const double> y, const MeasureSummary& mu,
                                std::span<double> out) const {
  const double x = y[0];
  const double interaction = std::sin(x) * mu.kernel[0] - std::cos(x) * mu.kernel[1];
  out[0] = mu1_ * (1.0 - x * x) + mu2_ * interaction;
}

void DoubleWellModel::diffusion_jacobian(std::size_t, std::span<const double> y, const MeasureSummary& mu,
                                         std::span<double> jac) const {
  const double x = y[0];
  const double d_interaction = std::cos(x) * mu.kernel[0] + std::sin(x) * mu.kernel[1];
  jac[0] = -2.0 * mu1_ * x + mu2_ * d_interaction;
}

void DoubleWellModel::lions_jacobian(std::size_t, std::span<const double> y, const MeasureSummary&,
                                     std::span<const double> z, std::span<double> jac) const {
  jac[0] = -mu2_ * std::cos(y[0] - z[0]);
}

// ---------------------------------------------------------------------------
// Cucker-Smale

CuckerSmaleModel::CuckerSmaleModel(ParamMap params, InitialLaw law)
    : Model("cucker_smale", 2, 1, std::move(params), std::move(law)),
      lambda1_(take(this->params(), "lambda1")),
      lambda2_(take(this->params(), "lambda2")),
      sigma1_(take(this->params(), "sigma1")),
      sigma2_(take(this->params(), "sigma2")) {}

void CuckerSmaleModel::drift(std::span<const double> y, const MeasureSummary& mu, std::span<double> out) const {
  const double v = y[0];
  out[0] = -lambda1_ * v * v * v + 1.0 + lambda2_ * (v - mu.coordinate_mean[0]);
  out[1] = v;
}

void CuckerSmaleModel::diffusion(std::size_t, std::span<const double> y, const MeasureSummary& mu,
                                 std::span<double> out) const {
  const double v = y[0];
  out[0] = sigma1_ * v * v + sigma2_ * (v - mu.coordinate_mean[0]);
  out[1] = 0.0;
}

void CuckerSmaleModel::diffusion_jacobian(std::size_t, std::span<const double> y, const MeasureSummary&,
                                          std::span<double> jac) const {
  jac[0] = 2.0 * sigma1_ * y[0] + sigma2_;
  jac[1] = 0.0;
  jac[2] = 0.0;
  jac[3] = 0.0;
}

void CuckerSmaleModel::lions_jacobian(std::size_t, std::span<const double>, const MeasureSummary&,
                                      std::span<const double>, std::span<double> jac) const {
  jac[0] = -sigma2_;
  jac[1] = 0.0;
  jac[2] = 0.0;
  jac[3] = 0.0;
}

// ---------------------------------------------------------------------------
// FitzHugh-Nagumo

FitzHughNagumoModel::FitzHughNagumoModel(ParamMap params, InitialLaw law)
    : Model("fitzhugh_nagumo", 3, 3, std::move(params), std::move(law)),
      a_(take(this->params(), "a")),
      b_(take(this->params(), "b")),
      c_(take(this->params(), "c")),
      input_(take(this->params(), "I")),
      sigma_ext_(take(this->params(), "sigma_ext")),
      v_rev_(take(this->params(), "V_rev")),
      a_r_(take(this->params(), "a_r")),
      a_d_(take(this->params(), "a_d")),
      t_max_(take(this->params(), "T_max")),
      lambda_(take(this->params(), "lambda")),
      coupling_(take(this->params(), "J")),
      sigma_j_(take(this->params(), "sigma_J")),
      v_t_(take(this->params(), "V_T")),
      noise_scale_(take(this->params(), "Gamma")),
      mollifier_(take(this->params(), "Lambda")),
      cubic_(take(this->params(), "cubic")) {}

FitzHughNagumoModel::Sigma32 FitzHughNagumoModel::sigma32(double x1, double x3) const noexcept {
  Sigma32 out;
  if (!(x3 > 0.0 && x3 < 1.0)) return out;
  const double gate = 1.0 / (1.0 + std::exp(-lambda_ * (x1 - v_t_)));
  const double s = a_r_ * t_max_ * (1.0 - x3) * gate + a_d_ * x3;
  if (!(s > 0.0)) return out;
  const double ds_dx1 = a_r_ * t_max_ * (1.0 - x3) * lambda_ * gate * (1.0 - gate);
  const double ds_dx3 = -a_r_ * t_max_ * gate + a_d_;
  const double u = 2.0 * x3 - 1.0;
  const double w = 1.0 - u * u;
  const double q = noise_scale_ * std::exp(-mollifier_ / w);
  const double dq_dx3 = q * mollifier_ * (-4.0 * u) / (w * w);
  const double root = std::sqrt(s);
  out.value = root * q;
  out.d_x1 = q * ds_dx1 / (2.0 * root);
  out.d_x3 = q * ds_dx3 / (2.0 * root) + root * dq_dx3;
  return out;
}

void FitzHughNagumoModel::drift(std::span<const double> y, const MeasureSummary& mu,
                                std::span<double> out) const {
  const double x1 = y[0], x2 = y[1], x3 = y[2];
  const double mean_x3 = mu.coordinate_mean[2];
  out[0] = x1 - cubic_ * x1 * x1 * x1 - x2 + input_ - coupling_ * (x1 - v_rev_) * mean_x3;
  out[1] = c_ * (x1 + a_ - b_ * x2);
  out[2] = a_r_ * t_max_ * (1.0 - x3) / (1.0 + std::exp(-lambda_ * (x1 - v_t_))) - a_d_ * x3;
}

void FitzHughNagumoModel::diffusion(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                                    std::span<double> out) const {
  out[0] = out[1] = out[2] = 0.0;
  switch (j) {
    case 0: out[0] = sigma_ext_; break;
    case 1: out[2] = sigma32(y[0], y[2]).value; break;
    case 2: out[0] = -sigma_j_ * (y[0] - v_rev_) * mu.coordinate_mean[2]; break;
    default: require_column(j, 3);
  }
}

void FitzHughNagumoModel::diffusion_jacobian(std::size_t j, std::span<const double> y, const MeasureSummary& mu,
                                             std::span<double> jac) const {
  std::fill(jac.begin(), jac.end(), 0.0);
  switch (j) {
    case 0: break;
    case 1: {
      const auto s = sigma32(y[0], y[2]);
      jac[2 * 3 + 0] = s.d_x1;
      jac[2 * 3 + 2] = s.d_x3;
      break;
    }
    case 2: jac[0] = -sigma_j_ * mu.coordinate_mean[2]; break;
    default: require_column(j, 3);
  }
}

void FitzHughNagumoModel::lions_jacobian(std::size_t j, std::span<const double> y, const MeasureSummary&,
                                         std::span<const double>, std::span<double> jac) const {
  std::fill(jac.begin(), jac.end(), 0.0);
  require_column(j, 3);
  if (j == 2) jac[0 * 3 + 2] = -sigma_j_ * (y[0] - v_rev_);
}

void FitzHughNagumoModel::sample_probe_state(CounterRng& rng, std::span<double> out) const {
  out[0] = rng.normal();
  out[1] = rng.normal();
  out[2] = -0.1 + 1.2 * rng.uniform();
}

bool FitzHughNagumoModel::near_nonsmooth_point(std::span<const double> y, double margin) const {
  return std::abs(y[2]) < margin || std::abs(1.0 - y[2]) < margin;
}

// ---------------------------------------------------------------------------
// Linear benchmark

LinearBenchmarkModel::LinearBenchmarkModel(ParamMap params, InitialLaw law)
    : Model("linear_benchmark", 1, 1, std::move(params), std::move(law)),
      a_(take(this->params(), "a")),
      b_(take(this->params(), "b")) {}

void LinearBenchmarkModel::drift(std::span<const double> y, const MeasureSummary&, std::span<double> out) const {
  out[0] = a_ * y[0];
}

void LinearBenchmarkModel::diffusion(std::size_t, std::span<const double> y, const MeasureSummary&,
                                     std::span<double> out) const {
  out[0] = b_ * y[0];
}

void LinearBenchmarkModel::diffusion_jacobian(std::size_t, std::span<const double>, const MeasureSummary&,
                                              std::span<double> jac) const {
  jac[0] = b_;
}

void LinearBenchmarkModel::lions_jacobian(std::size_t, std::span<const double>, const MeasureSummary&,
                                          std::span<const double>, std::span<double> jac) const {
  jac[0] = 0.0;
}

double LinearBenchmarkModel::exact_solution(double x0, double t, double brownian) const noexcept {
  return x0 * std::exp((a_ - 0.5 * b_ * b_) * t + b_ * brownian);
}

// ---------------------------------------------------------------------------
// Presets and factory

const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names{"double_well", "cucker_smale", "fitzhugh_nagumo",
                                              "linear_benchmark"};
  return names;
}

ModelPreset resolve_preset(std::string_view qualified) {
  const auto dot = qualified.find('.');
  const std::string model(qualified.substr(0, dot));
  std::string preset = dot == std::string_view::npos ? std::string() : std::string(qualified.substr(dot + 1));

  if (model == "double_well") {
    if (preset.empty()) preset = "case2";
    if (preset == "case1")
      return {model, preset, {{"lambda1", 40.0}, {"lambda2", 4.0}, {"mu1", 0.3}, {"mu2", 2.0}},
              IndependentNormals{{0.0}, {1.0}}};
    if (preset == "case2")
      return {model, preset, {{"lambda1", 5.0}, {"lambda2", 1.0}, {"mu1", 0.1}, {"mu2", 0.1}},
              PointMass{{0.0}}};
  } else if (model == "cucker_smale") {
    if (preset.empty()) preset = "case2";
    if (preset == "case1")
      return {model, preset, {{"lambda1", 139.5}, {"lambda2", -30.0}, {"sigma1", 0.8}, {"sigma2", 100.0}},
              MultivariateNormal{{20.0, 30.0}, {4.0, 3.5, 3.5, 4.0}}};
    if (preset == "case2")
      return {model, preset, {{"lambda1", 1.0}, {"lambda2", -0.5}, {"sigma1", 0.01}, {"sigma2", 0.01}},
              IndependentNormals{{0.0, 0.0}, {1.0, 1.0}}};
  } else if (model == "fitzhugh_nagumo") {
    if (preset.empty()) preset = "default";
    if (preset == "default")
      return {model,
              preset,
              {{"a", 0.7}, {"b", 0.8}, {"c", 0.08}, {"I", 0.5}, {"sigma_ext", 0.5}, {"V_rev", 1.0},
               {"a_r", 1.0}, {"a_d", 1.0}, {"T_max", 1.0}, {"lambda", 0.2}, {"J", 1.0}, {"sigma_J", 0.2},
               {"V_T", 2.0}, {"Gamma", 0.1}, {"Lambda", 0.5}, {"cubic", 35.0}},
              PointMass{{0.0, 1.0, 0.5}}};
  } else if (model == "linear_benchmark") {
    if (preset.empty()) preset = "default";
    if (preset == "default") return {model, preset, {{"a", 1.0}, {"b", 1.0}}, PointMass{{1.0}}};
    if (preset == "zero") return {model, preset, {{"a", 0.0}, {"b", 0.0}}, PointMass{{1.0}}};
  } else {
    throw std::invalid_argument(fmt::format("unknown model '{}'", model));
  }
  throw std::invalid_argument(fmt::format("unknown preset '{}' for model '{}'", preset, model));
}

std::unique_ptr<Model> make_model(const ModelPreset& preset) {
  const auto defaults = resolve_preset(preset.model);
  for (const auto& [key, value] : preset.params) {
    if (!defaults.params.contains(key))
      throw std::invalid_argument(fmt::format("unknown parameter '{}' for model '{}'", key, preset.model));
    if (!std::isfinite(value))
      throw std::invalid_argument(fmt::format("parameter '{}' must be finite", key));
  }
  if (preset.params.size() != defaults.params.size())
    throw std::invalid_argument(fmt::format("incomplete parameter set for model '{}'", preset.model));

  if (preset.model == "double_well") return std::make_unique<DoubleWellModel>(preset.params, preset.initial_law);
  if (preset.model == "cucker_smale") return std::make_unique<CuckerSmaleModel>(preset.params, preset.initial_law);
  if (preset.model == "fitzhugh_nagumo")
    return std::make_unique<FitzHughNagumoModel>(preset.params, preset.initial_law);
  return std::make_unique<LinearBenchmarkModel>(preset.params, preset.initial_law);
}

std::unique_ptr<Model> make_model(std::string_view qualified, const ParamMap& overrides) {
  auto preset = resolve_preset(qualified);
  for (const auto& [key, value] : overrides) {
    if (!preset.params.contains(key))
      throw std::invalid_argument(fmt::format("unknown parameter '{}' for model '{}'", key, preset.model));
    preset.params[key] = value;
  }
  return make_model(preset);
}

// ---------------------------------------------------------------------------
// Evaluation against a measure view

MeasureSummary summarize_measure(const Model& model, MeasureView measure) {
  const std::size_t n = measure.size();
  const std::size_t d = model.state_dim();
  if (n == 0) throw std::invalid_argument("empty measure");
  if (measure.dim != d) throw std::invalid_argument("measure dimension does not match model");

  MeasureSummary summary;
  summary.coordinate_mean.resize(d);
  std::vector<double> buffer(n);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t k = 0; k < n; ++k) buffer[k] = measure.states[k * d + c];
    summary.coordinate_mean[c] = exchangeable_mean(buffer);
  }
  for (std::size_t k = 0; k < n; ++k) {
    double sq = 0.0;
    for (double v : measure.particle(k)) sq += v * v;
    buffer[k] = sq;
  }
  summary.mean_square_norm = exchangeable_mean(buffer);
  summary.kernel = model.kernel_averages(measure);
  return summary;
}

std::vector<double> drift_eval(const Model& model, std::span<const double> y, MeasureView measure) {
  require_dim(y, model.state_dim(), "drift_eval");
  const auto mu = summarize_measure(model, measure);
  std::vector<double> out(model.state_dim());
  model.drift(y, mu, out);
  return out;
}

std::vector<double> diffusion_eval(const Model& model, std::size_t j, std::span<const double> y,
                                   MeasureView measure) {
  require_dim(y, model.state_dim(), "diffusion_eval");
  require_column(j, model.noise_dim());
  const auto mu = summarize_measure(model, measure);
  std::vector<double> out(model.state_dim());
  model.diffusion(j, y, mu, out);
  return out;
}

namespace {

std::vector<double> mat_vec(std::span<const double> jac, std::span<const double> v) {
  const std::size_t d = v.size();
  std::vector<double> out(d, 0.0);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r] += jac[r * d + c] * v[c];
  return out;
}

}  // namespace

std::vector<double> l_y_eval(const Model& model, std::size_t j1, std::size_t j2, std::span<const double> y,
                             MeasureView measure) {
  const std::size_t d = model.state_dim();
  require_dim(y, d, "l_y_eval");
  require_column(j1, model.noise_dim());
  require_column(j2, model.noise_dim());
  const auto mu = summarize_measure(model, measure);
  std::vector<double> jac(d * d), g(d);
  model.diffusion_jacobian(j1, y, mu, jac);
  model.diffusion(j2, y, mu, g);
  return mat_vec(jac, g);
}

std::vector<double> l_rho_eval(const Model& model, std::size_t j1, std::size_t j2, std::span<const double> y,
                               MeasureView measure, std::span<const double> z) {
  const std::size_t d = model.state_dim();
  require_dim(y, d, "l_rho_eval");
  require_dim(z, d, "l_rho_eval");
  require_column(j1, model.noise_dim());
  require_column(j2, model.noise_dim());
  const auto mu = summarize_measure(model, measure);
  std::vector<double> jac(d * d), g(d);
  model.lions_jacobian(j1, y, mu, z, jac);
  model.diffusion(j2, z, mu, g);
  return mat_vec(jac, g);
}

DerivativeReport check_derivatives_fd(const Model& model, std::size_t trial_count, std::uint64_t rng_seed,
                                      double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  constexpr std::size_t kEnsemble = 5;
  constexpr double kRelStep = 1e-6;
  constexpr double kBoundaryMargin = 1e-3;

  const std::size_t d = model.state_dim();
  const std::size_t m = model.noise_dim();
  DerivativeReport report;
  report.model = model.name();
  report.tolerance = tol;

  CounterRng rng(StreamKey{rng_seed, kValidationStep, 0x4644u});
  std::vector<double> y(d), yp(d), ym(d), states(kEnsemble * d), perturbed;
  std::vector<double> jac(d * d), gp(d), gm(d);
  auto error = [](double fd, double exact) { return std::abs(fd - exact) / std::max(1.0, std::abs(exact)); };

  for (std::size_t trial = 0; trial < trial_count; ++trial) {
    model.sample_probe_state(rng, y);
    for (std::size_t k = 0; k < kEnsemble; ++k) model.sample_probe_state(rng, std::span(states).subspan(k * d, d));
    if (model.near_nonsmooth_point(y, kBoundaryMargin)) {
      ++report.skipped;
      continue;
    }
    ++report.trials;
    const MeasureView measure{states, d};
    const auto mu = summarize_measure(model, measure);

    for (std::size_t j = 0; j < m; ++j) {
      model.diffusion_jacobian(j, y, mu, jac);
      for (std::size_t c = 0; c < d; ++c) {
        const double h = kRelStep * std::max(1.0, std::abs(y[c]));
        yp = y;
        ym = y;
        yp[c] += h;
        ym[c] -= h;
        model.diffusion(j, yp, mu, gp);
        model.diffusion(j, ym, mu, gm);
        for (std::size_t r = 0; r < d; ++r) {
          const double fd = (gp[r] - gm[r]) / (yp[c] - ym[c]);
          report.max_error_state = std::max(report.max_error_state, error(fd, jac[r * d + c]));
          ++report.entries_checked;
        }
      }

      for (std::size_t k = 0; k < kEnsemble; ++k) {
        const auto z = std::span<const double>(states).subspan(k * d, d);
        model.lions_jacobian(j, y, mu, z, jac);
        for (std::size_t u = 0; u < d; ++u) {
          const double h = kRelStep * std::max(1.0, std::abs(z[u]));
          perturbed = states;
          perturbed[k * d + u] += h;
          const double up = perturbed[k * d + u];
          model.diffusion(j, y, summarize_measure(model, MeasureView{perturbed, d}), gp);
          perturbed[k * d + u] = states[k * d + u] - h;
          const double down = perturbed[k * d + u];
          model.diffusion(j, y, summarize_measure(model, MeasureView{perturbed, d}), gm);
          for (std::size_t r = 0; r < d; ++r) {
            const double fd = (gp[r] - gm[r]) * static_cast<double>(kEnsemble) / (up - down);
            report.max_error_measure = std::max(report.max_error_measure, error(fd, jac[r * d + u]));
            ++report.entries_checked;
          }
        }
      }
    }
  }
  return report;
}

}  // namespace mvsim
