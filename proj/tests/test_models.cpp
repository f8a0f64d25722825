#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "mvsim/engine.hpp"
#include "mvsim/models.hpp"

using namespace mvsim;

TEST_CASE("double-well Case 2 preset carries the expected constants") {
  const auto p = resolve_preset("double_well.case2");
  CHECK(p.params.at("lambda1") == 5.0);
  CHECK(p.params.at("lambda2") == 1.0);
  CHECK(p.params.at("mu1") == 0.1);
  CHECK(p.params.at("mu2") == 0.1);
  REQUIRE(std::holds_alternative<PointMass>(p.initial_law));
  CHECK(std::get<PointMass>(p.initial_law).value == std::vector<double>{0.0});
  CHECK(resolve_preset("double_well").preset == "case2");
  const auto cs = resolve_preset("cucker_smale.case1");
  const auto& law = std::get<MultivariateNormal>(cs.initial_law);
  CHECK(law.mean == std::vector<double>{20.0, 30.0});
  CHECK(law.covariance == std::vector<double>{4.0, 3.5, 3.5, 4.0});
}

TEST_CASE("preset and parameter errors") {
  CHECK_THROWS_AS(resolve_preset("heat_equation"), std::invalid_argument);
  CHECK_THROWS_AS(resolve_preset("double_well.case9"), std::invalid_argument);
  CHECK_THROWS_AS(make_model("double_well.case2", {{"kappa", 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(make_model("double_well.case2", {{"mu1", std::nan("")}}), std::invalid_argument);
  const auto m = make_model("double_well.case2", {{"mu1", 0.25}});
  CHECK(m->param("mu1") == 0.25);
  CHECK(m->param("lambda1") == 5.0);
}

TEST_CASE("measure functionals") {
  const auto model = make_model("cucker_smale.case2");
  SUBCASE("all particles at c") {
    const std::vector<double> states{-1.5, 2.0, -1.5, 2.0, -1.5, 2.0};
    const auto mu = summarize_measure(*model, MeasureView{states, 2});
    CHECK(mu.coordinate_mean == std::vector<double>{-1.5, 2.0});
    CHECK(wasserstein2_to_origin(mu) == doctest::Approx(2.5).epsilon(1e-15));
  }
  SUBCASE("single particle at (3, 4)") {
    const std::vector<double> states{3.0, 4.0};
    CHECK(wasserstein2_to_origin(summarize_measure(*model, MeasureView{states, 2})) == 5.0);
  }
  SUBCASE("sine kernel vanishes when every particle sits at y") {
    const auto dw = make_model("double_well.case2", {{"mu1", 0.0}});
    const std::vector<double> states{0.7, 0.7, 0.7};
    const std::vector<double> y{0.7};
    CHECK(std::abs(diffusion_eval(*dw, 0, y, MeasureView{states, 1})[0]) < 1e-17);
  }
  SUBCASE("empty measure and dimension mismatch") {
    CHECK_THROWS(summarize_measure(*model, MeasureView{{}, 2}));
    const std::vector<double> states{1.0, 2.0, 3.0};
    CHECK_THROWS(summarize_measure(*model, MeasureView{states, 3}));
  }
}

TEST_CASE("exchangeable mean is order independent") {
  std::vector<double> values{1e16, 1.0, -1e16, 3.5, 0.1, 7.25, -2.0};
  std::vector<double> copy = values;
  const double a = exchangeable_mean(copy);
  std::mt19937 gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(values.begin(), values.end(), gen);
    copy = values;
    CHECK(exchangeable_mean(copy) == a);
  }
  std::vector<double> same(7, 0.1);
  CHECK(exchangeable_mean(same) == 0.1);
}

TEST_CASE("double-well coefficients at a hand-computed point") {
  const auto model = make_model("double_well.case1");
  const std::vector<double> states{0.5, 1.5, -0.25};
  const std::vector<double> y{0.5};
  const MeasureView mu{states, 1};
  const double mean = (0.5 + 1.5 - 0.25) / 3.0;
  CHECK(drift_eval(*model, y, mu)[0] == doctest::Approx(40 * 0.5 * 0.75 + 4 * mean));
  double kernel = 0.0;
  for (double z : states) kernel += std::sin(0.5 - z);
  CHECK(diffusion_eval(*model, 0, y, mu)[0] == doctest::Approx(0.3 * 0.75 + 2.0 * kernel / 3.0));
  double dkernel = 0.0;
  for (double z : states) dkernel += std::cos(0.5 - z);
  const double g = 0.3 * 0.75 + 2.0 * kernel / 3.0;
  CHECK(l_y_eval(*model, 0, 0, y, mu)[0] == doctest::Approx((-0.6 * 0.5 + 2.0 * dkernel / 3.0) * g));
  const std::vector<double> z{1.5};
  const std::vector<double> z_state{1.5};
  const double gz = diffusion_eval(*model, 0, z_state, mu)[0];
  CHECK(l_rho_eval(*model, 0, 0, y, mu, z)[0] == doctest::Approx(-2.0 * std::cos(0.5 - 1.5) * gz));
}

TEST_CASE("Cucker-Smale coefficients at a hand-computed point") {
  const auto model = make_model("cucker_smale.case2");
  const std::vector<double> states{1.0, 0.0, -1.0, 3.0, 3.0, -2.0};
  const std::vector<double> y{1.0, 0.0};
  const MeasureView mu{states, 2};
  const double mv = 1.0;
  const auto f = drift_eval(*model, y, mu);
  CHECK(f[0] == doctest::Approx(-1.0 + 1.0 - 0.5 * (1.0 - mv)));
  CHECK(f[1] == doctest::Approx(1.0));
  const auto g = diffusion_eval(*model, 0, y, mu);
  CHECK(g[0] == doctest::Approx(0.01 + 0.01 * (1.0 - mv)));
  CHECK(g[1] == 0.0);
}

TEST_CASE("closed-form derivatives agree with finite differences") {
  for (const char* name : {"double_well.case1", "double_well.case2", "cucker_smale.case1", "cucker_smale.case2",
                           "fitzhugh_nagumo"}) {
    CAPTURE(name);
    const auto model = make_model(name);
    const auto report = check_derivatives_fd(*model, 100, 17, 1e-5);
    CHECK(report.passed());
    CHECK(report.trials + report.skipped == 100);
    CHECK(report.trials >= 90);
    CHECK(report.entries_checked > 0);
  }
  const auto linear = make_model("linear_benchmark");
  const auto report = check_derivatives_fd(*linear, 100, 17, 1e-8);
  CHECK(report.passed());
  CHECK(report.max_error_state <= 1e-8);
  CHECK(report.max_error_measure == 0.0);
}

namespace {
/// g(y) = y^3 with a Jacobian that is off by one percent.
class SkewedCubic final : public Model {
 public:
  SkewedCubic() : Model("skewed", 1, 1, {}, PointMass{{0.0}}) {}
  bool measure_dependent_diffusion() const noexcept override { return false; }
  void drift(std::span<const double>, const MeasureSummary&, std::span<double> out) const override { out[0] = 0; }
  void diffusion(std::size_t, std::span<const double> y, const MeasureSummary&,
                 std::span<double> out) const override {
    out[0] = y[0] * y[0] * y[0];
  }
  void diffusion_jacobian(std::size_t, std::span<const double> y, const MeasureSummary&,
                          std::span<double> jac) const override {
    jac[0] = 3.03 * y[0] * y[0];
  }
  void lions_jacobian(std::size_t, std::span<const double>, const MeasureSummary&, std::span<const double>,
                      std::span<double> jac) const override {
    jac[0] = 0.0;
  }
};
}  // namespace

TEST_CASE("the derivative check detects a wrong Jacobian") {
  const SkewedCubic model;
  const auto report = check_derivatives_fd(model, 50, 3, 1e-5);
  CHECK_FALSE(report.passed());
  CHECK(report.max_error_state > 1e-3);
}

TEST_CASE("FitzHugh-Nagumo sigma32 is supported on (0, 1)") {
  const auto model = make_model("fitzhugh_nagumo");
  const auto& fhn = dynamic_cast<const FitzHughNagumoModel&>(*model);
  CHECK(fhn.sigma32(0.0, 0.0).value == 0.0);
  CHECK(fhn.sigma32(0.0, 1.0).value == 0.0);
  CHECK(fhn.sigma32(0.0, -0.5).value == 0.0);
  CHECK(fhn.sigma32(0.0, 0.5).value > 0.0);
  const std::vector<double> states{0.0, 1.0, 0.5};
  const std::vector<double> y{0.0, 1.0, 0.5};
  const auto g3 = diffusion_eval(*model, 2, y, MeasureView{states, 3});
  CHECK(g3[0] == doctest::Approx(-0.2 * (0.0 - 1.0) * 0.5));
}

TEST_CASE("evaluators are invariant under particle permutation") {
  const auto model = make_model("double_well.case1");
  std::vector<double> states{0.3, -1.2, 2.5, 0.01, -0.7, 1.9};
  const std::vector<double> y{0.4};
  const auto f = drift_eval(*model, y, MeasureView{states, 1});
  const auto g = diffusion_eval(*model, 0, y, MeasureView{states, 1});
  std::mt19937 gen(9);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(states.begin(), states.end(), gen);
    CHECK(drift_eval(*model, y, MeasureView{states, 1}) == f);
    CHECK(diffusion_eval(*model, 0, y, MeasureView{states, 1}) == g);
  }
}

TEST_CASE("initial laws") {
  SUBCASE("multivariate normal reproduces its covariance") {
    const auto law = resolve_preset("cucker_smale.case1").initial_law;
    const std::size_t n = 40000;
    const auto x = sample_initial_states(law, 2, n, 5);
    double m0 = 0, m1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      m0 += x[2 * i];
      m1 += x[2 * i + 1];
    }
    m0 /= n;
    m1 /= n;
    double c00 = 0, c01 = 0, c11 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      c00 += (x[2 * i] - m0) * (x[2 * i] - m0);
      c01 += (x[2 * i] - m0) * (x[2 * i + 1] - m1);
      c11 += (x[2 * i + 1] - m1) * (x[2 * i + 1] - m1);
    }
    CHECK(m0 == doctest::Approx(20.0).epsilon(0.01));
    CHECK(m1 == doctest::Approx(30.0).epsilon(0.01));
    CHECK(c00 / n == doctest::Approx(4.0).epsilon(0.05));
    CHECK(c01 / n == doctest::Approx(3.5).epsilon(0.05));
    CHECK(c11 / n == doctest::Approx(4.0).epsilon(0.05));
  }
  SUBCASE("draws do not depend on the particle count") {
    const InitialLaw law = IndependentNormals{{0.0, 1.0}, {1.0, 2.0}};
    const auto small = sample_initial_states(law, 2, 5, 8);
    const auto large = sample_initial_states(law, 2, 50, 8);
    CHECK(std::equal(small.begin(), small.end(), large.begin()));
  }
  SUBCASE("invalid laws") {
    CHECK_THROWS(validate_initial_law(MultivariateNormal{{0.0, 0.0}, {1.0, 2.0, 2.0, 1.0}}, 2));
    CHECK_THROWS(validate_initial_law(MultivariateNormal{{0.0, 0.0}, {1.0, 0.5, 0.4, 1.0}}, 2));
    CHECK_THROWS(validate_initial_law(IndependentNormals{{0.0}, {-1.0}}, 1));
    CHECK_THROWS(validate_initial_law(PointMass{{0.0, 1.0}}, 1));
  }
}
