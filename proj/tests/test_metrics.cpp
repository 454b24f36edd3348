#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "bayesdet/crack.hpp"
#include "bayesdet/errors.hpp"
#include "bayesdet/metrics.hpp"
#include "bayesdet/probability.hpp"

using namespace bayesdet;

TEST_CASE("relative error") {
  CHECK(relative_error(2.0, 2.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == 0.5);
  CHECK(relative_error(-33.5, -33.0) == doctest::Approx(0.014925).epsilon(1e-4));
  CHECK_THROWS_AS(relative_error(0.0, 1.0), DomainError);
}

TEST_CASE("L2 relative error norm") {
  const Eigen::Vector3d a(1.0, -2.0, 0.5);
  CHECK(l2_rel_error_norm(a, a) == 0.0);
  CHECK(l2_rel_error_norm(Eigen::Vector2d(3.0, 4.0), Eigen::Vector2d(0.0, 0.0)) == doctest::Approx(1.0));
  CHECK(l2_rel_error_norm(Eigen::VectorXd::Constant(1, -33.5), Eigen::VectorXd::Constant(1, -33.0)) ==
        doctest::Approx(relative_error(-33.5, -33.0)));
  CHECK_THROWS_AS(l2_rel_error_norm(Eigen::Vector2d::Zero(), Eigen::Vector2d(1.0, 0.0)), DomainError);
  CHECK_THROWS_AS(l2_rel_error_norm(Eigen::Vector2d(1.0, 1.0), Eigen::Vector3d(1.0, 1.0, 1.0)), ContractError);
}

TEST_CASE("correlation error norm") {
  Eigen::Matrix2d ref, est;
  ref << 1.0, -0.9, -0.9, 1.0;
  est << 1.0, -0.45, -0.45, 1.0;
  CHECK(correlation_error_norm(ref, ref) == 0.0);
  CHECK(correlation_error_norm(ref, est) == doctest::Approx(0.5));
  CHECK_THROWS_AS(correlation_error_norm(Eigen::Matrix2d::Identity(), est), DomainError);
  Eigen::Matrix3d m;
  m << 1, 2, 3, 4, 1, 5, 6, 7, 1;
  CHECK(strict_lower_triangle(m) == Eigen::Vector3d(4, 6, 7));
}

TEST_CASE("weighted quantile conventions") {
  std::vector<double> values(100);
  std::iota(values.begin(), values.end(), 1.0);
  const std::vector<double> uniform(100, -std::log(100.0));
  CHECK(weighted_quantile(values, uniform, 0.5) == 50.0);
  std::vector<double> point(100, -std::numeric_limits<double>::infinity());
  point[37] = 0.0;
  for (double p : {0.01, 0.5, 0.99}) CHECK(weighted_quantile(values, point, p) == 38.0);
}

TEST_CASE("weighted quantile matches a cumulative-sum oracle") {
  auto rng = make_stream(31, StreamTag::resample);
  for (int set = 0; set < 1000; ++set) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<double> values(n), lw(n);
    fill_standard_normal(rng, values);
    fill_standard_normal(rng, lw);
    for (std::size_t i = 0; i < n; ++i) values[i] = std::round(values[i] * 4.0);  // ties
    normalize_log_weights_in_place(lw);
    const double p = 0.01 + 0.98 * uniform01(rng);

    std::vector<std::pair<double, double>> pairs;
    for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(values[i], std::exp(lw[i]));
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double cum = 0.0;
    double expected = pairs.back().first;
    for (const auto& [v, w] : pairs) {
      cum += w;
      if (cum >= p - 1e-12) {
        expected = v;
        break;
      }
    }
    CHECK(weighted_quantile(values, lw, p) == expected);
  }
}

TEST_CASE("pushforward of a point mass follows the truth") {
  CrackModel model;
  WeightedEnsemble e;
  const auto star = crack_theta_star().to_vector();
  e.theta = RowMatrix(3, 4);
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) e.theta(i, j) = star[static_cast<std::size_t>(j)];
  }
  e.u = e.theta;
  e.set_uniform_weights();
  const std::vector<double> times{0.0, 1e6, 5e6};
  const auto s = pushforward_state(e, model, times);
  REQUIRE(s.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    const double a = crack_length(times[k], crack_theta_star());
    CHECK(s[k].mean(0) == doctest::Approx(a));
    CHECK(s[k].q05(0) == doctest::Approx(a));
    CHECK(s[k].q95(0) == doctest::Approx(a));
    CHECK(s[k].diverged_mass == 0.0);
    CHECK_FALSE(s[k].warning);
  }
}

TEST_CASE("prior pushforward") {
  CrackModel model;
  const auto e = sample_prior(model.prior(), 20'000, 3);
  const std::vector<double> times{0.0, 2e6, 6e6, 1e7};
  const auto s = pushforward_state(e, model, times);
  // n = 0 reproduces the exponential a0 prior
  CHECK(s[0].mean(0) == doctest::Approx(1.0).epsilon(0.03));
  CHECK(s[0].q05(0) == doctest::Approx(-std::log(0.95)).epsilon(0.05));
  CHECK(s[0].q95(0) == doctest::Approx(-std::log(0.05)).epsilon(0.05));
  for (std::size_t k = 1; k < s.size(); ++k) {
    CHECK(s[k].q95(0) - s[k].q05(0) > s[k - 1].q95(0) - s[k - 1].q05(0));
    CHECK(s[k].diverged_mass >= s[k - 1].diverged_mass);
  }
}

TEST_CASE("pushforward flags mostly diverged ensembles") {
  CrackModel model;
  WeightedEnsemble e;
  e.theta = RowMatrix{{2.0, 90.0, -30.0, 5.0}, {2.0, 90.0, -30.0, 5.0}, {2.0, 50.0, -33.5, 3.7}};
  e.u = e.theta;
  e.set_uniform_weights();
  const std::vector<double> t{1e7};
  const auto s = pushforward_state(e, model, t);
  CHECK(s[0].diverged_mass == doctest::Approx(2.0 / 3.0));
  CHECK(s[0].warning);
  CHECK(s[0].mean(0) == doctest::Approx(crack_length(1e7, crack_theta_star())));
}
