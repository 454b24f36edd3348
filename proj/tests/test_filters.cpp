#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"

#include "bayesdet/corrosion.hpp"
#include "bayesdet/crack.hpp"
#include "bayesdet/errors.hpp"
#include "bayesdet/filters.hpp"
#include "bayesdet/probability.hpp"
#include "support.hpp"

using namespace bayesdet;

namespace {

const CrackDataset& crack_data() {
  static const CrackDataset ds = generate_crack_dataset(crack_theta_star(), crack_measurement_error(), 1);
  return ds;
}

MeasurementSeries head(const MeasurementSeries& s, std::size_t k) {
  return MeasurementSeries(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k));
}

FilterConfig config(std::size_t n, std::uint64_t seed, ExecutionPolicy policy = ExecutionPolicy::parallel) {
  FilterConfig c;
  c.n_particles = n;
  c.seed = seed;
  c.policy = policy;
  return c;
}

void check_same(const FilterReport& a, const FilterReport& b) {
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t k = 0; k < a.steps.size(); ++k) {
    CHECK(a.steps[k].mean == b.steps[k].mean);
    CHECK(a.steps[k].std == b.steps[k].std);
    CHECK(a.steps[k].ladder == b.steps[k].ladder);
    CHECK(a.steps[k].evaluations == b.steps[k].evaluations);
  }
  CHECK(a.final_ensemble.theta == b.final_ensemble.theta);
  CHECK(a.final_ensemble.log_weights == b.final_ensemble.log_weights);
  CHECK(a.evaluations == b.evaluations);
}

void check_ladders(const FilterReport& r) {
  const double floor = r.config.threshold() - 1e-6 * static_cast<double>(r.config.n_particles);
  for (const auto& s : r.steps) {
    if (s.ladder.empty()) continue;
    CHECK(s.ladder.front() > 0.0);
    CHECK(s.ladder.back() == 1.0);
    for (std::size_t i = 1; i < s.ladder.size(); ++i) CHECK(s.ladder[i] > s.ladder[i - 1]);
    REQUIRE(s.ladder_ess.size() == s.ladder.size());
    for (std::size_t i = 0; i + 1 < s.ladder_ess.size(); ++i) CHECK(s.ladder_ess[i] >= floor);
  }
}

}  // namespace

TEST_CASE("tempering increment closed form") {
  const std::vector<double> ll{10.0, 0.0};
  const std::vector<double> lw{std::log(0.5), std::log(0.5)};
  CHECK(std::abs(solve_temper_increment(ll, lw, 0.0, 1.6) - std::log(3.0) / 10.0) < 1e-8);
  const double tiny = solve_temper_increment(ll, lw, 0.0, 2.0 - 1e-6);
  CHECK(tiny > 0.0);
  CHECK(tiny < 1e-3);
  // equal likelihoods never cross the threshold
  const std::vector<double> flat{3.0, 3.0};
  CHECK_THROWS_AS(solve_temper_increment(flat, lw, 0.0, 1.6), ContractError);
}

TEST_CASE("solved increments land on the threshold") {
  auto rng = make_stream(4, StreamTag::resample);
  const std::size_t n = 1000;
  std::vector<double> ll(n);
  fill_standard_normal(rng, ll);
  for (double& x : ll) x *= 8.0;
  const std::vector<double> lw(n, -std::log(static_cast<double>(n)));
  for (double q : {0.0, 0.3, 0.6}) {
    const double dq = solve_temper_increment(ll, lw, q, 500.0);
    CHECK(dq > 0.0);
    CHECK(dq <= 1.0 - q);
    const double e = tempered_ess(lw, ll, dq);
    CHECK(e >= 500.0);
    CHECK(e - 500.0 <= 1e-8 * n);
  }
}

TEST_CASE("PF and PFGM cost one evaluation per particle and step") {
  CrackModel model;
  const auto data = head(crack_data().series(), 40);
  for (auto run : {pf_run, pfgm_run}) {
    model.reset_evaluations();
    const auto r = run(model, data, config(500, 3));
    CHECK(r.evaluations == 500u * 40u);
    CHECK(model.evaluations() == 500u * 40u);
    for (std::size_t k = 1; k < r.steps.size(); ++k) CHECK(r.steps[k].evaluations == 500u * k);
  }
}

TEST_CASE("empty data returns the prior") {
  CrackModel model;
  const auto c = config(800, 9);
  const auto r = pf_run(model, {}, c);
  REQUIRE(r.steps.size() == 1);
  const auto prior = summarize(sample_prior(model.prior(), 800, 9));
  CHECK(r.steps[0].mean == prior.mean);
  CHECK(r.steps[0].std == prior.std);
  CHECK(r.evaluations == 0u);
}

TEST_CASE("uninformative data keeps weights uniform") {
  const auto err = MeasurementError{0.0, 1e6};
  CrackModel model(crack_prior(), err);
  const auto data = head(crack_data().series(), 20);
  const auto r = pf_run(model, data, config(400, 2));
  CHECK(r.resample_events == 0u);
  // weights stay uniform over the particles whose trajectory has not diverged
  for (std::size_t k = 1; k < r.steps.size(); ++k) {
    double alive = 0.0;
    for (Eigen::Index i = 0; i < r.final_ensemble.theta.rows(); ++i) {
      alive += std::isfinite(model.state(row_span(r.final_ensemble.theta, i), data[k - 1].time)[0]) ? 1.0 : 0.0;
    }
    CHECK(r.steps[k].ess == doctest::Approx(alive).epsilon(1e-9));
  }
  const auto t = tpfgm_run(model, data, config(400, 2));
  for (const auto& s : t.steps) CHECK(s.ladder.empty());
  CHECK(t.resample_events == 0u);
}

TEST_CASE("filters agree when nothing triggers") {
  CrackModel model;
  const auto data = head(crack_data().series(), 10);
  FilterConfig c = config(300, 5);
  c.resample_fraction = 1.0 / 300.0;
  const auto pf = pf_run(model, data, c);
  REQUIRE(pf.resample_events == 0u);
  check_same(pf, pfgm_run(model, data, c));
  check_same(pf, tpfgm_run(model, data, c));
  const auto ibis = ibis_run(model, data, c);
  check_same(pf, ibis);
  check_same(ibis, tibis_run(model, data, c));
}

TEST_CASE("identical seeds give identical reports") {
  CrackModel model;
  const auto data = head(crack_data().series(), 30);
  for (auto alg : {Algorithm::pfgm, Algorithm::tpfgm, Algorithm::ibis, Algorithm::tibis, Algorithm::smc}) {
    check_same(run_filter(alg, model, data, config(500, 7)), run_filter(alg, model, data, config(500, 7)));
  }
}

TEST_CASE("serial and parallel runs agree bitwise") {
  CrackModel model;
  const auto data = head(crack_data().series(), 30);
  for (auto alg : {Algorithm::pf, Algorithm::pfgm, Algorithm::tpfgm, Algorithm::ibis, Algorithm::tibis,
                   Algorithm::smc}) {
    CAPTURE(to_string(alg));
    check_same(run_filter(alg, model, data, config(600, 11, ExecutionPolicy::serial)),
               run_filter(alg, model, data, config(600, 11, ExecutionPolicy::parallel)));
  }
  const auto& basis = testing::shared_basis();
  const auto truth = generate_corrosion_truth(1, basis);
  const CorrosionGeometry g{25};
  CorrosionModel corrosion(g, make_sensor_layout(g, 4));
  const auto cdata = truth.series(corrosion.layout(), 10);
  check_same(tpfgm_run(corrosion, cdata, config(400, 2, ExecutionPolicy::serial)),
             tpfgm_run(corrosion, cdata, config(400, 2, ExecutionPolicy::parallel)));
}

TEST_CASE("SMC with a flat likelihood returns the prior in one rung") {
  testing::FlatModel model(3);
  MeasurementSeries data(5, Measurement{1.0, {0.0}});
  const std::size_t n = 4000;
  const auto r = smc_run(model, data, config(n, 3));
  REQUIRE(r.steps.size() == 2);
  CHECK(r.steps[1].ladder == std::vector<double>{1.0});
  for (Eigen::Index j = 0; j < 3; ++j) {
    CHECK(std::abs(r.steps[1].mean(j)) < 3.0 / std::sqrt(static_cast<double>(n)) * 1.5);
    CHECK(r.steps[1].std(j) == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("tempered filters approach the linear-Gaussian posterior") {
  testing::LinearGaussianModel model(2, 0.2);
  MeasurementSeries data;
  auto rng = make_stream(5, StreamTag::measurement_noise);
  std::vector<double> z(8);
  fill_standard_normal(rng, z);
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double t = 0.25 * static_cast<double>(k);
    data.push_back({t, {0.7 - 0.4 * t + 0.2 * z[k]}});
  }
  const auto [mean, cov] = model.posterior(data);
  const std::size_t n = 4000;
  for (auto alg : {Algorithm::tpfgm, Algorithm::tibis, Algorithm::smc}) {
    CAPTURE(to_string(alg));
    const auto r = run_filter(alg, model, data, config(n, 13));
    check_ladders(r);
    const auto& last = r.steps.back();
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double sd = std::sqrt(cov(j, j));
      // loose band: resampling and moves correlate particles
      CHECK(std::abs(last.mean(j) - mean(j)) < 6.0 * sd / std::sqrt(static_cast<double>(n)) + 0.02 * sd);
      CHECK(last.std(j) == doctest::Approx(sd).epsilon(0.1));
    }
  }
}

TEST_CASE("tempering ladders on the corrosion case") {
  const auto& basis = testing::shared_basis();
  const auto truth = generate_corrosion_truth(1, basis);
  const CorrosionGeometry g{25};
  CorrosionModel model(g, make_sensor_layout(g, 10));
  const auto data = truth.series(model.layout(), 5);
  const auto r = tibis_run(model, data, config(500, 4));
  REQUIRE(r.steps.size() == 6);
  CHECK(r.steps[1].ladder.size() >= 2);
  check_ladders(r);
  check_ladders(tpfgm_run(model, data, config(500, 4)));
}

TEST_CASE("corrosion IBIS acceptance rates without burn-in") {
  const auto& basis = testing::shared_basis();
  const auto truth = generate_corrosion_truth(1, basis);
  const CorrosionGeometry g{25};
  CorrosionModel model(g, make_sensor_layout(g, 4));
  const auto data = truth.series(model.layout(), 20);
  const auto r = ibis_run(model, data, config(1000, 1));
  double sum = 0.0;
  std::size_t moves = 0;
  for (const auto& s : r.steps) {
    for (double a : s.acceptance_rates) {
      sum += a;
      ++moves;
    }
  }
  REQUIRE(moves > 0);
  CHECK(sum / static_cast<double>(moves) >= 0.25);
  CHECK(sum / static_cast<double>(moves) <= 0.75);
}

TEST_CASE("SMC re-runs are tallied exactly") {
  CrackModel inner;
  testing::CountingModel model(inner);
  std::uint64_t reported = 0;
  for (std::size_t k = 1; k <= 10; ++k) {
    reported += smc_run(model, head(crack_data().series(), k), config(500, k)).evaluations;
  }
  CHECK(reported == model.tally());
  CHECK(reported == model.evaluations());
}

TEST_CASE("IMH move with a perfect proposal always accepts") {
  testing::FlatModel model(2);
  const GaussianMixture g({1.0}, {Eigen::Vector2d::Zero()}, {Eigen::Matrix2d::Identity()});
  auto e = sample_prior(model.prior(), 500, 3);
  e.log_likelihoods.assign(500, 0.0);
  const auto r = imh_gm_move(e, [](std::span<const double>) { return 0.0; }, model.prior(), g, 2, 5);
  CHECK(r.acceptance_rate == 1.0);
}

TEST_CASE("IMH move rejects invalid candidates") {
  testing::FlatModel model(1);
  const GaussianMixture g({1.0}, {Eigen::VectorXd::Zero(1)}, {Eigen::MatrixXd::Identity(1, 1)});
  auto e = sample_prior(model.prior(), 200, 3);
  e.log_likelihoods.assign(200, 0.0);
  const auto r = imh_gm_move(
      e, [](std::span<const double>) { return -std::numeric_limits<double>::infinity(); }, model.prior(), g, 0, 5);
  CHECK(r.acceptance_rate == 0.0);
  CHECK(r.ensemble.theta == e.theta);
}

TEST_CASE("IMH move keeps an offset 1-d Gaussian target invariant") {
  // prior N(0, 1), likelihood N(8/3; theta, 1/3) -> posterior N(2, 0.5^2)
  const PriorModel prior({NormalMarginal{0.0, 1.0}});
  const double s = std::sqrt(1.0 / 3.0);
  auto ll = [s](std::span<const double> th) { return normal_log_pdf(8.0 / 3.0, th[0], s); };
  const std::size_t n = 10'000;
  WeightedEnsemble e;
  e.theta.resize(n, 1);
  auto rng = make_stream(8, StreamTag::prior_draw);
  fill_standard_normal(rng, std::span<double>(e.theta.data(), n));
  e.theta.array() = 2.0 + 0.5 * e.theta.array();
  e.u = e.theta;
  e.set_uniform_weights();
  e.log_likelihoods.resize(n);
  for (std::size_t i = 0; i < n; ++i) e.log_likelihoods[i] = ll(row_span(e.theta, static_cast<Eigen::Index>(i)));
  const GaussianMixture g({1.0}, {Eigen::VectorXd::Zero(1)}, {Eigen::MatrixXd::Identity(1, 1)});
  for (std::uint64_t sweep = 0; sweep < 5; ++sweep) e = imh_gm_move(e, ll, prior, g, 0, 100 + sweep).ensemble;
  const double mean = e.theta.col(0).mean();
  const double sd = std::sqrt((e.theta.col(0).array() - mean).square().mean());
  const double se = 0.5 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean - 2.0) < 3.0 * se);
  CHECK(std::abs(sd - 0.5) < 3.0 * 0.5 / std::sqrt(2.0 * n));
}
