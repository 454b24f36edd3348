#include <filesystem>
#include <sstream>
#include <string>

#include "doctest.h"

#include "bayesdet/errors.hpp"
#include "bayesdet/harness.hpp"
#include "bayesdet/io.hpp"

using namespace bayesdet;
namespace fs = std::filesystem;

namespace {

ExperimentConfig crack_config(Algorithm alg, std::size_t n, std::size_t reps) {
  ExperimentConfig c;
  c.problem.kind = CaseKind::crack;
  c.filter = alg;
  c.filter_config.n_particles = n;
  c.repetitions = reps;
  c.reference.kind = ReferenceKind::rejection;
  c.reference.k_max = 3;
  c.reference.n_samples = 500;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("bayesdet_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config round-trips through JSON") {
  ExperimentConfig c;
  c.problem.kind = CaseKind::corrosion;
  c.problem.n_elements = 50;
  c.problem.n_sensors = 10;
  c.filter = Algorithm::tibis;
  c.filter_config.n_particles = 1234;
  c.filter_config.burn_in = 5;
  c.filter_config.policy = ExecutionPolicy::serial;
  c.reference.kind = ReferenceKind::kalman;
  c.repetitions = 7;
  c.base_seed = 99;
  c.output_dir = "out/x";
  const auto j = to_json(c);
  const auto back = config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.filter == Algorithm::tibis);
  CHECK(back.filter_config.burn_in == 5);

  const auto defaults = config_from_json(Json::parse(R"({"case": {"kind": "corrosion"}})"));
  CHECK(defaults.reference.kind == ReferenceKind::kalman);
  CHECK(defaults.repetitions == 50);
  CHECK(defaults.filter_config.resample_fraction == 0.5);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"filter": "kalman"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"repetitions": "many"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(Json::parse("[1, 2]")), ConfigError);
  auto c = crack_config(Algorithm::pfgm, 100, 1);
  c.repetitions = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = crack_config(Algorithm::pfgm, 100, 1);
  c.smc_steps = {10, 20};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.filter = Algorithm::smc;
  c.validate();
  c.smc_steps = {20, 10};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = crack_config(Algorithm::pfgm, 100, 1);
  c.filter_config.resample_fraction = 0.001;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = crack_config(Algorithm::pfgm, 100, 1);
  c.problem.kind = CaseKind::corrosion;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.reference.kind = ReferenceKind::kalman;
  c.problem.n_sensors = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("single repetition collapses the bands") {
  const auto r = run_experiment(crack_config(Algorithm::pfgm, 400, 1));
  REQUIRE_FALSE(r.trace.empty());
  for (const auto& t : r.trace) {
    CHECK(t.lo == t.mean);
    CHECK(t.hi == t.mean);
  }
}

TEST_CASE("trace layout, bands and cost accounting") {
  const auto r = run_experiment(crack_config(Algorithm::tpfgm, 400, 5));
  CHECK(r.failed_runs == 0);
  std::size_t steps = 0;
  for (const auto& t : r.trace) {
    CHECK(t.mean >= 0.0);
    CHECK(t.lo <= t.mean);
    CHECK(t.mean <= t.hi);
    steps = std::max(steps, t.step);
  }
  CHECK(steps == 3);
  std::uint64_t total = 0;
  for (const auto& run : r.runs) total += run.evaluations;
  CHECK(r.mean_evaluations == static_cast<double>(total) / 5.0);

  const auto csv = trace_to_csv(r.trace);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,metric,mean,lo,hi");
  while (std::getline(in, line)) CHECK(std::count(line.begin(), line.end(), ',') == 4);
}

TEST_CASE("PFGM cost table is exact") {
  const auto r = run_experiment(crack_config(Algorithm::pfgm, 5000, 3));
  for (const auto& run : r.runs) CHECK(run.evaluations == 500'000u);
  CHECK(r.mean_evaluations == 500'000.0);
  CHECK(experiment_report(r)["cost"]["mean_evaluations"] == 500'000.0);
}

TEST_CASE("reruns are byte-identical") {
  auto c = crack_config(Algorithm::ibis, 300, 2);
  const auto a = scratch("a");
  const auto b = scratch("b");
  c.output_dir = a.string();
  run_experiment(c);
  c.output_dir = b.string();
  run_experiment(c);
  CHECK(read_text(a / "trace.csv") == read_text(b / "trace.csv"));
  // the echoed config differs only in output_dir
  auto ra = read_json(a / "report.json");
  auto rb = read_json(b / "report.json");
  ra["config"].erase("output_dir");
  rb["config"].erase("output_dir");
  CHECK(ra == rb);
  CHECK(read_json(a / "config.json")["filter"] == "ibis");
  const auto summary = summarize_trace_csv(a / "trace.csv");
  CHECK(summary.contains("mean_l2"));
  CHECK(summary["mean_l2"]["final_step"] == 3);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("SMC re-runs interpolate between anchors") {
  auto c = crack_config(Algorithm::smc, 400, 2);
  c.smc_steps = {1, 3};
  const auto r = run_experiment(c);
  bool saw_two = false;
  for (const auto& t : r.trace) {
    if (t.step == 2) {
      saw_two = true;
      CHECK(t.interpolated);
    } else {
      CHECK_FALSE(t.interpolated);
    }
  }
  CHECK(saw_two);
  CHECK(experiment_report(r)["interpolated_steps"] == Json::array({2}));
  CHECK(r.runs.front().reports.size() == 2);
}

TEST_CASE("datasets survive serialization") {
  const auto dir = scratch("data");
  const auto ds = generate_crack_dataset(crack_theta_star(), crack_measurement_error(), 4);
  write_crack_dataset(dir, ds);
  const auto back = read_crack_dataset(dir);
  REQUIRE(back.measurements.size() == 100);
  for (std::size_t k = 0; k < 100; ++k) {
    CHECK(back.measurements[k] == doctest::Approx(ds.measurements[k]).epsilon(1e-8));
    CHECK(back.cycles[k] == ds.cycles[k]);
  }
  CHECK(back.seed == 4);
  CHECK(back.error.sigma_log == doctest::Approx(ds.error.sigma_log).epsilon(1e-8));
  fs::remove_all(dir);
}

TEST_CASE("corrosion reference comes from the Kalman filter") {
  ExperimentConfig c;
  c.problem.kind = CaseKind::corrosion;
  c.problem.kl_nodes = 200;
  c.problem.kl_modes = 100;
  c.reference.kind = ReferenceKind::kalman;
  const auto p = make_problem(c.problem);
  const auto ref = compute_reference(p, c.reference, ExecutionPolicy::parallel);
  REQUIRE(ref.size() == 50);
  CHECK(ref.front().source == "kalman");
  CHECK(ref.back().mean.size() == 50);
  CHECK(ref.back().correlation(3, 3) == doctest::Approx(1.0));
  ReferenceConfig wrong;
  CHECK_THROWS_AS(compute_reference(p, wrong, ExecutionPolicy::parallel), ReferenceError);
}
