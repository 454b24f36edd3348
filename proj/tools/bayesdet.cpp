#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "bayesdet/errors.hpp"
#include "bayesdet/harness.hpp"
#include "bayesdet/io.hpp"

namespace fs = std::filesystem;
using namespace bayesdet;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitReference = 4;

ExperimentConfig load_config(const std::string& path, const std::string& out) {
  auto config = config_from_json(read_json(path));
  if (!out.empty()) config.output_dir = out;
  config.validate();
  return config;
}

void print_cost(const ExperimentResult& r) {
  std::cout << "runs: " << r.runs.size() << "  failed: " << r.failed_runs
            << "  mean evaluations: " << format_double(r.mean_evaluations) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian parameter estimation for deterioration models"};
  app.require_subcommand(1);

  std::string case_kind = "crack";
  std::uint64_t seed = 1;
  std::string out;
  std::size_t modes = 400;
  std::size_t nodes = 2000;
  auto* truth = app.add_subcommand("truth-gen", "Generate a synthetic truth dataset");
  truth->add_option("--case", case_kind, "crack or corrosion")->check(CLI::IsMember({"crack", "corrosion"}));
  truth->add_option("--seed", seed, "Truth seed");
  truth->add_option("--out", out, "Output directory")->required();
  truth->add_option("--modes", modes, "KL modes (corrosion)");
  truth->add_option("--nodes", nodes, "KL grid nodes (corrosion)");

  std::size_t k_max = 10;
  std::size_t samples = 10000;
  std::uint64_t ref_seed = 1;
  std::size_t elements = 25;
  std::size_t sensors = 4;
  auto* reference = app.add_subcommand("reference", "Compute a reference posterior sequence");
  reference->add_option("--case", case_kind, "crack (rejection) or corrosion (kalman)")
      ->check(CLI::IsMember({"crack", "corrosion"}));
  reference->add_option("--truth-seed", seed, "Truth seed");
  reference->add_option("--k-max", k_max, "Last step for rejection sampling");
  reference->add_option("--samples", samples, "Accepted draws per step");
  reference->add_option("--seed", ref_seed, "Rejection sampling seed");
  reference->add_option("--elements", elements, "Elements (corrosion)");
  reference->add_option("--sensors", sensors, "Sensors (corrosion)");
  reference->add_option("--out", out, "Output JSON file")->required();

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run one filter experiment");
  run->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory (overrides the config)");

  auto* sweep = app.add_subcommand("sweep", "Run the 9-case corrosion grid");
  sweep->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "Output directory (overrides the config)");

  std::string trace_path;
  auto* report = app.add_subcommand("report", "Summarize a trace.csv");
  report->add_option("--trace", trace_path, "trace.csv")->required()->check(CLI::ExistingFile);
  report->add_option("--out", out, "Summary JSON (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*truth) {
      CaseConfig c;
      c.truth_seed = seed;
      if (case_kind == "crack") {
        write_crack_dataset(out, make_problem(c).crack.value());
      } else {
        c.kind = CaseKind::corrosion;
        c.kl_modes = modes;
        c.kl_nodes = nodes;
        write_corrosion_dataset(out, make_problem(c).corrosion.value());
      }
    } else if (*reference) {
      CaseConfig c;
      c.truth_seed = seed;
      ReferenceConfig rc;
      if (case_kind == "corrosion") {
        c.kind = CaseKind::corrosion;
        c.n_elements = elements;
        c.n_sensors = sensors;
        rc.kind = ReferenceKind::kalman;
      }
      rc.k_max = k_max;
      rc.n_samples = samples;
      rc.seed = ref_seed;
      const auto problem = make_problem(c);
      Json j = Json::array();
      for (const auto& r : compute_reference(problem, rc, ExecutionPolicy::parallel)) {
        j.push_back({{"step", r.step},
                     {"source", r.source},
                     {"mean", to_json(r.mean)},
                     {"std", to_json(r.std)},
                     {"correlation_lower", packed_lower(r.correlation)}});
      }
      write_json(out, j);
    } else if (*run) {
      const auto result = run_experiment(load_config(config_path, out));
      print_cost(result);
    } else if (*sweep) {
      const auto base = load_config(config_path, out);
      if (base.problem.kind != CaseKind::corrosion) throw ConfigError("sweep needs the corrosion case");
      const fs::path root = base.output_dir.empty() ? fs::path("sweep") : fs::path(base.output_dir);
      for (std::size_t m : {25, 50, 100}) {
        for (std::size_t l : {2, 4, 10}) {
          auto c = base;
          c.problem.n_elements = m;
          c.problem.n_sensors = l;
          c.output_dir = (root / ("m" + std::to_string(m) + "_l" + std::to_string(l))).string();
          std::cout << c.output_dir << ": ";
          print_cost(run_experiment(c));
        }
      }
    } else if (*report) {
      const Json summary = summarize_trace_csv(trace_path);
      if (out.empty()) {
        std::cout << summary.dump(2) << "\n";
      } else {
        write_json(out, summary);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DegeneracyError& e) {
    std::cerr << "degenerate: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const ReferenceError& e) {
    std::cerr << "reference failure: " << e.what() << "\n";
    return kExitReference;
  }
  return 0;
}
