#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bayesdet/corrosion.hpp"
#include "bayesdet/crack.hpp"
#include "bayesdet/filters.hpp"
#include "bayesdet/io.hpp"

namespace bayesdet {

enum class CaseKind { crack, corrosion };

struct CaseConfig {
  CaseKind kind = CaseKind::crack;
  std::size_t n_elements = 25;
  std::size_t n_sensors = 2;
  std::uint64_t truth_seed = 1;
  std::size_t kl_modes = 400;
  std::size_t kl_nodes = 2000;
};

enum class ReferenceKind { rejection, kalman };

struct ReferenceConfig {
  ReferenceKind kind = ReferenceKind::rejection;
  // Rejection sampling covers steps 1..k_max.
  std::size_t k_max = 10;
  std::size_t n_samples = 10000;
  std::uint64_t seed = 1;
  // Steps beyond k_max checked against SMC with smc_particles particles.
  std::vector<std::size_t> smc_steps;
  std::size_t smc_particles = 50000;
};

struct ExperimentConfig {
  CaseConfig problem;
  Algorithm filter = Algorithm::pfgm;
  FilterConfig filter_config;
  std::size_t repetitions = 50;
  ReferenceConfig reference;
  std::string output_dir;
  std::uint64_t base_seed = 1;
  // SMC only: re-run at these steps and interpolate in between. Empty means
  // one run on the whole series.
  std::vector<std::size_t> smc_steps;

  // Throws ConfigError.
  void validate() const;
};

Json to_json(const ExperimentConfig& config);
// Missing fields take their defaults; unknown enum names throw ConfigError.
ExperimentConfig config_from_json(const Json& j);

// A model plus its measurement series.
struct Problem {
  CaseConfig config;
  std::optional<CrackDataset> crack;
  std::optional<CorrosionDataset> corrosion;
  MeasurementSeries data;

  std::unique_ptr<DeteriorationModel> make_model() const;
};

Problem make_problem(const CaseConfig& config);
Problem make_problem(const CaseConfig& config, const KlBasis& basis);

struct ReferencePosterior {
  std::size_t step = 0;
  std::string source;  // "rejection", "kalman" or "smc"
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  Eigen::MatrixXd correlation;
};

// Throws ReferenceError (or InfeasibleError for an exhausted rejection budget).
std::vector<ReferencePosterior> compute_reference(const Problem& problem,
                                                  const ReferenceConfig& config,
                                                  ExecutionPolicy policy);

struct TraceRow {
  std::size_t step = 0;
  std::string metric;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool interpolated = false;
};

struct RunRecord {
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string failure;
  std::uint64_t evaluations = 0;
  double diverged_mass = 0.0;
  std::vector<FilterReport> reports;  // one per SMC re-run, otherwise one
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<TraceRow> trace;
  std::vector<RunRecord> runs;
  double mean_evaluations = 0.0;
  std::size_t failed_runs = 0;
};

// Runs every repetition, aggregates error traces against the reference and,
// when config.output_dir is set, writes config.json, trace.csv and
// report.json there. Throws DegeneracyError when more than 10% of the
// repetitions fail.
ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config, const Problem& problem,
                                const std::vector<ReferencePosterior>& reference);

std::string trace_to_csv(const std::vector<TraceRow>& trace);
Json experiment_report(const ExperimentResult& result);
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir);

// Summary of a trace.csv: final-step and worst values per metric.
Json summarize_trace_csv(const std::filesystem::path& trace_csv);

}  // namespace bayesdet
