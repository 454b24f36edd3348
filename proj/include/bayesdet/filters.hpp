#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bayesdet/ensemble.hpp"
#include "bayesdet/gmm.hpp"
#include "bayesdet/model.hpp"
#include "bayesdet/parallel.hpp"

namespace bayesdet {

enum class Algorithm { pf, pfgm, tpfgm, ibis, tibis, smc };

std::string_view to_string(Algorithm a);
// Throws ConfigError for unknown names.
Algorithm algorithm_from_string(std::string_view name);
bool uses_tempering(Algorithm a);

struct FilterConfig {
  std::size_t n_particles = 1000;
  // Resampling threshold N_T = resample_fraction * n_particles.
  double resample_fraction = 0.5;
  std::size_t n_gm = 8;
  std::size_t burn_in = 0;
  std::uint64_t seed = 1;
  ExecutionPolicy policy = ExecutionPolicy::parallel;
  EmOptions em{};

  double threshold() const { return resample_fraction * static_cast<double>(n_particles); }
  // Throws ConfigError unless 1 <= N_T <= N and N >= 2.
  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;  // 0 is the prior
  double time = 0.0;
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  Eigen::MatrixXd correlation;
  Eigen::VectorXd q05;
  Eigen::VectorXd q95;
  // ESS after weighting with the full new likelihood, before any resampling.
  double ess = 0.0;
  std::size_t resample_events = 0;
  // Tempering exponents reached within the step (strictly increasing, last is
  // 1) and the post-reweight ESS at each rung. Empty when no tempering ran.
  std::vector<double> ladder;
  std::vector<double> ladder_ess;
  std::vector<double> acceptance_rates;
  std::uint64_t evaluations = 0;  // cumulative
  bool gmm_fallback = false;
};

struct EmRecord {
  std::size_t step = 0;
  std::size_t rung = 0;
  std::size_t iterations = 0;
  std::size_t components = 0;
  bool converged = false;
  bool monotone = true;
};

struct FilterReport {
  Algorithm algorithm = Algorithm::pf;
  FilterConfig config;
  std::vector<StepRecord> steps;
  WeightedEnsemble final_ensemble;
  std::uint64_t evaluations = 0;
  std::size_t resample_events = 0;
  // Rungs where the tempered ESS was already below N_T for vanishing
  // exponent (particles with zero likelihood); weights were purged without
  // advancing q.
  std::size_t purge_events = 0;
  std::size_t gmm_fallbacks = 0;
  std::vector<EmRecord> em_fits;
};

// dq in (0, 1 - q] at which the ESS of w_aux * L^dq equals n_threshold, by
// bisection in log space. Requires tempered ESS(0+) > n_threshold >
// tempered ESS(1 - q); ContractError otherwise.
double solve_temper_increment(std::span<const double> log_likelihoods,
                              std::span<const double> log_weights_aux, double q,
                              double n_threshold);

// Per-particle likelihood split used by the move kernel: the tempered log
// target is past + power * current (+ the standard-normal prior in u-space).
struct LikelihoodParts {
  double past = 0.0;
  double current = 0.0;
};

struct TemperedTarget {
  std::function<LikelihoodParts(std::span<const double> theta)> evaluate;
  double power = 1.0;
};

struct MoveStreams {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t rung = 0;
};

// Independent Metropolis-Hastings with the mixture as proposal, n_burn + 1
// proposals per particle, all densities in u-space. `cache` holds each
// particle's current likelihood parts and is updated on acceptance. Returns
// the mean acceptance rate.
double imh_gm_move(RowMatrix& theta, RowMatrix& u, std::vector<LikelihoodParts>& cache,
                   const TemperedTarget& target, const PriorModel& prior,
                   const GaussianMixture& mixture, std::size_t n_burn, MoveStreams streams,
                   ExecutionPolicy policy);

struct MoveResult {
  WeightedEnsemble ensemble;
  double acceptance_rate = 0.0;
};

// Ensemble form: `ensemble.log_likelihoods` holds log L(theta_i) and
// `target_log_lik` evaluates it for candidates.
MoveResult imh_gm_move(const WeightedEnsemble& ensemble,
                       const std::function<double(std::span<const double>)>& target_log_lik,
                       const PriorModel& prior, const GaussianMixture& mixture,
                       std::size_t n_burn, std::uint64_t seed,
                       ExecutionPolicy policy = ExecutionPolicy::parallel);

FilterReport pf_run(const DeteriorationModel& model, const MeasurementSeries& data,
                    const FilterConfig& config);
FilterReport pfgm_run(const DeteriorationModel& model, const MeasurementSeries& data,
                      const FilterConfig& config);
FilterReport tpfgm_run(const DeteriorationModel& model, const MeasurementSeries& data,
                       const FilterConfig& config);
FilterReport ibis_run(const DeteriorationModel& model, const MeasurementSeries& data,
                      const FilterConfig& config);
FilterReport tibis_run(const DeteriorationModel& model, const MeasurementSeries& data,
                       const FilterConfig& config);
// Off-line: one posterior for the whole series. steps[0] is the prior,
// steps[1] the final posterior with the tempering ladder.
FilterReport smc_run(const DeteriorationModel& model, const MeasurementSeries& data,
                     const FilterConfig& config);

FilterReport run_filter(Algorithm algorithm, const DeteriorationModel& model,
                        const MeasurementSeries& data, const FilterConfig& config);

}  // namespace bayesdet
