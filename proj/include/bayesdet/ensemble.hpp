#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bayesdet/parallel.hpp"
#include "bayesdet/prior.hpp"
#include "bayesdet/rng.hpp"

namespace bayesdet {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> row_span(const RowMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}
inline std::span<double> row_span(RowMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

// Particle set {theta_i, w_i}. Rows of `theta` are in physical units, rows of
// `u` are the same particles in standard-normal space; both are kept in sync.
struct WeightedEnsemble {
  RowMatrix theta;
  RowMatrix u;
  std::vector<double> log_weights;
  // Running log L(y_1:n | theta_i); empty when the filter does not cache it.
  std::vector<double> log_likelihoods;

  std::size_t size() const { return static_cast<std::size_t>(theta.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(theta.cols()); }

  void set_uniform_weights();
  // Throws ContractError if shapes disagree, N < 2, d < 1, or theta has
  // non-finite entries.
  void validate() const;
};

// N prior draws; particle i uses its own stream so the draw is independent of
// the thread schedule.
WeightedEnsemble sample_prior(const PriorModel& prior, std::size_t n, std::uint64_t seed,
                              ExecutionPolicy policy = ExecutionPolicy::parallel);

double ensemble_ess(const WeightedEnsemble& ensemble);

// n indices drawn with replacement, P(i) = exp(log_weights[i]).
std::vector<std::size_t> multinomial_indices(std::span<const double> log_weights, std::size_t n,
                                             Rng& rng);

// Rows picked by `indices`; cached log-likelihoods follow their particles and
// weights reset to uniform.
WeightedEnsemble select_particles(const WeightedEnsemble& ensemble,
                                  std::span<const std::size_t> indices);

WeightedEnsemble resample_multinomial(const WeightedEnsemble& ensemble, Rng& rng);

// Smallest value whose cumulative normalized weight reaches p.
double weighted_quantile(std::span<const double> values, std::span<const double> log_weights,
                         double p);
double weighted_quantile(const WeightedEnsemble& ensemble, std::size_t parameter, double p);

struct PosteriorSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  Eigen::MatrixXd correlation;
  Eigen::VectorXd q05;
  Eigen::VectorXd q95;
};

PosteriorSummary summarize(const RowMatrix& samples, std::span<const double> log_weights);
PosteriorSummary summarize(const WeightedEnsemble& ensemble);

}  // namespace bayesdet
