#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bayesdet/ensemble.hpp"
#include "bayesdet/parallel.hpp"
#include "bayesdet/rng.hpp"

namespace bayesdet {

// Sum_k phi_k N(u; mu_k, Sigma_k) with cached Cholesky factors.
class GaussianMixture {
 public:
  // Weights are renormalized; throws FitError if a covariance cannot be
  // factorized.
  GaussianMixture(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                  std::vector<Eigen::MatrixXd> covariances);

  std::size_t components() const { return weights_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(means_.front().size()); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& means() const { return means_; }
  const std::vector<Eigen::MatrixXd>& covariances() const { return covariances_; }
  const Eigen::MatrixXd& cholesky(std::size_t k) const { return cholesky_[k]; }
  double log_determinant(std::size_t k) const { return log_dets_[k]; }

  double component_log_density(std::size_t k, std::span<const double> u) const;
  double log_density(std::span<const double> u) const;

  // One draw written to `out`; returns the selected component.
  std::size_t sample_one(Rng& rng, std::span<double> out) const;
  RowMatrix sample(std::size_t n, Rng& rng) const;

 private:
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covariances_;
  std::vector<Eigen::MatrixXd> cholesky_;
  std::vector<double> log_dets_;
};

struct EmOptions {
  std::size_t components = 8;
  double regularization = 1e-6;
  double relative_tolerance = 1e-6;
  std::size_t max_iterations = 200;
  ExecutionPolicy policy = ExecutionPolicy::parallel;
};

struct EmFit {
  GaussianMixture mixture;
  // Regularized weighted log-likelihood after each E-step:
  //   sum_i w_i log p(u_i) - (eps / 2) sum_k tr(Sigma_k^-1).
  std::vector<double> objective;
  // Indices into `objective` where a component was dropped; monotonicity is
  // only defined between consecutive entries without a drop in between.
  std::vector<std::size_t> restarts;
  std::size_t iterations = 0;
  std::size_t dropped_components = 0;
  bool converged = false;

  bool monotone(double slack = 1e-9) const;
};

// k-means++ style seeding with weight-proportional selection.
std::vector<Eigen::VectorXd> kmeanspp_centers(const RowMatrix& samples,
                                              std::span<const double> log_weights,
                                              std::size_t components, Rng& rng);

// Weighted EM. Requires N >= K (d + 1) and normalized log-weights. Components
// whose responsibility mass drops below 1/N are removed; FitError if none are
// left.
EmFit fit_em(const RowMatrix& samples, std::span<const double> log_weights,
             const EmOptions& options, std::uint64_t seed);
EmFit fit_em(const RowMatrix& samples, std::span<const double> log_weights,
             std::vector<Eigen::VectorXd> initial_means, const EmOptions& options);

}  // namespace bayesdet
