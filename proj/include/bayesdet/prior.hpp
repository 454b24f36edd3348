#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace bayesdet {

struct NormalMarginal {
  double mean = 0.0;
  double std = 1.0;
};

// Mean and standard deviation of the variable itself, not of its logarithm.
struct LognormalMarginal {
  double mean = 1.0;
  double std = 1.0;
};

struct ExponentialMarginal {
  double mean = 1.0;
};

using Marginal = std::variant<NormalMarginal, LognormalMarginal, ExponentialMarginal>;

// Prior over theta with a Gaussian-copula dependence structure, together with
// the iso-probabilistic map to independent standard normals:
//   z_i = Phi^-1(F_i(theta_i)),  u = L^-1 z,  correlation = L L^T.
class PriorModel {
 public:
  PriorModel(std::vector<Marginal> marginals, Eigen::MatrixXd correlation);
  explicit PriorModel(std::vector<Marginal> marginals);

  std::size_t dim() const { return marginals_.size(); }
  const std::vector<Marginal>& marginals() const { return marginals_; }
  const Eigen::MatrixXd& correlation() const { return correlation_; }
  const Eigen::MatrixXd& cholesky_factor() const { return cholesky_; }

  // Throws DomainError when theta leaves a marginal's support.
  void to_standard_normal(std::span<const double> theta, std::span<double> u) const;
  void from_standard_normal(std::span<const double> u, std::span<double> theta) const;
  Eigen::VectorXd to_standard_normal(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd from_standard_normal(const Eigen::VectorXd& u) const;

  // True when every marginal is normal, so the prior is jointly Gaussian.
  bool is_gaussian() const;
  Eigen::VectorXd gaussian_mean() const;
  Eigen::MatrixXd gaussian_covariance() const;

 private:
  double marginal_to_z(std::size_t i, double x) const;
  double marginal_from_z(std::size_t i, double z) const;

  std::vector<Marginal> marginals_;
  Eigen::MatrixXd correlation_;
  Eigen::MatrixXd cholesky_;
  bool independent_ = false;
  // Log-scale parameters for lognormal marginals (unused slots stay zero).
  std::vector<double> log_mu_;
  std::vector<double> log_sigma_;
};

}  // namespace bayesdet
