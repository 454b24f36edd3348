#include "bayesdet/prior.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "bayesdet/errors.hpp"
#include "bayesdet/probability.hpp"

namespace bayesdet {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void validate_marginal(const Marginal& m) {
  std::visit(Overloaded{
                 [](const NormalMarginal& n) {
                   if (!(n.std > 0.0)) throw DomainError("normal marginal: std must be positive");
                 },
                 [](const LognormalMarginal& l) {
                   if (!(l.mean > 0.0) || !(l.std > 0.0)) {
                     throw DomainError("lognormal marginal: mean and std must be positive");
                   }
                 },
                 [](const ExponentialMarginal& e) {
                   if (!(e.mean > 0.0)) throw DomainError("exponential marginal: mean must be positive");
                 },
             },
             m);
}

}  // namespace

PriorModel::PriorModel(std::vector<Marginal> marginals)
    : PriorModel(marginals, Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(marginals.size()),
                                                      static_cast<Eigen::Index>(marginals.size()))) {}

PriorModel::PriorModel(std::vector<Marginal> marginals, Eigen::MatrixXd correlation)
    : marginals_(std::move(marginals)), correlation_(std::move(correlation)) {
  const auto d = static_cast<Eigen::Index>(marginals_.size());
  if (d < 1) throw DomainError("PriorModel: at least one marginal required");
  if (correlation_.rows() != d || correlation_.cols() != d) {
    throw DomainError("PriorModel: correlation matrix has the wrong shape");
  }
  for (const auto& m : marginals_) validate_marginal(m);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::abs(correlation_(i, i) - 1.0) > 1e-12) {
      throw DomainError("PriorModel: correlation diagonal must be one");
    }
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(correlation_(i, j) - correlation_(j, i)) > 1e-12) {
        throw DomainError("PriorModel: correlation matrix is not symmetric");
      }
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(correlation_);
  if (llt.info() != Eigen::Success) {
    throw DomainError("PriorModel: correlation matrix is not positive definite");
  }
  cholesky_ = llt.matrixL();
  independent_ = correlation_.isIdentity(0.0);

  log_mu_.assign(marginals_.size(), 0.0);
  log_sigma_.assign(marginals_.size(), 0.0);
  for (std::size_t i = 0; i < marginals_.size(); ++i) {
    if (const auto* l = std::get_if<LognormalMarginal>(&marginals_[i])) {
      const auto p = lognormal_params_from_moments(l->mean, l->std);
      log_mu_[i] = p.mu_log;
      log_sigma_[i] = p.sigma_log;
    }
  }
}

double PriorModel::marginal_to_z(std::size_t i, double x) const {
  return std::visit(
      Overloaded{
          [x](const NormalMarginal& n) { return (x - n.mean) / n.std; },
          [x, i, this](const LognormalMarginal&) {
            if (!(x > 0.0)) throw DomainError("to_standard_normal: lognormal value must be positive");
            return (std::log(x) - log_mu_[i]) / log_sigma_[i];
          },
          [x](const ExponentialMarginal& e) {
            if (!(x > 0.0) || !std::isfinite(x)) {
              throw DomainError("to_standard_normal: exponential value must be positive");
            }
            const double t = x / e.mean;
            // Work with whichever tail keeps full relative precision.
            if (t < std::numbers::ln2) return normal_quantile(-std::expm1(-t));
            return -normal_quantile(std::exp(-t));
          },
      },
      marginals_[i]);
}

double PriorModel::marginal_from_z(std::size_t i, double z) const {
  return std::visit(Overloaded{
                        [z](const NormalMarginal& n) { return n.mean + n.std * z; },
                        [z, i, this](const LognormalMarginal&) {
                          return std::exp(log_mu_[i] + log_sigma_[i] * z);
                        },
                        [z](const ExponentialMarginal& e) {
                          if (z < 0.0) return -e.mean * std::log1p(-normal_cdf(z));
                          const double survival =
                              std::max(normal_cdf(-z), std::numeric_limits<double>::denorm_min());
                          return -e.mean * std::log(survival);
                        },
                    },
                    marginals_[i]);
}

void PriorModel::to_standard_normal(std::span<const double> theta, std::span<double> u) const {
  const std::size_t d = dim();
  if (theta.size() != d || u.size() != d) throw ContractError("to_standard_normal: dimension mismatch");
  for (std::size_t i = 0; i < d; ++i) u[i] = marginal_to_z(i, theta[i]);
  if (!independent_) {
    Eigen::Map<Eigen::VectorXd> z(u.data(), static_cast<Eigen::Index>(d));
    cholesky_.triangularView<Eigen::Lower>().solveInPlace(z);
  }
}

void PriorModel::from_standard_normal(std::span<const double> u, std::span<double> theta) const {
  const std::size_t d = dim();
  if (theta.size() != d || u.size() != d) throw ContractError("from_standard_normal: dimension mismatch");
  if (independent_) {
    for (std::size_t i = 0; i < d; ++i) theta[i] = marginal_from_z(i, u[i]);
    return;
  }
  Eigen::Map<const Eigen::VectorXd> uv(u.data(), static_cast<Eigen::Index>(d));
  const Eigen::VectorXd z = cholesky_.triangularView<Eigen::Lower>() * uv;
  for (std::size_t i = 0; i < d; ++i) theta[i] = marginal_from_z(i, z[static_cast<Eigen::Index>(i)]);
}

Eigen::VectorXd PriorModel::to_standard_normal(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd u(theta.size());
  to_standard_normal(std::span(theta.data(), static_cast<std::size_t>(theta.size())),
                     std::span(u.data(), static_cast<std::size_t>(u.size())));
  return u;
}

Eigen::VectorXd PriorModel::from_standard_normal(const Eigen::VectorXd& u) const {
  Eigen::VectorXd theta(u.size());
  from_standard_normal(std::span(u.data(), static_cast<std::size_t>(u.size())),
                       std::span(theta.data(), static_cast<std::size_t>(theta.size())));
  return theta;
}

bool PriorModel::is_gaussian() const {
  for (const auto& m : marginals_) {
    if (!std::holds_alternative<NormalMarginal>(m)) return false;
  }
  return true;
}

Eigen::VectorXd PriorModel::gaussian_mean() const {
  if (!is_gaussian()) throw ContractError("gaussian_mean: prior has non-normal marginals");
  Eigen::VectorXd mean(static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < dim(); ++i) mean[static_cast<Eigen::Index>(i)] = std::get<NormalMarginal>(marginals_[i]).mean;
  return mean;
}

Eigen::MatrixXd PriorModel::gaussian_covariance() const {
  if (!is_gaussian()) throw ContractError("gaussian_covariance: prior has non-normal marginals");
  Eigen::VectorXd sd(static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < dim(); ++i) sd[static_cast<Eigen::Index>(i)] = std::get<NormalMarginal>(marginals_[i]).std;
  return sd.asDiagonal() * correlation_ * sd.asDiagonal();
}

}  // namespace bayesdet
