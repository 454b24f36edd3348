#pragma once

#include <atomic>
#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bayesdet/corrosion.hpp"
#include "bayesdet/model.hpp"
#include "bayesdet/probability.hpp"

namespace testing {

// y = H(t) theta + e, e ~ N(0, s^2), with H(t) = [1, t] (or [1] in 1-d) and a
// standard-normal prior.
class LinearGaussianModel final : public bayesdet::DeteriorationModel {
 public:
  explicit LinearGaussianModel(std::size_t dim, double noise_std)
      : prior_(std::vector<bayesdet::Marginal>(dim, bayesdet::NormalMarginal{0.0, 1.0})),
        noise_(noise_std) {}

  std::size_t dim() const override { return prior_.dim(); }
  const bayesdet::PriorModel& prior() const override { return prior_; }
  std::vector<double> state(std::span<const double> theta, double time) const override {
    return {row(time).dot(Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size())))};
  }

  Eigen::VectorXd row(double t) const {
    Eigen::VectorXd h = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim()));
    if (dim() > 1) h(1) = t;
    return h;
  }

  // Closed-form posterior mean and covariance.
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> posterior(const bayesdet::MeasurementSeries& data) const {
    const auto d = static_cast<Eigen::Index>(dim());
    Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
    for (const auto& y : data) {
      const Eigen::VectorXd h = row(y.time);
      precision += h * h.transpose() / (noise_ * noise_);
      b += h * y.values[0] / (noise_ * noise_);
    }
    const Eigen::MatrixXd cov = precision.inverse();
    return {cov * b, cov};
  }

 protected:
  double do_log_likelihood(std::span<const double> theta, const bayesdet::Measurement& y) const override {
    const double pred = state(theta, y.time)[0];
    return bayesdet::normal_log_pdf(y.values[0], pred, noise_);
  }

 private:
  bayesdet::PriorModel prior_;
  double noise_;
};

// Likelihood identically one.
class FlatModel final : public bayesdet::DeteriorationModel {
 public:
  explicit FlatModel(std::size_t dim)
      : prior_(std::vector<bayesdet::Marginal>(dim, bayesdet::NormalMarginal{0.0, 1.0})) {}
  std::size_t dim() const override { return prior_.dim(); }
  const bayesdet::PriorModel& prior() const override { return prior_; }
  std::vector<double> state(std::span<const double>, double) const override { return {0.0}; }

 protected:
  double do_log_likelihood(std::span<const double>, const bayesdet::Measurement&) const override { return 0.0; }

 private:
  bayesdet::PriorModel prior_;
};

// Forwards to another model and keeps its own tally of likelihood calls.
class CountingModel final : public bayesdet::DeteriorationModel {
 public:
  explicit CountingModel(const bayesdet::DeteriorationModel& inner) : inner_(inner) {}
  std::size_t dim() const override { return inner_.dim(); }
  const bayesdet::PriorModel& prior() const override { return inner_.prior(); }
  std::vector<double> state(std::span<const double> theta, double t) const override {
    return inner_.state(theta, t);
  }
  std::uint64_t tally() const { return tally_.load(); }

 protected:
  double do_log_likelihood(std::span<const double> theta, const bayesdet::Measurement& y) const override {
    tally_.fetch_add(1);
    return inner_.log_likelihood(theta, y);
  }

 private:
  const bayesdet::DeteriorationModel& inner_;
  mutable std::atomic<std::uint64_t> tally_{0};
};

inline const bayesdet::KlBasis& shared_basis() {
  static const bayesdet::KlBasis basis = bayesdet::kl_basis(2000, 400);
  return basis;
}

// Gauss-Hermite rule for weight exp(-x^2 / 2) / sqrt(2 pi) (probabilists'),
// via the Golub-Welsch eigenproblem.
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(int n) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) j(i, i - 1) = j(i - 1, i) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    w[static_cast<std::size_t>(i)] = v * v;
  }
  return {x, w};
}

}  // namespace testing
