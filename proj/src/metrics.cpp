#include "bayesdet/metrics.hpp"

#include <cmath>
#include <limits>

#include "bayesdet/errors.hpp"
#include "bayesdet/probability.hpp"

namespace bayesdet {

double relative_error(double ref, double est) {
  if (ref == 0.0) throw DomainError("relative_error: reference is zero");
  return std::abs(ref - est) / std::abs(ref);
}

double l2_rel_error_norm(const Eigen::VectorXd& ref, const Eigen::VectorXd& est) {
  if (ref.size() != est.size()) throw ContractError("l2_rel_error_norm: length mismatch");
  const double denom = ref.squaredNorm();
  if (denom == 0.0) throw DomainError("l2_rel_error_norm: reference is all zero");
  return std::sqrt((ref - est).squaredNorm() / denom);
}

Eigen::VectorXd strict_lower_triangle(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  Eigen::VectorXd out(n * (n - 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) out(k++) = m(i, j);
  }
  return out;
}

double correlation_error_norm(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& est) {
  if (ref.rows() != est.rows() || ref.cols() != est.cols() || ref.rows() != ref.cols()) {
    throw ContractError("correlation_error_norm: dimension mismatch");
  }
  return l2_rel_error_norm(strict_lower_triangle(ref), strict_lower_triangle(est));
}

std::vector<StateSummary> pushforward_state(const WeightedEnsemble& ensemble,
                                            const DeteriorationModel& model,
                                            std::span<const double> times) {
  const std::size_t n = ensemble.size();
  const auto w = normalize_log_weights(ensemble.log_weights);
  std::vector<StateSummary> out;
  for (double t : times) {
    std::vector<std::vector<double>> states(n);
    std::size_t width = 0;
    for (std::size_t i = 0; i < n; ++i) {
      states[i] = model.state(row_span(ensemble.theta, static_cast<Eigen::Index>(i)), t);
      width = std::max(width, states[i].size());
    }
    StateSummary s;
    s.time = t;
    std::vector<double> lw(n);
    double diverged = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      bool finite = states[i].size() == width;
      for (double v : states[i]) finite = finite && std::isfinite(v);
      lw[i] = finite ? w[i] : -std::numeric_limits<double>::infinity();
      if (!finite) diverged += std::exp(w[i]);
    }
    s.diverged_mass = std::min(1.0, diverged);
    s.warning = s.diverged_mass > 0.5;
    const auto dw = static_cast<Eigen::Index>(width);
    s.mean = Eigen::VectorXd::Constant(dw, std::numeric_limits<double>::quiet_NaN());
    s.q05 = s.mean;
    s.q95 = s.mean;
    if (diverged < 1.0 && log_sum_exp(lw) > -std::numeric_limits<double>::infinity()) {
      normalize_log_weights_in_place(lw);
      std::vector<double> values(n);
      for (Eigen::Index c = 0; c < dw; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          values[i] = lw[i] > -std::numeric_limits<double>::infinity() ? states[i][static_cast<std::size_t>(c)] : 0.0;
          mean += std::exp(lw[i]) * values[i];
        }
        s.mean(c) = mean;
        s.q05(c) = weighted_quantile(values, lw, 0.05);
        s.q95(c) = weighted_quantile(values, lw, 0.95);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace bayesdet
