#include "bayesdet/probability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "bayesdet/errors.hpp"

namespace bayesdet {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kProbClamp = 1e-15;
}  // namespace

MeasurementError lognormal_params_from_moments(double mean, double std) {
  if (!(mean > 0.0) || !(std > 0.0)) {
    throw DomainError("lognormal_params_from_moments: mean and std must be positive");
  }
  const double cv = std / mean;
  const double var_log = std::log1p(cv * cv);
  return {std::log(mean) - 0.5 * var_log, std::sqrt(var_log)};
}

double log_sum_exp(std::span<const double> values) {
  double peak = kNegInf;
  for (double v : values) {
    if (std::isnan(v)) throw ContractError("log_sum_exp: NaN entry");
    peak = std::max(peak, v);
  }
  if (!std::isfinite(peak)) return peak;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

void normalize_log_weights_in_place(std::span<double> log_weights) {
  const double total = log_sum_exp(log_weights);
  if (total == kNegInf) {
    throw DegeneracyError("normalize_log_weights: every weight is zero");
  }
  if (!std::isfinite(total)) throw ContractError("normalize_log_weights: +inf log-weight");
  for (auto& w : log_weights) w -= total;
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  std::vector<double> out(log_weights.begin(), log_weights.end());
  normalize_log_weights_in_place(out);
  return out;
}

double ess(std::span<const double> log_weights) {
  if (log_weights.empty()) throw ContractError("ess: empty weight vector");
  const double total = log_sum_exp(log_weights);
  if (!(std::abs(total) <= 1e-9)) throw ContractError("ess: log-weights are not normalized");
  double sum_sq = 0.0;
  for (double lw : log_weights) sum_sq += std::exp(2.0 * lw);
  const double n = static_cast<double>(log_weights.size());
  return std::clamp(1.0 / sum_sq, 1.0, n);
}

double tempered_ess(std::span<const double> log_weights, std::span<const double> log_likelihoods,
                    double power) {
  if (log_weights.size() != log_likelihoods.size()) {
    throw ContractError("tempered_ess: size mismatch");
  }
  const std::size_t n = log_weights.size();
  double peak = kNegInf;
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = power == 0.0 ? log_weights[i] : log_weights[i] + power * log_likelihoods[i];
    if (std::isnan(a[i])) a[i] = kNegInf;
    peak = std::max(peak, a[i]);
  }
  if (peak == kNegInf) return 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  for (double v : a) {
    const double e = std::exp(v - peak);
    s1 += e;
    s2 += e * e;
  }
  return s1 * s1 / s2;
}

double normal_log_pdf(double x, double mean, double std) {
  const double z = (x - mean) / std;
  return -0.5 * kLog2Pi - std::log(std) - 0.5 * z * z;
}

double log_prior_density_u(std::span<const double> u) {
  double sq = 0.0;
  for (double x : u) sq += x * x;
  return -0.5 * static_cast<double>(u.size()) * kLog2Pi - 0.5 * sq;
}

double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, std::clamp(p, kProbClamp, 1.0 - kProbClamp));
}

}  // namespace bayesdet
