#pragma once

#include <span>
#include <vector>

namespace bayesdet {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Multiplicative lognormal error exp(eps), eps ~ N(mu_log, sigma_log^2).
struct MeasurementError {
  double mu_log = 0.0;
  double sigma_log = 1.0;
};

// Log-scale parameters of a lognormal variable given its own mean and
// standard deviation.
MeasurementError lognormal_params_from_moments(double mean, double std);

double log_sum_exp(std::span<const double> values);

// Subtracts logsumexp so that exp(.) sums to one. Throws DegeneracyError when
// every entry is -inf.
std::vector<double> normalize_log_weights(std::span<const double> log_weights);
void normalize_log_weights_in_place(std::span<double> log_weights);

// 1 / sum w_i^2 for normalized log-weights; ContractError otherwise.
double ess(std::span<const double> log_weights);

// ESS of the weights w_i * L_i^power (log form: lw + power * ll), without
// materialising them. Entries with ll = -inf drop out for power > 0.
double tempered_ess(std::span<const double> log_weights, std::span<const double> log_likelihoods,
                    double power);

double normal_log_pdf(double x, double mean, double std);

// d-dimensional standard-normal log-density.
double log_prior_density_u(std::span<const double> u);

double normal_cdf(double z);
// Probability is clamped to [1e-15, 1 - 1e-15] before inversion.
double normal_quantile(double p);

}  // namespace bayesdet
