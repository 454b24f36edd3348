#include "bayesdet/crack.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "bayesdet/errors.hpp"
#include "bayesdet/rng.hpp"

namespace bayesdet {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kExponentialBand = 1e-9;
constexpr std::size_t kBatchesPerRound = 8;
}  // namespace

CrackParams CrackParams::from_span(std::span<const double> theta) {
  if (theta.size() != 4) throw ContractError("CrackParams: expected 4 parameters");
  return {theta[0], theta[1], theta[2], theta[3]};
}

std::optional<double> try_crack_length(double n, const CrackParams& p) {
  if (!(p.a0 > 0.0) || !(p.delta_s > 0.0) || !(n >= 0.0)) return std::nullopt;
  if (n == 0.0) return p.a0;
  const double log_rate = p.c_ln + p.m * std::log(p.delta_s) + 0.5 * p.m * std::log(std::numbers::pi);
  const double e = 1.0 - 0.5 * p.m;
  double a;
  if (std::abs(p.m - 2.0) < kExponentialBand) {
    a = p.a0 * std::exp(std::exp(log_rate) * n);
  } else {
    const double bracket = e * std::exp(log_rate) * n + std::pow(p.a0, e);
    if (!(bracket > 0.0)) return std::nullopt;
    a = std::pow(bracket, 1.0 / e);
  }
  if (!std::isfinite(a)) return std::nullopt;
  return a;
}

double crack_length(double n, const CrackParams& p) {
  const auto a = try_crack_length(n, p);
  if (!a) throw DomainError("crack_length: trajectory diverged or parameters are invalid");
  return *a;
}

double crack_log_likelihood(double y, double n, const CrackParams& p, const MeasurementError& err) {
  if (!(y > 0.0)) throw DomainError("crack_log_likelihood: measurement must be positive");
  const auto a = try_crack_length(n, p);
  if (!a) return kNegInf;
  const double r = (std::log(y) - err.mu_log - std::log(*a)) / err.sigma_log;
  return -std::log(err.sigma_log) - 0.5 * kLog2Pi - 0.5 * r * r;
}

MeasurementError crack_measurement_error() { return lognormal_params_from_moments(1.0, 0.1508); }

CrackParams crack_theta_star() { return {2.0, 50.0, -33.5, 3.7}; }

PriorModel crack_prior() {
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(4, 4);
  corr(2, 3) = corr(3, 2) = -0.9;
  return PriorModel({ExponentialMarginal{1.0}, NormalMarginal{60.0, 10.0},
                     NormalMarginal{-33.0, 0.47}, NormalMarginal{3.5, 0.3}},
                    corr);
}

MeasurementSeries CrackDataset::series() const { return series(measurements.size()); }

MeasurementSeries CrackDataset::series(std::size_t k) const {
  if (k > measurements.size()) throw ContractError("CrackDataset::series: k exceeds dataset length");
  MeasurementSeries out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = {cycles[i], {measurements[i]}};
  return out;
}

CrackDataset generate_crack_dataset(const CrackParams& theta_star, const MeasurementError& err,
                                    std::uint64_t seed, std::size_t steps, double delta_n) {
  CrackDataset ds;
  ds.theta_star = theta_star;
  ds.error = err;
  ds.seed = seed;
  ds.delta_n = delta_n;
  auto rng = make_stream(seed, StreamTag::measurement_noise);
  std::vector<double> z(steps);
  fill_standard_normal(rng, z);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double n = static_cast<double>(k) * delta_n;
    const auto a = try_crack_length(n, theta_star);
    if (!a) throw DomainError("generate_crack_dataset: truth trajectory diverges at step " + std::to_string(k));
    ds.cycles.push_back(n);
    ds.true_lengths.push_back(*a);
    ds.measurements.push_back(*a * std::exp(err.mu_log + err.sigma_log * z[k - 1]));
  }
  return ds;
}

CrackModel::CrackModel() : CrackModel(crack_prior(), crack_measurement_error()) {}

CrackModel::CrackModel(PriorModel prior, MeasurementError err)
    : prior_(std::move(prior)), err_(err) {
  if (prior_.dim() != 4) throw ContractError("CrackModel: prior must be 4-dimensional");
}

std::vector<std::string> CrackModel::parameter_names() const { return {"a0", "dS", "C_ln", "m"}; }

std::vector<double> CrackModel::state(std::span<const double> theta, double time) const {
  const auto a = try_crack_length(time, CrackParams::from_span(theta));
  return {a ? *a : std::numeric_limits<double>::quiet_NaN()};
}

double CrackModel::do_log_likelihood(std::span<const double> theta, const Measurement& y) const {
  if (y.values.size() != 1) throw ContractError("CrackModel: measurement must hold one value");
  return crack_log_likelihood(y.values[0], y.time, CrackParams::from_span(theta), err_);
}

RejectionResult rejection_sample_posterior(const CrackDataset& data, std::size_t k,
                                           const PriorModel& prior,
                                           const RejectionOptions& options) {
  if (k < 1 || k > data.measurements.size()) throw ContractError("rejection_sample_posterior: k out of range");
  if (prior.dim() != 4) throw ContractError("rejection_sample_posterior: prior must be 4-dimensional");
  const double log_sup = -std::log(data.error.sigma_log) - 0.5 * kLog2Pi;
  const double envelope = static_cast<double>(k) * log_sup;
  const std::size_t batch = options.batch_size;

  RejectionResult out;
  out.samples.resize(static_cast<Eigen::Index>(options.n_samples), 4);
  std::size_t accepted = 0;
  std::uint64_t next_batch = 0;
  std::vector<std::vector<double>> round(kBatchesPerRound);
  std::vector<std::vector<std::size_t>> positions(kBatchesPerRound);

  while (accepted < options.n_samples) {
    if (out.proposals >= options.max_proposals) {
      throw InfeasibleError("rejection sampling: proposal budget exhausted after " +
                            std::to_string(out.proposals) + " proposals with " +
                            std::to_string(accepted) + " accepted");
    }
    parallel_for(options.policy, kBatchesPerRound, [&](std::size_t r) {
      auto rng = make_stream(options.seed, StreamTag::rejection, next_batch + r);
      auto& kept = round[r];
      kept.clear();
      positions[r].clear();
      double u[4];
      double theta[4];
      for (std::size_t j = 0; j < batch; ++j) {
        fill_standard_normal(rng, u);
        const double uniform = uniform01(rng);
        prior.from_standard_normal(u, theta);
        const CrackParams p{theta[0], theta[1], theta[2], theta[3]};
        double ll = 0.0;
        for (std::size_t i = 0; i < k && ll > kNegInf; ++i) {
          ll += crack_log_likelihood(data.measurements[i], data.cycles[i], p, data.error);
        }
        if (std::log(uniform) < ll - envelope) {
          kept.insert(kept.end(), theta, theta + 4);
          positions[r].push_back(j);
        }
      }
    });
    for (std::size_t r = 0; r < kBatchesPerRound && accepted < options.n_samples; ++r) {
      const auto& kept = round[r];
      std::size_t used = batch;
      for (std::size_t a = 0; a < positions[r].size(); ++a) {
        if (accepted == options.n_samples) break;
        for (Eigen::Index c = 0; c < 4; ++c) {
          out.samples(static_cast<Eigen::Index>(accepted), c) = kept[4 * a + static_cast<std::size_t>(c)];
        }
        if (++accepted == options.n_samples) used = positions[r][a] + 1;
      }
      out.proposals += used;
    }
    next_batch += kBatchesPerRound;
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(out.proposals);
  return out;
}

}  // namespace bayesdet
