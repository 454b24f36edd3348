#include "bayesdet/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bayesdet/errors.hpp"
#include "bayesdet/probability.hpp"

namespace bayesdet {

void WeightedEnsemble::set_uniform_weights() {
  log_weights.assign(size(), -std::log(static_cast<double>(size())));
}

void WeightedEnsemble::validate() const {
  if (theta.rows() < 2) throw ContractError("ensemble: at least two particles required");
  if (theta.cols() < 1) throw ContractError("ensemble: dimension must be at least one");
  if (u.rows() != theta.rows() || u.cols() != theta.cols()) {
    throw ContractError("ensemble: theta and u shapes differ");
  }
  if (log_weights.size() != size()) throw ContractError("ensemble: weight count mismatch");
  if (!log_likelihoods.empty() && log_likelihoods.size() != size()) {
    throw ContractError("ensemble: cached likelihood count mismatch");
  }
  if (!theta.allFinite()) throw ContractError("ensemble: non-finite particle coordinate");
}

WeightedEnsemble sample_prior(const PriorModel& prior, std::size_t n, std::uint64_t seed,
                              ExecutionPolicy policy) {
  const auto d = static_cast<Eigen::Index>(prior.dim());
  WeightedEnsemble ens;
  ens.theta.resize(static_cast<Eigen::Index>(n), d);
  ens.u.resize(static_cast<Eigen::Index>(n), d);
  parallel_for(policy, n, [&](std::size_t i) {
    auto rng = make_stream(seed, StreamTag::prior_draw, i);
    const auto row = static_cast<Eigen::Index>(i);
    fill_standard_normal(rng, row_span(ens.u, row));
    prior.from_standard_normal(row_span(ens.u, row), row_span(ens.theta, row));
  });
  ens.set_uniform_weights();
  return ens;
}

double ensemble_ess(const WeightedEnsemble& ensemble) { return ess(ensemble.log_weights); }

std::vector<std::size_t> multinomial_indices(std::span<const double> log_weights, std::size_t n,
                                             Rng& rng) {
  if (log_weights.empty()) throw ContractError("multinomial_indices: no weights");
  std::vector<double> cumulative(log_weights.size());
  double running = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    running += std::exp(log_weights[i]);
    cumulative[i] = running;
  }
  std::vector<std::size_t> out(n);
  for (auto& idx : out) {
    const double target = uniform01(rng) * running;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    idx = static_cast<std::size_t>(std::distance(cumulative.begin(), it));
    // Round-off at the top end; never land on a zero-weight tail.
    if (idx >= cumulative.size()) idx = cumulative.size() - 1;
    while (idx > 0 && std::exp(log_weights[idx]) == 0.0) --idx;
  }
  return out;
}

WeightedEnsemble select_particles(const WeightedEnsemble& ensemble,
                                  std::span<const std::size_t> indices) {
  WeightedEnsemble out;
  const auto n = static_cast<Eigen::Index>(indices.size());
  out.theta.resize(n, ensemble.theta.cols());
  out.u.resize(n, ensemble.u.cols());
  if (!ensemble.log_likelihoods.empty()) out.log_likelihoods.resize(indices.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto src = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(r)]);
    out.theta.row(r) = ensemble.theta.row(src);
    out.u.row(r) = ensemble.u.row(src);
    if (!out.log_likelihoods.empty()) {
      out.log_likelihoods[static_cast<std::size_t>(r)] = ensemble.log_likelihoods[static_cast<std::size_t>(src)];
    }
  }
  out.set_uniform_weights();
  return out;
}

WeightedEnsemble resample_multinomial(const WeightedEnsemble& ensemble, Rng& rng) {
  const auto idx = multinomial_indices(ensemble.log_weights, ensemble.size(), rng);
  return select_particles(ensemble, idx);
}

double weighted_quantile(std::span<const double> values, std::span<const double> log_weights,
                         double p) {
  if (values.size() != log_weights.size() || values.empty()) {
    throw ContractError("weighted_quantile: size mismatch");
  }
  if (!(p > 0.0 && p < 1.0)) throw ContractError("weighted_quantile: p must lie in (0, 1)");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (double lw : log_weights) total += std::exp(lw);
  double cumulative = 0.0;
  for (std::size_t i : order) {
    cumulative += std::exp(log_weights[i]) / total;
    // Tolerance absorbs round-off in sums like 50 * (1/100).
    if (cumulative >= p - 1e-12) return values[i];
  }
  return values[order.back()];
}

double weighted_quantile(const WeightedEnsemble& ensemble, std::size_t parameter, double p) {
  const auto col = static_cast<Eigen::Index>(parameter);
  std::vector<double> values(ensemble.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = ensemble.theta(static_cast<Eigen::Index>(i), col);
  return weighted_quantile(values, ensemble.log_weights, p);
}

PosteriorSummary summarize(const RowMatrix& samples, std::span<const double> log_weights) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  if (static_cast<std::size_t>(n) != log_weights.size()) throw ContractError("summarize: size mismatch");
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = std::exp(log_weights[static_cast<std::size_t>(i)]);
  w /= w.sum();

  PosteriorSummary s;
  s.mean = samples.transpose() * w;
  const RowMatrix centered = samples.rowwise() - s.mean.transpose();
  const RowMatrix scaled = centered.array().colwise() * w.array().sqrt();
  const Eigen::MatrixXd cov = scaled.transpose() * scaled;
  s.std = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  s.correlation = Eigen::MatrixXd::Identity(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      const double denom = s.std[i] * s.std[j];
      const double r = denom > 0.0 ? std::clamp(cov(i, j) / denom, -1.0, 1.0) : 0.0;
      s.correlation(i, j) = r;
      s.correlation(j, i) = r;
    }
  }
  s.q05.resize(d);
  s.q95.resize(d);
  std::vector<double> column(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) column[static_cast<std::size_t>(i)] = samples(i, j);
    s.q05[j] = weighted_quantile(column, log_weights, 0.05);
    s.q95[j] = weighted_quantile(column, log_weights, 0.95);
  }
  return s;
}

PosteriorSummary summarize(const WeightedEnsemble& ensemble) {
  return summarize(ensemble.theta, ensemble.log_weights);
}

}  // namespace bayesdet
