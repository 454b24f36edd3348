#include "bayesdet/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "bayesdet/errors.hpp"
#include "bayesdet/kernels.hpp"
#include "bayesdet/probability.hpp"

namespace bayesdet {

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                                 std::vector<Eigen::MatrixXd> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
  const std::size_t k = weights_.size();
  if (k == 0 || means_.size() != k || covariances_.size() != k) {
    throw FitError("GaussianMixture: inconsistent component count");
  }
  const auto d = means_.front().size();
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw FitError("GaussianMixture: invalid weight");
    total += w;
  }
  if (!(total > 0.0)) throw FitError("GaussianMixture: weights sum to zero");
  for (auto& w : weights_) w /= total;
  log_weights_.resize(k);
  cholesky_.resize(k);
  log_dets_.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    if (means_[c].size() != d || covariances_[c].rows() != d || covariances_[c].cols() != d) {
      throw FitError("GaussianMixture: component dimension mismatch");
    }
    log_weights_[c] = std::log(weights_[c]);
    Eigen::LLT<Eigen::MatrixXd> llt(covariances_[c]);
    if (llt.info() != Eigen::Success) throw FitError("GaussianMixture: covariance not positive definite");
    cholesky_[c] = llt.matrixL();
    log_dets_[c] = 2.0 * cholesky_[c].diagonal().array().log().sum();
  }
}

double GaussianMixture::component_log_density(std::size_t k, std::span<const double> u) const {
  const auto d = static_cast<Eigen::Index>(u.size());
  Eigen::VectorXd diff = Eigen::Map<const Eigen::VectorXd>(u.data(), d) - means_[k];
  cholesky_[k].triangularView<Eigen::Lower>().solveInPlace(diff);
  return -0.5 * (static_cast<double>(d) * kLog2Pi + log_dets_[k] + diff.squaredNorm());
}

double GaussianMixture::log_density(std::span<const double> u) const {
  double terms[64];
  std::vector<double> heap;
  double* t = terms;
  if (components() > 64) {
    heap.resize(components());
    t = heap.data();
  }
  for (std::size_t k = 0; k < components(); ++k) {
    t[k] = weights_[k] > 0.0 ? log_weights_[k] + component_log_density(k, u)
                             : -std::numeric_limits<double>::infinity();
  }
  return log_sum_exp(std::span<const double>(t, components()));
}

std::size_t GaussianMixture::sample_one(Rng& rng, std::span<double> out) const {
  const double pick = uniform01(rng);
  std::size_t k = 0;
  double cumulative = weights_[0];
  while (k + 1 < components() && pick >= cumulative) {
    ++k;
    cumulative += weights_[k];
  }
  const auto d = static_cast<Eigen::Index>(dim());
  Eigen::VectorXd z(d);
  fill_standard_normal(rng, std::span(z.data(), static_cast<std::size_t>(d)));
  Eigen::Map<Eigen::VectorXd> x(out.data(), d);
  x = means_[k] + cholesky_[k].triangularView<Eigen::Lower>() * z;
  return k;
}

RowMatrix GaussianMixture::sample(std::size_t n, Rng& rng) const {
  RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) sample_one(rng, row_span(out, i));
  return out;
}

bool EmFit::monotone(double slack) const {
  for (std::size_t i = 1; i < objective.size(); ++i) {
    if (std::find(restarts.begin(), restarts.end(), i) != restarts.end()) continue;
    if (objective[i] < objective[i - 1] - slack) return false;
  }
  return true;
}

std::vector<Eigen::VectorXd> kmeanspp_centers(const RowMatrix& samples,
                                              std::span<const double> log_weights,
                                              std::size_t components, Rng& rng) {
  const auto n = static_cast<std::size_t>(samples.rows());
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(log_weights[i]);

  auto draw = [&rng](const std::vector<double>& mass) -> std::optional<std::size_t> {
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (!(total > 0.0)) return std::nullopt;
    const double target = uniform01(rng) * total;
    double running = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
      if (mass[i] <= 0.0) continue;
      running += mass[i];
      last_positive = i;
      if (running > target) return i;
    }
    return last_positive;
  };

  std::vector<Eigen::VectorXd> centers;
  const auto first = draw(w);
  if (!first) throw FitError("kmeanspp_centers: all weights are zero");
  centers.emplace_back(samples.row(static_cast<Eigen::Index>(*first)).transpose());

  std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
  std::vector<double> mass(n);
  while (centers.size() < components) {
    const Eigen::VectorXd& c = centers.back();
    for (std::size_t i = 0; i < n; ++i) {
      dist2[i] = std::min(dist2[i], (samples.row(static_cast<Eigen::Index>(i)).transpose() - c).squaredNorm());
      mass[i] = w[i] * dist2[i];
    }
    const auto next = draw(mass);
    if (!next) break;  // fewer distinct weighted points than components
    centers.emplace_back(samples.row(static_cast<Eigen::Index>(*next)).transpose());
  }
  return centers;
}

namespace {

struct MixtureParams {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
};

// Regularized M-step: Sigma_k = S_k + (eps / n_k) I, the maximizer of the
// penalized objective. Returns the number of components dropped.
std::size_t maximize(const RowMatrix& samples, const Eigen::VectorXd& w, const RowMatrix& resp,
                     const EmOptions& options, MixtureParams& params) {
  const auto n = samples.rows();
  const double min_mass = 1.0 / static_cast<double>(n);
  const auto moments = kernels::weighted_component_moments(samples, w, resp, options.policy);
  MixtureParams next;
  std::size_t dropped = 0;
  for (const auto& m : moments) {
    if (!(m.mass >= min_mass)) {
      ++dropped;
      continue;
    }
    Eigen::MatrixXd cov = m.covariance;
    cov.diagonal().array() += options.regularization / m.mass;
    if (Eigen::LLT<Eigen::MatrixXd>(cov).info() != Eigen::Success) {
      ++dropped;
      continue;
    }
    next.weights.push_back(m.mass);
    next.means.push_back(m.mean);
    next.covariances.push_back(std::move(cov));
  }
  if (next.weights.empty()) throw FitError("fit_em: every mixture component collapsed");
  params = std::move(next);
  return dropped;
}

double penalty(const GaussianMixture& g, double eps) {
  double trace = 0.0;
  for (std::size_t k = 0; k < g.components(); ++k) {
    const auto& l = g.cholesky(k);
    const Eigen::MatrixXd inv_l =
        l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(l.rows(), l.cols()));
    trace += inv_l.squaredNorm();  // tr(Sigma^-1) = ||L^-1||_F^2
  }
  return 0.5 * eps * trace;
}

}  // namespace

EmFit fit_em(const RowMatrix& samples, std::span<const double> log_weights,
             std::vector<Eigen::VectorXd> initial_means, const EmOptions& options) {
  const auto n = samples.rows();
  const auto d = samples.cols();
  if (static_cast<std::size_t>(n) != log_weights.size()) throw ContractError("fit_em: weight count mismatch");
  if (initial_means.empty()) throw ContractError("fit_em: no initial means");
  const auto k0 = static_cast<Eigen::Index>(initial_means.size());
  if (n < k0 * (d + 1)) throw ContractError("fit_em: need N >= K (d + 1) samples");
  if (std::abs(log_sum_exp(log_weights)) > 1e-9) throw ContractError("fit_em: weights not normalized");

  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = std::exp(log_weights[static_cast<std::size_t>(i)]);

  // Hard assignment to the nearest initial mean starts the iteration.
  RowMatrix resp = RowMatrix::Zero(n, k0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < k0; ++k) {
      const double d2 = (samples.row(i).transpose() - initial_means[static_cast<std::size_t>(k)]).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best = k;
      }
    }
    resp(i, best) = 1.0;
  }

  MixtureParams params;
  std::size_t dropped = maximize(samples, w, resp, options, params);
  std::optional<GaussianMixture> current;
  current.emplace(params.weights, params.means, params.covariances);

  EmFit fit{*current, {}, {}, 0, dropped, false};
  RowMatrix log_resp;
  std::vector<double> row_log_density;
  bool restarted = false;
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    kernels::mixture_responsibilities(samples, *current, options.policy, log_resp, row_log_density);
    double objective = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (w[i] > 0.0) objective += w[i] * row_log_density[static_cast<std::size_t>(i)];
    }
    objective -= penalty(*current, options.regularization);
    if (restarted) fit.restarts.push_back(fit.objective.size());
    fit.objective.push_back(objective);
    fit.iterations = iter + 1;
    const std::size_t m = fit.objective.size();
    if (m >= 2 && !restarted &&
        std::abs(fit.objective[m - 1] - fit.objective[m - 2]) <=
            options.relative_tolerance * std::max(1.0, std::abs(fit.objective[m - 2]))) {
      fit.converged = true;
      break;
    }
    resp = log_resp.array().exp();
    const std::size_t now_dropped = maximize(samples, w, resp, options, params);
    dropped += now_dropped;
    restarted = now_dropped > 0;
    current.emplace(params.weights, params.means, params.covariances);
  }
  fit.mixture = *current;
  fit.dropped_components = dropped;
  return fit;
}

EmFit fit_em(const RowMatrix& samples, std::span<const double> log_weights,
             const EmOptions& options, std::uint64_t seed) {
  const auto n = samples.rows();
  const auto d = samples.cols();
  if (n < static_cast<Eigen::Index>(options.components) * (d + 1)) {
    throw ContractError("fit_em: need N >= K (d + 1) samples");
  }
  auto rng = make_stream(seed, StreamTag::em_init);
  auto centers = kmeanspp_centers(samples, log_weights, options.components, rng);
  return fit_em(samples, log_weights, std::move(centers), options);
}

}  // namespace bayesdet
