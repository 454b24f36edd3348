#include "bayesdet/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "bayesdet/errors.hpp"
#include "bayesdet/gmm.hpp"
#include "bayesdet/model.hpp"
#include "bayesdet/probability.hpp"

namespace bayesdet::kernels {

namespace {
constexpr double kNegligibleWeight = 1e-200;
}  // namespace

std::vector<double> step_log_likelihoods(const DeteriorationModel& model, const RowMatrix& theta,
                                         const Measurement& y, ExecutionPolicy policy) {
  std::vector<double> out(static_cast<std::size_t>(theta.rows()));
  parallel_for(policy, out.size(), [&](std::size_t i) {
    out[i] = model.log_likelihood(row_span(theta, static_cast<Eigen::Index>(i)), y);
  });
  return out;
}

std::vector<double> history_log_likelihoods(const DeteriorationModel& model,
                                            const RowMatrix& theta,
                                            std::span<const Measurement> series,
                                            ExecutionPolicy policy) {
  std::vector<double> out(static_cast<std::size_t>(theta.rows()));
  parallel_for(policy, out.size(), [&](std::size_t i) {
    out[i] = model.history_log_likelihood(row_span(theta, static_cast<Eigen::Index>(i)), series);
  });
  return out;
}

void mixture_responsibilities(const RowMatrix& samples, const GaussianMixture& mixture,
                              ExecutionPolicy policy, RowMatrix& log_resp,
                              std::vector<double>& row_log_density) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  const auto k_count = static_cast<Eigen::Index>(mixture.components());
  log_resp.resize(n, k_count);
  row_log_density.resize(static_cast<std::size_t>(n));

  std::vector<double> offsets(static_cast<std::size_t>(k_count));
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    offsets[kk] = std::log(mixture.weights()[kk]) -
                  0.5 * (static_cast<double>(d) * kLog2Pi + mixture.log_determinant(kk));
  }

  parallel_for(policy, block_count(static_cast<std::size_t>(n)), [&](std::size_t b) {
    const auto r0 = static_cast<Eigen::Index>(b * kRowBlock);
    const Eigen::Index rows = std::min<Eigen::Index>(static_cast<Eigen::Index>(kRowBlock), n - r0);
    Eigen::MatrixXd diff(d, rows);
    for (Eigen::Index k = 0; k < k_count; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      diff = (samples.middleRows(r0, rows).rowwise() - mixture.means()[kk].transpose()).transpose();
      mixture.cholesky(kk).triangularView<Eigen::Lower>().solveInPlace(diff);
      for (Eigen::Index r = 0; r < rows; ++r) {
        log_resp(r0 + r, k) = offsets[kk] - 0.5 * diff.col(r).squaredNorm();
      }
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto row = log_resp.row(r0 + r);
      const double lse = log_sum_exp(std::span<const double>(row.data(), static_cast<std::size_t>(k_count)));
      row.array() -= lse;
      row_log_density[static_cast<std::size_t>(r0 + r)] = lse;
    }
  });
}

std::vector<ComponentMoments> weighted_component_moments(const RowMatrix& samples,
                                                         const Eigen::VectorXd& weights,
                                                         const RowMatrix& responsibilities,
                                                         ExecutionPolicy policy) {
  const auto k_count = static_cast<std::size_t>(responsibilities.cols());
  std::vector<ComponentMoments> out(k_count);
  parallel_for(policy, k_count, [&](std::size_t kk) {
    const auto k = static_cast<Eigen::Index>(kk);
    // Negligible weights are flushed to zero; their products would otherwise
    // be subnormal and slow every FLOP that touches them.
    const Eigen::VectorXd rw = (weights.cwiseProduct(responsibilities.col(k)).array() < kNegligibleWeight)
                                   .select(0.0, weights.cwiseProduct(responsibilities.col(k)));
    auto& m = out[kk];
    m.mass = rw.sum();
    if (!(m.mass > 0.0)) {
      m.mean = Eigen::VectorXd::Zero(samples.cols());
      m.covariance = Eigen::MatrixXd::Zero(samples.cols(), samples.cols());
      return;
    }
    m.mean = samples.transpose() * rw / m.mass;
    Eigen::MatrixXd scaled = samples.rowwise() - m.mean.transpose();
    scaled.array().colwise() *= rw.array().sqrt();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(samples.cols(), samples.cols());
    cov.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose(), 1.0 / m.mass);
    m.covariance = cov.selfadjointView<Eigen::Lower>();
  });
  return out;
}

}  // namespace bayesdet::kernels
