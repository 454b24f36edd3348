#pragma once

// Data-parallel inner loops. Each kernel takes an ExecutionPolicy; the serial
// branch is the reference the OpenMP branch must match exactly, which holds
// because both walk the same rows/blocks and reduce in index order.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bayesdet/ensemble.hpp"
#include "bayesdet/parallel.hpp"

namespace bayesdet {

class GaussianMixture;
class DeteriorationModel;
struct Measurement;

namespace kernels {

// log L(y | theta_i) for every row of theta.
std::vector<double> step_log_likelihoods(const DeteriorationModel& model, const RowMatrix& theta,
                                         const Measurement& y, ExecutionPolicy policy);

// sum_{j in [first, last)} log L(y_j | theta_i) for every row.
std::vector<double> history_log_likelihoods(const DeteriorationModel& model,
                                            const RowMatrix& theta,
                                            std::span<const Measurement> series,
                                            ExecutionPolicy policy);

// E-step. `log_resp` receives log responsibilities (N x K) and `row_log_density`
// the mixture log-density log p(x_i).
void mixture_responsibilities(const RowMatrix& samples, const GaussianMixture& mixture,
                              ExecutionPolicy policy, RowMatrix& log_resp,
                              std::vector<double>& row_log_density);

struct ComponentMoments {
  double mass = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // unregularized, normalized by mass
};

// M-step sufficient statistics, one component per task.
std::vector<ComponentMoments> weighted_component_moments(const RowMatrix& samples,
                                                         const Eigen::VectorXd& weights,
                                                         const RowMatrix& responsibilities,
                                                         ExecutionPolicy policy);

}  // namespace kernels
}  // namespace bayesdet
