#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bayesdet/ensemble.hpp"
#include "bayesdet/model.hpp"

namespace bayesdet {

// |ref - est| / |ref|. Throws DomainError for ref = 0.
double relative_error(double ref, double est);

// sqrt(sum (ref - est)^2 / sum ref^2). Throws DomainError for an all-zero
// reference and ContractError for mismatched lengths.
double l2_rel_error_norm(const Eigen::VectorXd& ref, const Eigen::VectorXd& est);

// l2_rel_error_norm over the strict lower triangles.
double correlation_error_norm(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& est);

Eigen::VectorXd strict_lower_triangle(const Eigen::MatrixXd& m);

struct StateSummary {
  double time = 0.0;
  Eigen::VectorXd mean;
  Eigen::VectorXd q05;
  Eigen::VectorXd q95;
  // Weight carried by particles whose state is not finite.
  double diverged_mass = 0.0;
  bool warning = false;
};

// Weighted state summaries at each time, diverged particles dropped and the
// rest renormalized. warning is set when more than half the mass diverged.
std::vector<StateSummary> pushforward_state(const WeightedEnsemble& ensemble,
                                            const DeteriorationModel& model,
                                            std::span<const double> times);

}  // namespace bayesdet
