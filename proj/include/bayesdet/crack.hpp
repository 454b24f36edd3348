#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bayesdet/ensemble.hpp"
#include "bayesdet/model.hpp"
#include "bayesdet/parallel.hpp"
#include "bayesdet/probability.hpp"

namespace bayesdet {

// Parameter order is fixed: [a0, dS, C_ln, m].
struct CrackParams {
  double a0 = 1.0;
  double delta_s = 60.0;
  double c_ln = -33.0;
  double m = 3.5;

  static CrackParams from_span(std::span<const double> theta);
  std::vector<double> to_vector() const { return {a0, delta_s, c_ln, m}; }
};

inline constexpr std::size_t kCrackSteps = 100;
inline constexpr double kCrackDeltaN = 1e5;

// Paris-Erdogan crack length after n cycles. std::nullopt once the closed
// form has diverged (non-positive bracket) or the parameters leave the
// physical region (a0 <= 0, dS <= 0).
std::optional<double> try_crack_length(double n, const CrackParams& p);
// Throws DomainError where try_crack_length returns nullopt.
double crack_length(double n, const CrackParams& p);

// Gaussian log-density of ln y around ln a_n + mu; -inf for diverged states.
// Throws DomainError for y <= 0.
double crack_log_likelihood(double y, double n, const CrackParams& p, const MeasurementError& err);

MeasurementError crack_measurement_error();
CrackParams crack_theta_star();
// a0 ~ Exp(1), dS ~ N(60, 10), (C_ln, m) bi-normal with rho = -0.9.
PriorModel crack_prior();

struct CrackDataset {
  CrackParams theta_star;
  MeasurementError error;
  std::uint64_t seed = 0;
  double delta_n = kCrackDeltaN;
  std::vector<double> cycles;
  std::vector<double> true_lengths;
  std::vector<double> measurements;

  MeasurementSeries series() const;
  MeasurementSeries series(std::size_t k) const;
};

// Throws DomainError when the truth trajectory diverges.
CrackDataset generate_crack_dataset(const CrackParams& theta_star, const MeasurementError& err,
                                    std::uint64_t seed, std::size_t steps = kCrackSteps,
                                    double delta_n = kCrackDeltaN);

class CrackModel final : public DeteriorationModel {
 public:
  CrackModel();
  CrackModel(PriorModel prior, MeasurementError err);

  std::size_t dim() const override { return 4; }
  const PriorModel& prior() const override { return prior_; }
  std::vector<std::string> parameter_names() const override;
  // {a_n}, or {NaN} once diverged.
  std::vector<double> state(std::span<const double> theta, double time) const override;
  const MeasurementError& error() const { return err_; }

 protected:
  double do_log_likelihood(std::span<const double> theta, const Measurement& y) const override;

 private:
  PriorModel prior_;
  MeasurementError err_;
};

struct RejectionOptions {
  std::size_t n_samples = 10000;
  std::uint64_t seed = 1;
  std::uint64_t max_proposals = 10'000'000'000ULL;
  std::size_t batch_size = 1 << 14;
  ExecutionPolicy policy = ExecutionPolicy::parallel;
};

struct RejectionResult {
  RowMatrix samples;
  std::uint64_t proposals = 0;
  double acceptance_rate = 0.0;
};

// Exact posterior draws given the first k measurements, with the prior as
// envelope. Throws InfeasibleError when the proposal budget runs out.
RejectionResult rejection_sample_posterior(const CrackDataset& data, std::size_t k,
                                           const PriorModel& prior,
                                           const RejectionOptions& options);

}  // namespace bayesdet
