#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bayesdet/prior.hpp"

namespace bayesdet {

// One measurement time. `values` holds whatever the model's likelihood reads:
// a crack length in mm, or log-depths for each active sensor.
struct Measurement {
  double time = 0.0;
  std::vector<double> values;
};

using MeasurementSeries = std::vector<Measurement>;

// Binds a parameter vector and a time to a predicted observable and a
// per-measurement log-likelihood. Every likelihood call is one model
// evaluation; the counter is atomic so particle sweeps may run concurrently.
class DeteriorationModel {
 public:
  DeteriorationModel() = default;
  DeteriorationModel(const DeteriorationModel&) = delete;
  DeteriorationModel& operator=(const DeteriorationModel&) = delete;
  virtual ~DeteriorationModel() = default;

  virtual std::size_t dim() const = 0;
  virtual const PriorModel& prior() const = 0;
  virtual std::vector<std::string> parameter_names() const;

  // log L(y | theta); -inf when theta is outside the model's valid region.
  double log_likelihood(std::span<const double> theta, const Measurement& y) const {
    evaluations_.fetch_add(1, std::memory_order_relaxed);
    return do_log_likelihood(theta, y);
  }

  // Sum of log_likelihood over `series`; costs series.size() evaluations.
  double history_log_likelihood(std::span<const double> theta,
                                std::span<const Measurement> series) const;

  // Observable deterioration state at `time` (crack length, or depth at each
  // sensor). Diagnostic only: does not touch the evaluation counter.
  virtual std::vector<double> state(std::span<const double> theta, double time) const = 0;

  std::uint64_t evaluations() const { return evaluations_.load(std::memory_order_relaxed); }
  void reset_evaluations() { evaluations_.store(0, std::memory_order_relaxed); }

 protected:
  virtual double do_log_likelihood(std::span<const double> theta, const Measurement& y) const = 0;

 private:
  mutable std::atomic<std::uint64_t> evaluations_{0};
};

}  // namespace bayesdet
