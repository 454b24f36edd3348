#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bayesdet/model.hpp"
#include "bayesdet/probability.hpp"

namespace bayesdet {

inline constexpr double kBeamLength = 10.0;
inline constexpr double kCorrelationLength = 2.0;
inline constexpr std::size_t kCorrosionYears = 50;
inline constexpr std::size_t kCanonicalSensors = 10;

// Uniform midpoint discretization of the beam into m elements.
struct CorrosionGeometry {
  std::size_t n_elements = 25;
  double beam_length = kBeamLength;
  double correlation_length = kCorrelationLength;

  double element_length() const { return beam_length / static_cast<double>(n_elements); }
  std::vector<double> midpoints() const;
  // A position on an element boundary belongs to the lower-indexed element.
  std::size_t element_of(double x) const;
};

struct SensorLayout {
  std::vector<double> positions;
  // Columns of the canonical 10-sensor dataset that this layout reads.
  std::vector<std::size_t> canonical_index;
  std::vector<std::size_t> element_index;

  std::size_t size() const { return positions.size(); }
};

// Canonical sensors sit at 0.5, 1.5, ..., 9.5; n_sensors selects {4th, 7th},
// {1st, 4th, 7th, 10th} or all ten. Other counts throw ConfigError.
SensorLayout make_sensor_layout(const CorrosionGeometry& geometry, std::size_t n_sensors);
std::vector<double> canonical_sensor_positions(double beam_length = kBeamLength);

struct CorrosionMarginals {
  // Moments of A itself; the prior holds ln A.
  double a_mean = 0.8;
  double a_std = 0.24;
  double b_mean = 0.8;
  double b_std = 0.12;
};

MeasurementError corrosion_measurement_error();

// Gaussian prior over [ln A_1..m, B_1..m] with exponential within-field
// correlation and independent fields.
PriorModel build_corrosion_prior(const CorrosionGeometry& geometry,
                                 const CorrosionMarginals& marginals = {});

// A_i t^B_i at element i.
double corrosion_depth(std::span<const double> theta, double t, std::size_t element);

// Sum over sensors of the Gaussian log-density of ln y around
// ln A + B ln t + mu.
double corrosion_log_likelihood(std::span<const double> log_y, double t,
                                std::span<const double> theta, const SensorLayout& layout,
                                const MeasurementError& err);

class CorrosionModel final : public DeteriorationModel {
 public:
  CorrosionModel(CorrosionGeometry geometry, SensorLayout layout,
                 MeasurementError err = corrosion_measurement_error(),
                 const CorrosionMarginals& marginals = {});

  std::size_t dim() const override { return 2 * geometry_.n_elements; }
  const PriorModel& prior() const override { return prior_; }
  std::vector<std::string> parameter_names() const override;
  // Depth at each active sensor.
  std::vector<double> state(std::span<const double> theta, double time) const override;

  const CorrosionGeometry& geometry() const { return geometry_; }
  const SensorLayout& layout() const { return layout_; }
  const MeasurementError& error() const { return err_; }

 protected:
  double do_log_likelihood(std::span<const double> theta, const Measurement& y) const override;

 private:
  CorrosionGeometry geometry_;
  SensorLayout layout_;
  MeasurementError err_;
  PriorModel prior_;
};

// Eigenpairs of the exponential kernel on a uniform midpoint grid.
struct KlBasis {
  std::vector<double> nodes;
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenvectors;  // nodes x modes, L2-normalized functions
};

KlBasis kl_basis(std::size_t n_nodes, std::size_t n_modes, double beam_length = kBeamLength,
                 double correlation_length = kCorrelationLength);

struct CorrosionDataset {
  std::uint64_t seed = 0;
  std::size_t n_modes = 0;
  std::vector<double> grid;
  Eigen::VectorXd log_a_field;
  Eigen::VectorXd b_field;
  std::vector<double> sensor_positions;
  // years x canonical sensors, ln of measured depth.
  Eigen::MatrixXd log_measurements;

  std::size_t years() const { return static_cast<std::size_t>(log_measurements.rows()); }
  // Measurements of the sensors in `layout` for years 1..k (all when k = 0).
  MeasurementSeries series(const SensorLayout& layout, std::size_t k = 0) const;
};

CorrosionDataset generate_corrosion_truth(std::uint64_t seed, std::size_t n_modes = 400,
                                          std::size_t n_nodes = 2000,
                                          const CorrosionMarginals& marginals = {},
                                          MeasurementError err = corrosion_measurement_error(),
                                          std::size_t years = kCorrosionYears);
// Same, from a precomputed basis.
CorrosionDataset generate_corrosion_truth(std::uint64_t seed, const KlBasis& basis,
                                          const CorrosionMarginals& marginals = {},
                                          MeasurementError err = corrosion_measurement_error(),
                                          std::size_t years = kCorrosionYears);

struct GaussianPosterior {
  double time = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Exact sequential conjugate update, one entry per measurement. Throws
// ReferenceError when the prior is not Gaussian or an innovation covariance
// is singular.
std::vector<GaussianPosterior> kalman_reference(const CorrosionModel& model,
                                                const MeasurementSeries& data);

}  // namespace bayesdet
