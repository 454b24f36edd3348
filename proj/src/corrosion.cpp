#include "bayesdet/corrosion.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "bayesdet/errors.hpp"
#include "bayesdet/rng.hpp"

namespace bayesdet {

namespace {

constexpr double kBoundaryTolerance = 1e-9;
constexpr double kJitter = 1e-10;

Eigen::MatrixXd exponential_correlation(std::span<const double> x, double length) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      c(i, j) = std::exp(-std::abs(x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)]) / length);
    }
  }
  return c;
}

double interpolate(const std::vector<double>& nodes, const Eigen::VectorXd& values, double x) {
  auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
  if (it == nodes.begin()) return values(0);
  if (it == nodes.end()) return values(values.size() - 1);
  const auto j = static_cast<Eigen::Index>(it - nodes.begin());
  const double x0 = nodes[static_cast<std::size_t>(j - 1)];
  const double x1 = nodes[static_cast<std::size_t>(j)];
  const double s = (x - x0) / (x1 - x0);
  return (1.0 - s) * values(j - 1) + s * values(j);
}

}  // namespace

std::vector<double> CorrosionGeometry::midpoints() const {
  std::vector<double> out(n_elements);
  const double h = element_length();
  for (std::size_t i = 0; i < n_elements; ++i) out[i] = (static_cast<double>(i) + 0.5) * h;
  return out;
}

std::size_t CorrosionGeometry::element_of(double x) const {
  if (!(x >= 0.0 && x <= beam_length)) throw DomainError("element_of: position outside the beam");
  const double r = x / element_length();
  const double nearest = std::round(r);
  double idx = std::abs(r - nearest) < kBoundaryTolerance ? nearest - 1.0 : std::floor(r);
  idx = std::clamp(idx, 0.0, static_cast<double>(n_elements - 1));
  return static_cast<std::size_t>(idx);
}

std::vector<double> canonical_sensor_positions(double beam_length) {
  std::vector<double> out(kCanonicalSensors);
  const double h = beam_length / static_cast<double>(kCanonicalSensors);
  for (std::size_t i = 0; i < kCanonicalSensors; ++i) out[i] = (static_cast<double>(i) + 0.5) * h;
  return out;
}

SensorLayout make_sensor_layout(const CorrosionGeometry& geometry, std::size_t n_sensors) {
  SensorLayout layout;
  switch (n_sensors) {
    case 2: layout.canonical_index = {3, 6}; break;
    case 4: layout.canonical_index = {0, 3, 6, 9}; break;
    case 10: layout.canonical_index = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}; break;
    default: throw ConfigError("sensor count must be 2, 4 or 10");
  }
  const auto all = canonical_sensor_positions(geometry.beam_length);
  for (auto c : layout.canonical_index) {
    layout.positions.push_back(all[c]);
    layout.element_index.push_back(geometry.element_of(all[c]));
  }
  return layout;
}

MeasurementError corrosion_measurement_error() { return lognormal_params_from_moments(1.0, 0.101); }

PriorModel build_corrosion_prior(const CorrosionGeometry& geometry, const CorrosionMarginals& marginals) {
  if (geometry.n_elements < 1) throw ConfigError("n_elements must be at least 1");
  const std::size_t m = geometry.n_elements;
  const auto log_a = lognormal_params_from_moments(marginals.a_mean, marginals.a_std);
  std::vector<Marginal> marg;
  marg.reserve(2 * m);
  for (std::size_t i = 0; i < m; ++i) marg.emplace_back(NormalMarginal{log_a.mu_log, log_a.sigma_log});
  for (std::size_t i = 0; i < m; ++i) marg.emplace_back(NormalMarginal{marginals.b_mean, marginals.b_std});

  const auto mid = geometry.midpoints();
  const Eigen::MatrixXd block = exponential_correlation(mid, geometry.correlation_length);
  const auto mm = static_cast<Eigen::Index>(m);
  Eigen::MatrixXd corr = Eigen::MatrixXd::Zero(2 * mm, 2 * mm);
  corr.topLeftCorner(mm, mm) = block;
  corr.bottomRightCorner(mm, mm) = block;
  try {
    return PriorModel(marg, corr);
  } catch (const DomainError&) {
    const Eigen::MatrixXd jittered =
        (corr + kJitter * Eigen::MatrixXd::Identity(2 * mm, 2 * mm)) / (1.0 + kJitter);
    Eigen::MatrixXd sym = 0.5 * (jittered + jittered.transpose());
    sym.diagonal().setOnes();
    return PriorModel(marg, sym);
  }
}

double corrosion_depth(std::span<const double> theta, double t, std::size_t element) {
  const std::size_t m = theta.size() / 2;
  if (element >= m) throw ContractError("corrosion_depth: element out of range");
  if (t <= 0.0) return 0.0;
  return std::exp(theta[element] + theta[m + element] * std::log(t));
}

double corrosion_log_likelihood(std::span<const double> log_y, double t,
                                std::span<const double> theta, const SensorLayout& layout,
                                const MeasurementError& err) {
  if (log_y.size() != layout.size()) throw ContractError("corrosion_log_likelihood: sensor count mismatch");
  const std::size_t m = theta.size() / 2;
  const double log_t = std::log(t);
  double total = 0.0;
  for (std::size_t l = 0; l < log_y.size(); ++l) {
    const std::size_t i = layout.element_index[l];
    total += normal_log_pdf(log_y[l], theta[i] + theta[m + i] * log_t + err.mu_log, err.sigma_log);
  }
  return total;
}

CorrosionModel::CorrosionModel(CorrosionGeometry geometry, SensorLayout layout,
                               MeasurementError err, const CorrosionMarginals& marginals)
    : geometry_(geometry),
      layout_(std::move(layout)),
      err_(err),
      prior_(build_corrosion_prior(geometry, marginals)) {
  for (auto e : layout_.element_index) {
    if (e >= geometry_.n_elements) throw ConfigError("sensor element index outside the geometry");
  }
}

std::vector<std::string> CorrosionModel::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < geometry_.n_elements; ++i) names.push_back("lnA" + std::to_string(i + 1));
  for (std::size_t i = 0; i < geometry_.n_elements; ++i) names.push_back("B" + std::to_string(i + 1));
  return names;
}

std::vector<double> CorrosionModel::state(std::span<const double> theta, double time) const {
  std::vector<double> out;
  for (auto e : layout_.element_index) out.push_back(corrosion_depth(theta, time, e));
  return out;
}

double CorrosionModel::do_log_likelihood(std::span<const double> theta, const Measurement& y) const {
  return corrosion_log_likelihood(y.values, y.time, theta, layout_, err_);
}

KlBasis kl_basis(std::size_t n_nodes, std::size_t n_modes, double beam_length,
                 double correlation_length) {
  if (n_modes < 1 || n_modes > n_nodes) throw ConfigError("n_modes must lie in [1, n_nodes]");
  KlBasis basis;
  const double w = beam_length / static_cast<double>(n_nodes);
  basis.nodes.resize(n_nodes);
  for (std::size_t j = 0; j < n_nodes; ++j) basis.nodes[j] = (static_cast<double>(j) + 0.5) * w;
  const Eigen::MatrixXd k = w * exponential_correlation(basis.nodes, correlation_length);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k);
  if (solver.info() != Eigen::Success) throw ReferenceError("KL eigen-decomposition failed");
  const auto modes = static_cast<Eigen::Index>(n_modes);
  basis.eigenvalues = solver.eigenvalues().tail(modes).reverse();
  basis.eigenvectors = solver.eigenvectors().rightCols(modes).rowwise().reverse() / std::sqrt(w);
  return basis;
}

CorrosionDataset generate_corrosion_truth(std::uint64_t seed, std::size_t n_modes,
                                          std::size_t n_nodes, const CorrosionMarginals& marginals,
                                          MeasurementError err, std::size_t years) {
  return generate_corrosion_truth(seed, kl_basis(n_nodes, n_modes), marginals, err, years);
}

CorrosionDataset generate_corrosion_truth(std::uint64_t seed, const KlBasis& basis,
                                          const CorrosionMarginals& marginals,
                                          MeasurementError err, std::size_t years) {
  const auto modes = basis.eigenvalues.size();
  CorrosionDataset ds;
  ds.seed = seed;
  ds.n_modes = static_cast<std::size_t>(modes);
  ds.grid = basis.nodes;
  const Eigen::VectorXd scale = basis.eigenvalues.cwiseMax(0.0).cwiseSqrt();

  auto field = [&](std::uint64_t which, double mean, double std) {
    auto rng = make_stream(seed, StreamTag::field_coefficients, which);
    Eigen::VectorXd xi(modes);
    fill_standard_normal(rng, std::span<double>(xi.data(), static_cast<std::size_t>(modes)));
    return Eigen::VectorXd((std * (basis.eigenvectors * scale.cwiseProduct(xi))).array() + mean);
  };
  const auto log_a = lognormal_params_from_moments(marginals.a_mean, marginals.a_std);
  ds.log_a_field = field(0, log_a.mu_log, log_a.sigma_log);
  ds.b_field = field(1, marginals.b_mean, marginals.b_std);

  ds.sensor_positions = canonical_sensor_positions();
  const auto n_s = static_cast<Eigen::Index>(ds.sensor_positions.size());
  ds.log_measurements.resize(static_cast<Eigen::Index>(years), n_s);
  auto rng = make_stream(seed, StreamTag::measurement_noise);
  for (Eigen::Index t = 0; t < ds.log_measurements.rows(); ++t) {
    const double log_t = std::log(static_cast<double>(t + 1));
    for (Eigen::Index l = 0; l < n_s; ++l) {
      const double x = ds.sensor_positions[static_cast<std::size_t>(l)];
      double z;
      fill_standard_normal(rng, std::span<double>(&z, 1));
      ds.log_measurements(t, l) = interpolate(ds.grid, ds.log_a_field, x) +
                                  interpolate(ds.grid, ds.b_field, x) * log_t + err.mu_log +
                                  err.sigma_log * z;
    }
  }
  return ds;
}

MeasurementSeries CorrosionDataset::series(const SensorLayout& layout, std::size_t k) const {
  const std::size_t n = k == 0 ? years() : k;
  if (n > years()) throw ContractError("CorrosionDataset::series: k exceeds dataset length");
  MeasurementSeries out(n);
  for (std::size_t t = 0; t < n; ++t) {
    out[t].time = static_cast<double>(t + 1);
    for (auto c : layout.canonical_index) {
      out[t].values.push_back(log_measurements(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)));
    }
  }
  return out;
}

std::vector<GaussianPosterior> kalman_reference(const CorrosionModel& model,
                                                const MeasurementSeries& data) {
  const auto& prior = model.prior();
  if (!prior.is_gaussian()) throw ReferenceError("kalman_reference: prior is not Gaussian");
  const auto d = static_cast<Eigen::Index>(model.dim());
  const auto m = static_cast<Eigen::Index>(model.geometry().n_elements);
  const auto& layout = model.layout();
  const auto n_l = static_cast<Eigen::Index>(layout.size());
  const double var = model.error().sigma_log * model.error().sigma_log;

  Eigen::VectorXd mean = prior.gaussian_mean();
  Eigen::MatrixXd cov = prior.gaussian_covariance();
  std::vector<GaussianPosterior> out;
  out.reserve(data.size());
  for (const auto& y : data) {
    if (static_cast<Eigen::Index>(y.values.size()) != n_l) throw ContractError("kalman_reference: sensor count mismatch");
    if (n_l > 0) {
      const double log_t = std::log(y.time);
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_l, d);
      Eigen::VectorXd resid(n_l);
      for (Eigen::Index l = 0; l < n_l; ++l) {
        const auto i = static_cast<Eigen::Index>(layout.element_index[static_cast<std::size_t>(l)]);
        h(l, i) = 1.0;
        h(l, m + i) = log_t;
        resid(l) = y.values[static_cast<std::size_t>(l)] - model.error().mu_log;
      }
      resid -= h * mean;
      const Eigen::MatrixXd ph = cov * h.transpose();
      Eigen::MatrixXd s = h * ph;
      s.diagonal().array() += var;
      Eigen::LLT<Eigen::MatrixXd> llt(s);
      if (llt.info() != Eigen::Success) throw ReferenceError("kalman_reference: singular innovation covariance");
      const Eigen::MatrixXd gain = llt.solve(ph.transpose()).transpose();
      mean += gain * resid;
      const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d) - gain * h;
      cov = a * cov * a.transpose() + var * gain * gain.transpose();
      cov = 0.5 * (cov + cov.transpose()).eval();
    }
    out.push_back({y.time, mean, cov});
  }
  return out;
}

}  // namespace bayesdet
