#include "bayesdet/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "bayesdet/errors.hpp"

namespace bayesdet {

namespace fs = std::filesystem;

std::string format_double(double x) { return fmt::format("{:.8e}", x); }

double round_significant(double x) {
  if (!std::isfinite(x) || x == 0.0) return x;
  return std::stod(format_double(x));
}

namespace {

Json number(double x) {
  if (std::isnan(x)) return Json("nan");
  if (std::isinf(x)) return Json(x > 0 ? "inf" : "-inf");
  return Json(round_significant(x));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    rows.push_back(split(line, ','));
  }
  return rows;
}

}  // namespace

Json to_json(std::span<const double> v) {
  Json out = Json::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

Json to_json(const Eigen::VectorXd& v) {
  return to_json(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Json packed_lower(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) out.push_back(number(m(i, j)));
  }
  return out;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_crack_dataset(const fs::path& dir, const CrackDataset& ds) {
  std::string csv = "k,n,a_true,y\n";
  for (std::size_t k = 0; k < ds.measurements.size(); ++k) {
    csv += fmt::format("{},{},{},{}\n", k + 1, format_double(ds.cycles[k]),
                       format_double(ds.true_lengths[k]), format_double(ds.measurements[k]));
  }
  write_text(dir / "crack_truth.csv", csv);
  Json side;
  side["theta_star"] = to_json(ds.theta_star.to_vector());
  side["error"] = {{"mu_log", number(ds.error.mu_log)}, {"sigma_log", number(ds.error.sigma_log)}};
  side["seed"] = ds.seed;
  side["delta_n"] = number(ds.delta_n);
  write_json(dir / "crack_truth.json", side);
}

CrackDataset read_crack_dataset(const fs::path& dir) {
  const Json side = read_json(dir / "crack_truth.json");
  CrackDataset ds;
  const auto theta = vector_from_json(side.at("theta_star"));
  ds.theta_star = CrackParams::from_span(std::span<const double>(theta.data(), 4));
  ds.error = {side.at("error").at("mu_log").get<double>(), side.at("error").at("sigma_log").get<double>()};
  ds.seed = side.at("seed").get<std::uint64_t>();
  ds.delta_n = side.at("delta_n").get<double>();
  for (const auto& row : read_csv_rows(dir / "crack_truth.csv")) {
    if (row.size() != 4) throw ConfigError("crack_truth.csv: expected 4 columns");
    ds.cycles.push_back(std::stod(row[1]));
    ds.true_lengths.push_back(std::stod(row[2]));
    ds.measurements.push_back(std::stod(row[3]));
  }
  return ds;
}

void write_corrosion_dataset(const fs::path& dir, const CorrosionDataset& ds) {
  std::string csv = "year,sensor,ln_y\n";
  for (Eigen::Index t = 0; t < ds.log_measurements.rows(); ++t) {
    for (Eigen::Index l = 0; l < ds.log_measurements.cols(); ++l) {
      csv += fmt::format("{},{},{}\n", t + 1, l + 1, format_double(ds.log_measurements(t, l)));
    }
  }
  write_text(dir / "corrosion_truth.csv", csv);
  Json side;
  side["seed"] = ds.seed;
  side["n_modes"] = ds.n_modes;
  side["beam_length"] = number(kBeamLength);
  side["correlation_length"] = number(kCorrelationLength);
  side["sensor_positions"] = to_json(ds.sensor_positions);
  side["grid"] = to_json(ds.grid);
  side["ln_a"] = to_json(ds.log_a_field);
  side["b"] = to_json(ds.b_field);
  write_json(dir / "corrosion_truth.json", side);
}

CorrosionDataset read_corrosion_dataset(const fs::path& dir) {
  const Json side = read_json(dir / "corrosion_truth.json");
  CorrosionDataset ds;
  ds.seed = side.at("seed").get<std::uint64_t>();
  ds.n_modes = side.at("n_modes").get<std::size_t>();
  const auto positions = vector_from_json(side.at("sensor_positions"));
  ds.sensor_positions.assign(positions.data(), positions.data() + positions.size());
  const auto grid = vector_from_json(side.at("grid"));
  ds.grid.assign(grid.data(), grid.data() + grid.size());
  ds.log_a_field = vector_from_json(side.at("ln_a"));
  ds.b_field = vector_from_json(side.at("b"));
  const auto rows = read_csv_rows(dir / "corrosion_truth.csv");
  const auto n_s = static_cast<Eigen::Index>(ds.sensor_positions.size());
  if (n_s == 0 || rows.size() % static_cast<std::size_t>(n_s) != 0) {
    throw ConfigError("corrosion_truth.csv: row count does not match the sensor count");
  }
  ds.log_measurements.resize(static_cast<Eigen::Index>(rows.size()) / n_s, n_s);
  for (const auto& row : rows) {
    if (row.size() != 3) throw ConfigError("corrosion_truth.csv: expected 3 columns");
    ds.log_measurements(std::stol(row[0]) - 1, std::stol(row[1]) - 1) = std::stod(row[2]);
  }
  return ds;
}

Json kalman_to_json(const std::vector<GaussianPosterior>& posteriors) {
  Json out = Json::array();
  for (const auto& p : posteriors) {
    out.push_back({{"year", number(p.time)}, {"mean", to_json(p.mean)}, {"covariance_lower", packed_lower(p.covariance)}});
  }
  return out;
}

Json filter_report_to_json(const FilterReport& report) {
  Json steps = Json::array();
  for (const auto& s : report.steps) {
    Json j;
    j["step"] = s.step;
    j["ess"] = number(s.ess);
    j["resample_events"] = s.resample_events;
    j["evaluations"] = s.evaluations;
    if (!s.ladder.empty()) {
      j["ladder"] = to_json(s.ladder);
      j["ladder_ess"] = to_json(s.ladder_ess);
    }
    if (!s.acceptance_rates.empty()) j["acceptance_rates"] = to_json(s.acceptance_rates);
    if (s.gmm_fallback) j["gmm_fallback"] = true;
    steps.push_back(std::move(j));
  }
  Json out;
  out["algorithm"] = std::string(to_string(report.algorithm));
  out["seed"] = report.config.seed;
  out["evaluations"] = report.evaluations;
  out["resample_events"] = report.resample_events;
  out["purge_events"] = report.purge_events;
  out["gmm_fallbacks"] = report.gmm_fallbacks;
  std::size_t non_monotone = 0;
  for (const auto& e : report.em_fits) non_monotone += e.monotone ? 0 : 1;
  out["em_fits"] = report.em_fits.size();
  out["em_non_monotone"] = non_monotone;
  out["steps"] = std::move(steps);
  return out;
}

}  // namespace bayesdet
