#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "bayesdet/corrosion.hpp"
#include "bayesdet/crack.hpp"
#include "bayesdet/filters.hpp"

namespace bayesdet {

using Json = nlohmann::json;

// Nine significant digits in scientific notation.
std::string format_double(double x);
// x rounded to nine significant digits, so JSON output is reproducible.
double round_significant(double x);

Json to_json(const Eigen::VectorXd& v);
Json to_json(std::span<const double> v);
// Row-major lower triangle including the diagonal.
Json packed_lower(const Eigen::MatrixXd& m);
Eigen::VectorXd vector_from_json(const Json& j);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

// <dir>/crack_truth.csv (k, n, a_true, y) and <dir>/crack_truth.json.
void write_crack_dataset(const std::filesystem::path& dir, const CrackDataset& ds);
CrackDataset read_crack_dataset(const std::filesystem::path& dir);

// <dir>/corrosion_truth.csv (year, sensor, ln_y) and <dir>/corrosion_truth.json
// with the sensor geometry, seed and the fine-grid truth fields.
void write_corrosion_dataset(const std::filesystem::path& dir, const CorrosionDataset& ds);
CorrosionDataset read_corrosion_dataset(const std::filesystem::path& dir);

Json kalman_to_json(const std::vector<GaussianPosterior>& posteriors);
Json filter_report_to_json(const FilterReport& report);

}  // namespace bayesdet
