#include "bayesdet/model.hpp"

namespace bayesdet {

std::vector<std::string> DeteriorationModel::parameter_names() const {
  std::vector<std::string> names(dim());
  for (std::size_t i = 0; i < names.size(); ++i) names[i] = "theta" + std::to_string(i);
  return names;
}

double DeteriorationModel::history_log_likelihood(std::span<const double> theta,
                                                  std::span<const Measurement> series) const {
  double total = 0.0;
  for (const auto& y : series) total += log_likelihood(theta, y);
  return total;
}

}  // namespace bayesdet
