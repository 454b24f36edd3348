#include "bayesdet/rng.hpp"

#include <vector>

namespace bayesdet {

Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (path.size() + 1));
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto p : path) push(p);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

void fill_standard_normal(Rng& rng, std::span<double> out) {
  std::normal_distribution<double> normal;
  for (auto& x : out) x = normal(rng);
}

}  // namespace bayesdet
