#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace bayesdet {

using Rng = std::mt19937_64;

// Purpose tags mixed into derived stream seeds so that, e.g., the resampling
// draws of step 7 never share a stream with the move proposals of step 7.
enum class StreamTag : std::uint64_t {
  prior_draw = 1,
  resample = 2,
  gmm_draw = 3,
  move = 4,
  em_init = 5,
  rejection = 6,
  measurement_noise = 7,
  field_coefficients = 8,
};

// Independent generator for one position of a run, keyed by the base seed and
// a path such as {tag, step, rung, particle}. Streams keyed by particle index
// make per-particle work reproducible regardless of thread schedule.
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

inline Rng make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0,
                       std::uint64_t b = 0, std::uint64_t c = 0) {
  return make_stream(seed, {static_cast<std::uint64_t>(tag), a, b, c});
}

// Uniform on [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void fill_standard_normal(Rng& rng, std::span<double> out);

}  // namespace bayesdet
