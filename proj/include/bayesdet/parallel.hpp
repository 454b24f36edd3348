#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#include <omp.h>

namespace bayesdet {

enum class ExecutionPolicy { serial, parallel };

// Reference loop; every kernel has to reproduce its results bit for bit.
struct SerialFor {
  template <typename Functor>
  static void run(std::size_t count, Functor&& f) {
    for (std::size_t i = 0; i < count; ++i) f(i);
  }
};

// OpenMP loop over independent indices. Exceptions thrown by the body are
// captured and the first one is rethrown on the calling thread.
struct OmpFor {
  template <typename Functor>
  static void run(std::size_t count, Functor&& f) {
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      try {
        f(static_cast<std::size_t>(i));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  }
};

template <typename Functor>
void parallel_for(ExecutionPolicy policy, std::size_t count, Functor&& f) {
  if (policy == ExecutionPolicy::parallel && count > 1) {
    OmpFor::run(count, f);
  } else {
    SerialFor::run(count, f);
  }
}

// Fixed-size row blocks. Kernels that work on blocks (e.g. triangular solves
// over many right-hand sides) use the same blocks on both paths.
inline constexpr std::size_t kRowBlock = 256;

inline std::size_t block_count(std::size_t rows) { return (rows + kRowBlock - 1) / kRowBlock; }

}  // namespace bayesdet
