#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dymixop {

// Kernels only parallelize loops whose iterations write disjoint outputs in a
// fixed per-element order, so the thread count never changes results.

inline void set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Exceptions thrown by `fn` are rethrown on the calling thread; when several
/// iterations throw, the one with the lowest index wins.
template <typename Fn>
void parallel_for(std::ptrdiff_t count, Fn&& fn, std::ptrdiff_t grain = 1) {
#ifdef _OPENMP
  std::exception_ptr error;
  std::ptrdiff_t error_index = count;
  std::mutex guard;
#pragma omp parallel for schedule(static) if (count >= 2 * grain && omp_get_max_threads() > 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (i < error_index) {
        error_index = i;
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
#else
  (void)grain;
  for (std::ptrdiff_t i = 0; i < count; ++i) fn(i);
#endif
}

}  // namespace dymixop
