#pragma once

#include <omp.h>

#include <exception>
#include <vector>

namespace spamtree {

inline int max_threads() { return omp_get_max_threads(); }
inline void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

/// Runs f(i) for i in [0, n) across OpenMP threads. Every index writes only
/// its own outputs, so results do not depend on the schedule. The exception
/// raised by the lowest failing index is rethrown after the loop.
template <class F>
void parallel_for(int n, F&& f) {
  if (n <= 0) return;
  std::vector<std::exception_ptr> errors(n);
  bool failed = false;
#pragma omp parallel for schedule(dynamic) reduction(|| : failed)
  for (int i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
      errors[i] = std::current_exception();
      failed = true;
    }
  }
  if (failed) {
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
}

}  // namespace spamtree
