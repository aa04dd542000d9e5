#pragma once

#include <exception>

namespace gcbf::num {

// Runs body(k) for k in [0, n) across OpenMP threads and rethrows the first failure.
template <class Fn>
void parallel_for(int n, Fn&& body) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < n; ++k) {
    try {
      body(k);
    } catch (...) {
#pragma omp critical(gcbf_parallel_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace gcbf::num
