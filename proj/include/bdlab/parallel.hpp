#pragma once

#include <cstddef>
#include <exception>
#include <type_traits>
#include <vector>

namespace bdlab {

/// Worker count from BDLAB_WORKERS (a positive integer), else the OpenMP
/// default. Results never depend on this value.
int worker_count();

/// f(0), ..., f(n-1) in index order, evaluated on one thread. The reference
/// against which the parallel kernels are tested.
template <class F>
auto serial_map(std::size_t n, F&& f) {
  using R = std::invoke_result_t<F&, std::size_t>;
  std::vector<R> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(f(i));
  return out;
}

/// Same as serial_map, with indices spread over `workers` OpenMP threads.
/// Each result lands in its own slot, so the output is independent of the
/// schedule. The first exception by index is rethrown after the loop.
template <class F>
auto parallel_map(std::size_t n, int workers, F&& f) {
  using R = std::invoke_result_t<F&, std::size_t>;
  static_assert(std::is_default_constructible_v<R>, "parallel_map needs default-constructible results");
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers > 0 ? workers : 1)
  for (long long i = 0; i < count; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      out[k] = f(k);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace bdlab
