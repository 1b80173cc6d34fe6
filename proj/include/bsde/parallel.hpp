#pragma once

#include <cstddef>

namespace bsde {

/// Worker-count setting shared by all OpenMP kernels. 0 = use the OpenMP
/// default, 1 = force serial execution. All kernels are written so results
/// are bit-identical for every setting (elementwise level sweeps and
/// fixed-order reductions only).
void set_max_threads(int k);
int max_threads();
bool parallel_enabled();

/// Applies fn(i) for i in [0, n), in parallel when enabled. fn must write
/// disjoint outputs per index; iteration order must not matter.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn);

}  // namespace bsde

// ---- implementation -------------------------------------------------------

#include <omp.h>

namespace bsde {

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  if (parallel_enabled() && n > 1) {
    const int k = max_threads();
#pragma omp parallel for schedule(static) num_threads(k > 0 ? k : omp_get_max_threads())
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      fn(static_cast<std::size_t>(i));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) fn(i);
  }
}

}  // namespace bsde
