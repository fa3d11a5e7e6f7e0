#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

// OpenMP-backed index-space map.  The contract that keeps results bit-identical
// across thread counts: the body for index i writes only to slots owned by i
// (preallocated output arrays), and any floating-point reduction over those
// slots happens afterwards, serially, in index order.  The serial reference
// twins of each kernel fuse the map and the reduction in one plain loop; since
// both sides reduce in the same order they must agree to the last bit, which
// the test suite checks.

namespace rcal {

template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    body(static_cast<std::size_t>(i));
  }
#else
  for (std::size_t i = 0; i < n; ++i) body(i);
#endif
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n < 1 ? 1 : n);
#else
  (void)n;
#endif
}

}  // namespace rcal
