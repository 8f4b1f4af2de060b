#pragma once

#include <cstddef>
#include <cstdint>

#ifdef MVDESC_HAVE_OPENMP
#include <omp.h>
#endif

namespace mvdesc {

// Global worker count for the data-parallel kernels. 0 means "runtime default".
void set_workers(int n);
int workers();

// Runs fn(i) for i in [0, n). Results must not depend on scheduling: each
// index writes only its own outputs. Merges that sum floating point across
// indices must go through fixed-size chunks (see chunked reductions in
// train.cpp) so results do not depend on the worker count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
#ifdef MVDESC_HAVE_OPENMP
    const int w = workers();
#pragma omp parallel for schedule(dynamic, 16) num_threads(w > 0 ? w : omp_get_max_threads())
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
        fn(static_cast<std::size_t>(i));
#else
    for (std::size_t i = 0; i < n; ++i) fn(i);
#endif
}

// Serial reference loop, kept so tests and the benchmark can compare
// against the OpenMP path.
template <class Fn>
void serial_for(std::size_t n, Fn&& fn) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace mvdesc
