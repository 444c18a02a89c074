#pragma once

#include <cstddef>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace jft {

// Execution policy for the data-parallel kernels. Every parallel kernel has a
// serial twin that produces bit-identical output; tests compare the two and
// tools/bench times them.
enum class Exec { serial, parallel };

inline int max_threads() {
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <typename Fn>
void parallel_for(Exec exec, std::ptrdiff_t n, Fn&& fn) {
    if (exec == Exec::parallel) {
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
        return;
#endif
    }
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
}

template <typename Fn>
void parallel_for_dynamic(Exec exec, std::ptrdiff_t n, Fn&& fn) {
    if (exec == Exec::parallel) {
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 1)
        for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
        return;
#endif
    }
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
}

}  // namespace jft
