#include "jft/common.hpp"

#include "jft/parallel.hpp"

namespace jft {

double deterministic_sum(const double* values, std::size_t n) {
    if (n == 0) return 0.0;
    // Fixed chunk grid: partials may be computed by any number of threads,
    // the serial combine below fixes the rounding order.
    constexpr std::size_t kChunks = 256;
    const std::size_t chunk = (n + kChunks - 1) / kChunks;
    double partial[kChunks] = {0.0};
    const std::ptrdiff_t used = static_cast<std::ptrdiff_t>((n + chunk - 1) / chunk);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < used; ++c) {
        const std::size_t lo = static_cast<std::size_t>(c) * chunk;
        const std::size_t hi = lo + chunk < n ? lo + chunk : n;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += values[i];
        partial[c] = s;
    }
    double total = 0.0;
    for (std::ptrdiff_t c = 0; c < used; ++c) total += partial[c];
    return total;
}

}  // namespace jft
