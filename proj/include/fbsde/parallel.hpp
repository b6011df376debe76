#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include <omp.h>

namespace fbsde::parallel {

// Reductions are split into fixed-size chunks whose partial sums are combined
// serially in chunk order. The result is therefore bit-identical for any thread
// count, which plain `reduction(+:...)` does not guarantee.
inline constexpr std::size_t kChunk = 2048;

inline std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

// Sum of f(i) over [0, n).
template <class F>
double sum(std::size_t n, F&& f) {
    const std::size_t chunks = chunk_count(n);
    std::vector<double> partial(chunks, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
        const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
        const std::size_t hi = std::min(n, lo + kChunk);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += f(i);
        partial[static_cast<std::size_t>(c)] = acc;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

// Vector-valued reduction: f(i, acc) adds its contribution into acc (length m).
template <class F>
std::vector<double> accumulate(std::size_t n, std::size_t m, F&& f) {
    const std::size_t chunks = chunk_count(n);
    std::vector<double> partial(chunks * m, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
        const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
        const std::size_t hi = std::min(n, lo + kChunk);
        std::span<double> acc(partial.data() + static_cast<std::size_t>(c) * m, m);
        for (std::size_t i = lo; i < hi; ++i) f(i, acc);
    }
    std::vector<double> total(m, 0.0);
    for (std::size_t c = 0; c < chunks; ++c)
        for (std::size_t j = 0; j < m; ++j) total[j] += partial[c * m + j];
    return total;
}

// Applies the FBSDE_NUM_THREADS cap, if set. Returns the effective thread count.
int apply_thread_cap_from_env();

}  // namespace fbsde::parallel
