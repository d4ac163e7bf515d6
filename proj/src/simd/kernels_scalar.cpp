#include <cmath>
#include <limits>

#include "kgh/simd/kernels.hpp"

namespace kgh::simd {

namespace {

void weighted_accumulate_scalar(double* acc, const double* x, double w, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += w * x[i];
}

double reduce_max_scalar(const double* x, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

std::size_t select_at_least_scalar(const double* x, std::size_t n, double threshold, std::int32_t* out) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] >= threshold) out[k++] = static_cast<std::int32_t>(i);
    }
    return k;
}

constexpr KernelTable kScalar{"scalar", weighted_accumulate_scalar, reduce_max_scalar, select_at_least_scalar};

} // namespace

const KernelTable& scalar_kernels() noexcept { return kScalar; }

double log_sum_exp(std::span<const double> x) {
    const double m = reduce_max(x);
    if (!std::isfinite(m)) return m;
    double sum = 0.0;
    for (double v : x) sum += std::exp(v - m);
    return m + std::log(sum);
}

} // namespace kgh::simd
