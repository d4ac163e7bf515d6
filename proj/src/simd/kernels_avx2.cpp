// Compiled with -mavx2 (and without -mfma); only reached after a runtime
// CPU check in dispatch.cpp.

#include "kgh/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <limits>

namespace kgh::simd {

namespace {

void weighted_accumulate_avx2(double* acc, const double* x, double w, std::size_t n) {
    const __m256d vw = _mm256_set1_pd(w);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256d a0 = _mm256_loadu_pd(acc + i);
        __m256d a1 = _mm256_loadu_pd(acc + i + 4);
        // separate mul/add keeps rounding identical to the scalar loop
        a0 = _mm256_add_pd(a0, _mm256_mul_pd(vw, _mm256_loadu_pd(x + i)));
        a1 = _mm256_add_pd(a1, _mm256_mul_pd(vw, _mm256_loadu_pd(x + i + 4)));
        _mm256_storeu_pd(acc + i, a0);
        _mm256_storeu_pd(acc + i + 4, a1);
    }
    for (; i + 4 <= n; i += 4) {
        __m256d a = _mm256_loadu_pd(acc + i);
        a = _mm256_add_pd(a, _mm256_mul_pd(vw, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(acc + i, a);
    }
    for (; i < n; ++i) acc[i] += w * x[i];
}

double reduce_max_avx2(const double* x, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    if (n >= 4) {
        __m256d vm = _mm256_set1_pd(m);
        for (; i + 4 <= n; i += 4) vm = _mm256_max_pd(_mm256_loadu_pd(x + i), vm);
        alignas(32) double lanes[4];
        _mm256_store_pd(lanes, vm);
        for (double v : lanes) m = v > m ? v : m;
    }
    for (; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

std::size_t select_at_least_avx2(const double* x, std::size_t n, double threshold, std::int32_t* out) {
    const __m256d vt = _mm256_set1_pd(threshold);
    std::size_t k = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        int mask = _mm256_movemask_pd(_mm256_cmp_pd(_mm256_loadu_pd(x + i), vt, _CMP_GE_OQ));
        while (mask != 0) {
            const int bit = __builtin_ctz(static_cast<unsigned>(mask));
            out[k++] = static_cast<std::int32_t>(i + static_cast<std::size_t>(bit));
            mask &= mask - 1;
        }
    }
    for (; i < n; ++i) {
        if (x[i] >= threshold) out[k++] = static_cast<std::int32_t>(i);
    }
    return k;
}

constexpr KernelTable kAvx2{"avx2", weighted_accumulate_avx2, reduce_max_avx2, select_at_least_avx2};

} // namespace

const KernelTable* avx2_kernels_unchecked() noexcept { return &kAvx2; }

} // namespace kgh::simd

#else

namespace kgh::simd {
const KernelTable* avx2_kernels_unchecked() noexcept { return nullptr; }
} // namespace kgh::simd

#endif
