#include "kgh/simd/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <limits>

namespace kgh::simd {

namespace {

void weighted_accumulate_neon(double* acc, const double* x, double w, std::size_t n) {
    const float64x2_t vw = vdupq_n_f64(w);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float64x2_t a0 = vld1q_f64(acc + i);
        float64x2_t a1 = vld1q_f64(acc + i + 2);
        // vmulq + vaddq rather than vfmaq: must round like the scalar loop
        a0 = vaddq_f64(a0, vmulq_f64(vw, vld1q_f64(x + i)));
        a1 = vaddq_f64(a1, vmulq_f64(vw, vld1q_f64(x + i + 2)));
        vst1q_f64(acc + i, a0);
        vst1q_f64(acc + i + 2, a1);
    }
    for (; i < n; ++i) acc[i] += w * x[i];
}

double reduce_max_neon(const double* x, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    if (n >= 2) {
        float64x2_t vm = vdupq_n_f64(m);
        for (; i + 2 <= n; i += 2) {
            const float64x2_t v = vld1q_f64(x + i);
            // select v where v > vm, ignoring NaN like the scalar compare
            vm = vbslq_f64(vcgtq_f64(v, vm), v, vm);
        }
        const double a = vgetq_lane_f64(vm, 0);
        const double b = vgetq_lane_f64(vm, 1);
        m = a > m ? a : m;
        m = b > m ? b : m;
    }
    for (; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

std::size_t select_at_least_neon(const double* x, std::size_t n, double threshold, std::int32_t* out) {
    const float64x2_t vt = vdupq_n_f64(threshold);
    std::size_t k = 0;
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const uint64x2_t ge = vcgeq_f64(vld1q_f64(x + i), vt);
        if (vgetq_lane_u64(ge, 0) != 0) out[k++] = static_cast<std::int32_t>(i);
        if (vgetq_lane_u64(ge, 1) != 0) out[k++] = static_cast<std::int32_t>(i + 1);
    }
    for (; i < n; ++i) {
        if (x[i] >= threshold) out[k++] = static_cast<std::int32_t>(i);
    }
    return k;
}

constexpr KernelTable kNeon{"neon", weighted_accumulate_neon, reduce_max_neon, select_at_least_neon};

} // namespace

const KernelTable* neon_kernels() noexcept { return &kNeon; }

} // namespace kgh::simd

#else

namespace kgh::simd {
const KernelTable* neon_kernels() noexcept { return nullptr; }
} // namespace kgh::simd

#endif
