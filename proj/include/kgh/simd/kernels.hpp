#pragma once

// Vocabulary-wide inner loops of the search. Every ISA variant must produce
// bit-identical results to the scalar reference: no FMA contraction and no
// reassociation, so exactness of the pruned search never depends on which
// variant is active.

#include <cstddef>
#include <cstdint>
#include <span>

namespace kgh::simd {

struct KernelTable {
    const char* name;
    // acc[i] += w * x[i]
    void (*weighted_accumulate)(double* acc, const double* x, double w, std::size_t n);
    // max over x; -inf for n == 0
    double (*reduce_max)(const double* x, std::size_t n);
    // writes indices i with x[i] >= threshold to out in ascending order, returns the count
    std::size_t (*select_at_least)(const double* x, std::size_t n, double threshold, std::int32_t* out);
};

const KernelTable& scalar_kernels() noexcept;
// nullptr when the variant is not compiled in or the CPU lacks the ISA.
const KernelTable* avx2_kernels() noexcept;
const KernelTable* neon_kernels() noexcept;

// Best supported table, overridable with KGH_KERNELS=scalar|avx2|neon.
const KernelTable& active_kernels() noexcept;

inline void weighted_accumulate(std::span<double> acc, std::span<const double> x, double w) {
    active_kernels().weighted_accumulate(acc.data(), x.data(), w, acc.size());
}

inline double reduce_max(std::span<const double> x) { return active_kernels().reduce_max(x.data(), x.size()); }

inline std::size_t select_at_least(std::span<const double> x, double threshold, std::span<std::int32_t> out) {
    return active_kernels().select_at_least(x.data(), x.size(), threshold, out.data());
}

// log(sum(exp(x))), computed around the max.
double log_sum_exp(std::span<const double> x);

} // namespace kgh::simd
