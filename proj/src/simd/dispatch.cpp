#include <cstdlib>
#include <string_view>

#include "kgh/simd/kernels.hpp"

namespace kgh::simd {

const KernelTable* avx2_kernels_unchecked() noexcept;

const KernelTable* avx2_kernels() noexcept {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
    static const bool supported = __builtin_cpu_supports("avx2");
    return supported ? avx2_kernels_unchecked() : nullptr;
#else
    return nullptr;
#endif
}

namespace {

const KernelTable& select_kernels() noexcept {
    const char* env = std::getenv("KGH_KERNELS");
    const std::string_view want = env != nullptr ? env : "auto";
    if (want == "scalar") return scalar_kernels();
    if (want == "avx2" && avx2_kernels() != nullptr) return *avx2_kernels();
    if (want == "neon" && neon_kernels() != nullptr) return *neon_kernels();
    if (const auto* k = avx2_kernels()) return *k;
    if (const auto* k = neon_kernels()) return *k;
    return scalar_kernels();
}

} // namespace

const KernelTable& active_kernels() noexcept {
    static const KernelTable& table = select_kernels();
    return table;
}

} // namespace kgh::simd
