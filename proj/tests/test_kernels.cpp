#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "kgh/simd/kernels.hpp"

using namespace kgh::simd;

namespace {

std::vector<const KernelTable*> variants() {
    std::vector<const KernelTable*> out;
    if (auto* t = avx2_kernels()) out.push_back(t);
    if (auto* t = neon_kernels()) out.push_back(t);
    return out;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

std::vector<double> random_logprobs(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> d(-30.0, 0.0);
    std::vector<double> x(n);
    for (auto& v : x) v = d(rng);
    // plant exact duplicates and extremes
    if (n > 4) {
        x[1] = x[0];
        x[n - 1] = -std::numeric_limits<double>::infinity();
        x[n / 2] = -0.0;
    }
    return x;
}

} // namespace

TEST_CASE("scalar reference semantics") {
    const auto& s = scalar_kernels();
    std::vector<double> acc{1.0, 2.0, 3.0};
    const std::vector<double> x{0.5, -1.0, 2.0};
    s.weighted_accumulate(acc.data(), x.data(), 2.0, 3);
    CHECK(acc == std::vector<double>{2.0, 0.0, 7.0});
    CHECK(s.reduce_max(x.data(), 3) == 2.0);
    CHECK(s.reduce_max(x.data(), 0) == -std::numeric_limits<double>::infinity());
    std::vector<std::int32_t> out(3);
    CHECK(s.select_at_least(x.data(), 3, 0.5, out.data()) == 2);
    CHECK(out[0] == 0);
    CHECK(out[1] == 2);
    CHECK(log_sum_exp(std::vector<double>{std::log(0.25), std::log(0.75)}) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("every compiled variant is bit-identical to the scalar reference") {
    const auto& ref = scalar_kernels();
    std::mt19937_64 rng(42);
    const auto vs = variants();
    MESSAGE("variants under test: " << vs.size());
    for (const auto* v : vs) {
        for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 9u, 31u, 64u, 1000u, 50257u}) {
            const auto x = random_logprobs(rng, n);
            auto a = random_logprobs(rng, n);
            auto b = a;
            for (double w : {0.37, 1.0, 1e-300, 0.123456789}) {
                ref.weighted_accumulate(a.data(), x.data(), w, n);
                v->weighted_accumulate(b.data(), x.data(), w, n);
            }
            bool equal = true;
            for (std::size_t i = 0; i < n; ++i) equal = equal && same_bits(a[i], b[i]);
            CHECK_MESSAGE(equal, v->name << " accumulate differs at n=" << n);
            CHECK(same_bits(ref.reduce_max(x.data(), n), v->reduce_max(x.data(), n)));

            std::vector<std::int32_t> ra(n + 1), rb(n + 1);
            for (double thr : {-std::numeric_limits<double>::infinity(), -15.0, x.empty() ? 0.0 : x[0], 0.0, 1.0}) {
                const auto ca = ref.select_at_least(x.data(), n, thr, ra.data());
                const auto cb = v->select_at_least(x.data(), n, thr, rb.data());
                REQUIRE(ca == cb);
                CHECK(std::equal(ra.begin(), ra.begin() + static_cast<std::ptrdiff_t>(ca), rb.begin()));
            }
        }
    }
}

TEST_CASE("dispatch honours the override variable") {
    // active_kernels() caches its choice, so only the default is checked here
    const auto& active = active_kernels();
    const char* env = std::getenv("KGH_KERNELS");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) {
        CHECK(std::strcmp(active.name, "scalar") == 0);
    } else if (avx2_kernels() != nullptr) {
        CHECK(std::strcmp(active.name, "avx2") == 0);
    }
}
