#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "rulkit/rng.hpp"

using rulkit::Rng;
using rulkit::derive_stream;

TEST_CASE("identical keys replay the identical sequence") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("a copy taken mid-stream continues identically") {
    Rng a(7);
    for (int i = 0; i < 17; ++i) a.next_u64();
    Rng b = a;
    for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());
}

TEST_CASE("derived streams differ from the parent and from each other") {
    std::set<std::uint64_t> keys;
    keys.insert(123);
    for (std::uint64_t child = 0; child < 64; ++child)
        keys.insert(derive_stream(123, child));
    REQUIRE(keys.size() == 65);

    // Same child id under different parents gives different streams.
    REQUIRE(derive_stream(1, 5) != derive_stream(2, 5));
    // Label-based derivation is deterministic.
    REQUIRE(derive_stream(9, "e.l1.wx") == derive_stream(9, "e.l1.wx"));
    REQUIRE(derive_stream(9, "e.l1.wx") != derive_stream(9, "e.l1.wh"));
}

TEST_CASE("uniform doubles lie in [0,1) and fill the range") {
    Rng r(2026);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        sum += u;
    }
    REQUIRE(lo < 0.001);
    REQUIRE(hi > 0.999);
    // Mean of U(0,1): 1/2, sd of the mean = 1/sqrt(12 n).
    REQUIRE(std::abs(sum / n - 0.5) < 5.0 / std::sqrt(12.0 * n));
}

TEST_CASE("bounded uniform respects its interval") {
    Rng r(5);
    for (int i = 0; i < 10000; ++i) {
        double u = r.uniform(-2.5, 3.5);
        REQUIRE(u >= -2.5);
        REQUIRE(u < 3.5);
    }
    for (int i = 0; i < 10000; ++i) {
        double u = r.uniform_sym();
        REQUIRE(u >= -1.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("gaussian moments match a standard normal") {
    Rng r(99);
    const int n = 400000;
    double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        double g = r.gaussian();
        s1 += g;
        s2 += g * g;
        s3 += g * g * g;
        s4 += g * g * g * g;
    }
    s1 /= n; s2 /= n; s3 /= n; s4 /= n;
    REQUIRE(std::abs(s1) < 0.01);
    REQUIRE(std::abs(s2 - 1.0) < 0.02);
    REQUIRE(std::abs(s3) < 0.05);
    REQUIRE(std::abs(s4 - 3.0) < 0.1);
}

TEST_CASE("gaussian honors mean and standard deviation") {
    Rng r(7);
    const int n = 200000;
    double s1 = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        double g = r.gaussian(10.0, 3.0);
        s1 += g;
        s2 += (g - 10.0) * (g - 10.0);
    }
    REQUIRE(std::abs(s1 / n - 10.0) < 0.05);
    REQUIRE(std::abs(std::sqrt(s2 / n) - 3.0) < 0.05);
}

TEST_CASE("consecutive draws are uncorrelated at lag one") {
    Rng r(31337);
    const int n = 200000;
    double prev = r.uniform(), acc = 0.0;
    for (int i = 0; i < n; ++i) {
        double u = r.uniform();
        acc += (prev - 0.5) * (u - 0.5);
        prev = u;
    }
    // Var(U) = 1/12, so the normalized lag-1 autocorrelation is 12*acc/n.
    REQUIRE(std::abs(12.0 * acc / n) < 0.02);
}
