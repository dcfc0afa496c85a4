#include <doctest.h>

#include <cmath>
#include <set>

#include "qkd/rng.hpp"

using namespace qkd;

TEST_CASE("same seed and label give the same stream") {
    RandomStream a(7, "x"), b(7, "x"), c(7, "y"), d(8, "x");
    bool differs_label = false, differs_seed = false;
    for (int i = 0; i < 100; ++i) {
        const auto va = a.next_u64();
        CHECK(va == b.next_u64());
        differs_label = differs_label || va != c.next_u64();
        differs_seed = differs_seed || va != d.next_u64();
    }
    CHECK(differs_label);
    CHECK(differs_seed);
}

TEST_CASE("split streams are independent of parent draws") {
    RandomStream parent(3, "p");
    RandomStream c1 = parent.split("child");
    parent.next_u64();
    RandomStream c2 = parent.split("child");
    CHECK(c1.next_u64() == c2.next_u64());
    CHECK(c1.label() == "p/child");
}

TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("uniform, below and bit ranges") {
    RandomStream r(1, "ranges");
    double sum = 0;
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        const auto k = r.below(7);
        REQUIRE(k < 7);
        seen.insert(k);
        REQUIRE(r.bit() <= 1);
    }
    CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
    CHECK(seen.size() == 7);
    CHECK_THROWS(r.below(0));
}

TEST_CASE("normal moments") {
    RandomStream r(2, "normal");
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("poisson mean and variance") {
    for (double mean : {0.15, 3.0, 1200.0}) {
        RandomStream r(4, "poisson");
        double s = 0, s2 = 0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const auto k = static_cast<double>(r.poisson(mean));
            s += k;
            s2 += k * k;
        }
        const double m = s / n;
        const double var = s2 / n - m * m;
        // Mean within 5 standard errors.
        CHECK(std::abs(m - mean) < 5 * std::sqrt(mean / n));
        CHECK(var == doctest::Approx(mean).epsilon(0.05));
    }
    RandomStream r(5, "poisson0");
    CHECK(r.poisson(0.0) == 0);
}
