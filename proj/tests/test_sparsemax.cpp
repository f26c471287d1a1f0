#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fewrec/errors.hpp"
#include "fewrec/rng.hpp"
#include "fewrec/sparsemax.hpp"

using namespace fewrec;

namespace {

// Independent oracle: enumerate every support set, derive its threshold, and
// keep the unique candidate that is a consistent simplex projection.
std::vector<double> brute_force_projection(const std::vector<double>& z) {
    const std::size_t n = z.size();
    std::vector<double> best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t mask = 1; mask < (1u << n); ++mask) {
        double sum = 0.0;
        int k = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1u << i)) {
                sum += z[i];
                ++k;
            }
        }
        double tau = (sum - 1.0) / k;
        std::vector<double> p(n, 0.0);
        bool feasible = true;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1u << i)) {
                p[i] = z[i] - tau;
                if (p[i] < 0.0) feasible = false;
            }
        }
        if (!feasible) continue;
        double dist = 0.0;
        for (std::size_t i = 0; i < n; ++i) dist += (p[i] - z[i]) * (p[i] - z[i]);
        if (dist < best_dist) {
            best_dist = dist;
            best = p;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("sparsemax hand cases") {
    auto p = sparsemax({3.0, 1.0});
    CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.0).epsilon(1e-12));

    p = sparsemax({1.2, 0.8});
    CHECK(p[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.3).epsilon(1e-12));

    p = sparsemax({2.5, 2.5, 2.5, 2.5});
    for (double v : p) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("sparsemax matches the support-enumeration oracle (dim <= 8)") {
    auto rng = make_rng(derive_seed(13, "sparsemax-oracle"));
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_int_distribution<int> dim(1, 8);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> z(static_cast<std::size_t>(dim(rng)));
        for (auto& v : z) v = u(rng);
        auto fast = sparsemax(z);
        auto oracle = brute_force_projection(z);
        REQUIRE(fast.size() == oracle.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
            CHECK(std::abs(fast[i] - oracle[i]) <= 1e-8);
        }
    }
}

TEST_CASE("sparsemax simplex membership and shift invariance") {
    auto rng = make_rng(derive_seed(13, "sparsemax-props"));
    // Inputs and shifts on a 2^-20 lattice so that shifted entries are exactly
    // representable and shift invariance can be asserted bit-for-bit.
    std::uniform_int_distribution<int> q(-5 << 20, 5 << 20);
    const double lattice = 1.0 / (1 << 20);
    for (int t = 0; t < 2000; ++t) {
        std::vector<double> z(6);
        for (auto& v : z) v = q(rng) * lattice;
        auto p = sparsemax(z);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);

        double c = q(rng) * lattice;
        std::vector<double> shifted = z;
        for (auto& v : shifted) v += c;
        CHECK(sparsemax(shifted) == p);  // exact

        // Order preservation.
        for (std::size_t i = 0; i < z.size(); ++i) {
            for (std::size_t j = 0; j < z.size(); ++j) {
                if (z[i] >= z[j]) CHECK(p[i] >= p[j]);
            }
        }
    }
}

TEST_CASE("sparsemax_jvp structure on the support") {
    // Support size 1: constant region, zero Jacobian.
    auto g = sparsemax_jvp({3.0, 1.0}, {0.7, -0.2});
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);

    // All-equal upstream on the support projects to zero.
    g = sparsemax_jvp({1.2, 0.8}, {0.5, 0.5});
    CHECK(g[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sparsemax_jvp matches central finite differences off boundaries") {
    auto rng = make_rng(derive_seed(13, "sparsemax-jvp"));
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const double h = 1e-6;
    int checked = 0;
    for (int t = 0; t < 200 && checked < 100; ++t) {
        std::vector<double> z(5);
        for (auto& v : z) v = u(rng);
        auto p = sparsemax(z);
        // Skip configurations near a support-set boundary, where sparsemax is
        // not differentiable.
        bool near_boundary = false;
        for (double v : p) {
            if (v > 0.0 && v < 1e-4) near_boundary = true;
        }
        if (near_boundary) continue;

        std::vector<double> upstream(5);
        for (auto& v : upstream) v = u(rng);
        auto analytic = sparsemax_jvp(z, upstream);

        for (std::size_t i = 0; i < z.size(); ++i) {
            auto zp = z, zm = z;
            zp[i] += h;
            zm[i] -= h;
            auto pp = sparsemax(zp), pm = sparsemax(zm);
            double fd = 0.0;
            for (std::size_t j = 0; j < z.size(); ++j) {
                fd += upstream[j] * (pp[j] - pm[j]) / (2.0 * h);
            }
            double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
            CHECK(std::abs(fd - analytic[i]) / denom <= 1e-5);
        }
        ++checked;
    }
    CHECK(checked >= 50);
}

TEST_CASE("sparsemax input validation") {
    CHECK_THROWS_AS(sparsemax({}), ConfigError);
    CHECK_THROWS_AS(sparsemax({1.0, std::numeric_limits<double>::quiet_NaN()}), NumericError);
    CHECK_THROWS_AS(sparsemax({std::numeric_limits<double>::infinity()}), NumericError);
}
