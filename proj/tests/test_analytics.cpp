#include "doctest.h"

#include <cmath>

#include "kvn/analytics.hpp"
#include "kvn/error.hpp"
#include "oracles.hpp"

using namespace kvn;

TEST_CASE("binomial and log2") {
    CHECK(binomial(5, 2) == 10);
    CHECK(binomial(5, 0) == 1);
    CHECK(binomial(3, 4) == 0);
    CHECK(binomial(40, 20) == 137846528820ULL);
    CHECK(ceil_log2(1) == 0);
    CHECK(ceil_log2(2) == 1);
    CHECK(ceil_log2(5) == 3);
    CHECK(ceil_log2(16) == 4);
    CHECK(ceil_log2(17) == 5);
}

TEST_CASE("stencil sizes") {
    CHECK(stencil_size(1, 1) == 2);
    CHECK(stencil_size(2, 1) == 4);
    CHECK(stencil_size(1, 2) == 4);
    CHECK(stencil_size(2, 2) == 12);
    CHECK(stencil_size(1, 3) == 6);
    CHECK(stencil_size(0, 2) == 0);
    for (int d = 1; d <= 3; ++d) {
        for (int R = 0; R <= 3; ++R) {
            std::uint64_t count = 0;
            for (int a = -R; a <= R; ++a)
                for (int b = (d > 1 ? -R : 0); b <= (d > 1 ? R : 0); ++b)
                    for (int c = (d > 2 ? -R : 0); c <= (d > 2 ? R : 0); ++c)
                        if (std::abs(a) + std::abs(b) + std::abs(c) <= R) ++count;
            CHECK(stencil_size(R, d) == count - 1);
        }
    }
}

TEST_CASE("rank formula matches lattice enumeration") {
    for (int d : {1, 2}) {
        const int side = d == 1 ? 64 : 8;
        const std::uint64_t L = 64;
        for (int K : {1, 2, 4}) {
            for (int r : {1, 2, 3}) {
                for (bool self : {false, true}) {
                    CAPTURE(d);
                    CAPTURE(K);
                    CAPTURE(r);
                    CAPTURE(self);
                    const auto rep = rank_analytics(L, d, K, r, self);
                    const auto brute =
                        oracle::lattice_monomials(side, d, (K + 1) / 2, r, self);
                    CHECK(rep.rank_poly == 2 * brute);
                    CHECK(rep.monomials_per_site * L == brute);
                    CHECK(rep.depth == static_cast<int>(std::ceil(std::log2(
                                           static_cast<double>(rep.rank_poly)))));
                }
            }
        }
    }
}

TEST_CASE("linear nearest neighbour rank is 4L") {
    for (std::uint64_t L : {8ULL, 16ULL, 100ULL, 1024ULL}) {
        const auto rep = rank_analytics(L, 1, 2, 1);
        CHECK(rep.radius == 1);
        CHECK(rep.stencil_size == 2);
        CHECK(rep.edges == 2 * L);
        CHECK(rep.rank_linear == 4 * L);
        CHECK(rep.rank_poly == 4 * L);
        CHECK(rep.depth == ceil_log2(4 * L));
    }
    CHECK(rank_analytics(1024, 1, 2, 1).depth == 12);
}

TEST_CASE("rank analytics from a spec") {
    const auto g = GridSpec::line(32, 1.0 / 32);
    RhsParams p;
    p.deriv_order = 2;
    p.degree = 2;
    const auto spec = rhs_to_spec("generic-poly", g, p);
    const auto rep = rank_analytics(spec);
    CHECK(rep.lattice_size == 32);
    CHECK(rep.monomials_per_site == 3);
    for (const auto& st : spec.sites) CHECK(st.monomials.size() == rep.monomials_per_site);

    p.self_coupling = true;
    const auto with_self = rhs_to_spec("generic-poly", g, p);
    CHECK(with_self.sites[0].monomials.size() == rank_analytics(32, 1, 2, 2, true).monomials_per_site);
}

TEST_CASE("rank analytics contract errors") {
    CHECK_THROWS_AS(rank_analytics(0, 1, 2, 1), ContractError);
    CHECK_THROWS_AS(rank_analytics(8, 0, 2, 1), ContractError);
    CHECK_THROWS_AS(rank_analytics(8, 1, 0, 1), ContractError);
    CHECK_THROWS_AS(rank_analytics(8, 1, 2, 0), ContractError);
}

TEST_CASE("stencil solver") {
    const auto c4 = stencil_coefficients(4, 2);
    const double expect[] = {1, -4, 6, -4, 1};
    REQUIRE(c4.size() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(std::abs(c4[static_cast<std::size_t>(i)] - expect[i]) < 1e-9);
        CHECK(std::abs(c4[static_cast<std::size_t>(i)] - std::round(c4[static_cast<std::size_t>(i)])) < 1e-9);
    }

    const auto c2 = stencil_coefficients(2, 1);
    CHECK(c2[0] == doctest::Approx(1.0));
    CHECK(c2[1] == doctest::Approx(-2.0));
    CHECK(c2[2] == doctest::Approx(1.0));

    const auto c1 = stencil_coefficients(1, 1);
    CHECK(c1[0] == doctest::Approx(-0.5));
    CHECK(c1[1] == doctest::Approx(0.0));
    CHECK(c1[2] == doctest::Approx(0.5));

    // fourth-order second derivative: (-1, 16, -30, 16, -1) / 12
    const auto c22 = stencil_coefficients(2, 2);
    CHECK(c22[0] == doctest::Approx(-1.0 / 12));
    CHECK(c22[1] == doctest::Approx(16.0 / 12));
    CHECK(c22[2] == doctest::Approx(-30.0 / 12));

    // third derivative: (-1, 2, 0, -2, 1) / 2
    const auto c3 = stencil_coefficients(3, 2);
    CHECK(c3[0] == doctest::Approx(-0.5));
    CHECK(c3[1] == doctest::Approx(1.0));
    CHECK(c3[2] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c3[4] == doctest::Approx(0.5));

    for (int K : {1, 2, 3, 4, 6}) {
        const int R = (K + 1) / 2;
        CAPTURE(K);
        const auto c = stencil_coefficients(K, R);
        CHECK(moment_residual(c, K) < 1e-9);
        // independent moment check with a polynomial x^K sampled on the stencil
        double fact = 1.0;
        for (int i = 2; i <= K; ++i) fact *= i;
        double acc = 0.0;
        for (int m = -R; m <= R; ++m) acc += c[static_cast<std::size_t>(m + R)] * std::pow(m, K);
        CHECK(acc == doctest::Approx(fact));
        CHECK_THROWS_AS(stencil_coefficients(K, R - 1), ContractError);
    }
    CHECK_THROWS_AS(stencil_coefficients(0, 1), ContractError);
    CHECK_THROWS_AS(moment_residual({1.0, 2.0}, 1), ContractError);
}
