#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Sparse>

#include "kvn/error.hpp"
#include "kvn/rhs.hpp"

using namespace kvn;

namespace {

std::mt19937_64 rng(20240601);

CVec random_field(std::size_t n, double scale = 1.0, bool real = false) {
    std::normal_distribution<double> g(0.0, scale);
    CVec z(n);
    for (auto& v : z) v = Complex(g(rng), real ? 0.0 : g(rng));
    return z;
}

double norm2(const CVec& v) {
    double s = 0.0;
    for (const auto& x : v) s += std::norm(x);
    return std::sqrt(s);
}

double diff2(const CVec& a, const CVec& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += std::norm(a[k] - b[k]);
    return std::sqrt(s);
}

// Central finite difference of F along w.
CVec fd_jacobian(const Rhs& rhs, const FieldState& s, const CVec& w, double eps = 1e-6) {
    FieldState p = s, m = s;
    for (std::size_t k = 0; k < w.size(); ++k) {
        p.z[k] += eps * w[k];
        m.z[k] -= eps * w[k];
    }
    const CVec fp = rhs.evaluate(p), fm = rhs.evaluate(m);
    CVec out(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) out[k] = (fp[k] - fm[k]) / (2 * eps);
    return out;
}

void check_jacobian(const Rhs& rhs, const GridSpec& g, int trials, double scale = 1.0) {
    for (int t = 0; t < trials; ++t) {
        const auto s = make_field(g, random_field(g.size(), scale));
        const CVec w = random_field(g.size());
        const CVec jw = rhs.jacobian_apply(s, w);
        const CVec fd = fd_jacobian(rhs, s, w);
        CHECK(diff2(jw, fd) <= 1e-5 * norm2(fd) + 1e-9);
    }
}

} // namespace

TEST_CASE("burgers stencil examples") {
    const auto g = GridSpec::line(3, 1.0);
    const auto c = make_field(g, CVec(3, Complex(0.7, -0.2)));
    for (const auto& f : burgers_rhs(c, 2.0)) CHECK(std::abs(f) == 0.0);

    const auto s = make_field(g, {0.0, 1.0, 0.0});
    const CVec f = burgers_rhs(s, 1.0);
    CHECK(f[0] == Complex(1.0));
    CHECK(f[1] == Complex(-2.0));
    CHECK(f[2] == Complex(1.0));

    CHECK_THROWS_AS(BurgersRhs(0.0), ContractError);
    CHECK_THROWS_AS(burgers_rhs(make_field(GridSpec::plane(3, 3, 1, 1), CVec(9)), 1.0),
                    ContractError);
}

TEST_CASE("burgers diffusion acts on a Fourier mode as the discrete laplacian eigenvalue") {
    const std::size_t L = 64;
    const double dx = 1.0 / L, re = 50.0;
    const auto g = GridSpec::line(L, dx);
    for (int m : {1, 3, 7}) {
        CVec z(L);
        for (std::size_t k = 0; k < L; ++k) z[k] = 1e-3 * std::sin(2 * std::numbers::pi * m * k / L);
        const auto s = make_field(g, z);
        const double lambda = -(2 - 2 * std::cos(2 * std::numbers::pi * m / L)) / (re * dx * dx);
        const auto parts = BurgersRhs(re).parts(s);
        for (std::size_t k = 0; k < L; ++k) {
            CHECK(std::abs(parts.diffusion[k] - lambda * z[k]) <= 1e-12 * std::abs(lambda) * 1e-3);
        }
    }
}

TEST_CASE("fisher fixed points and reaction") {
    const auto g = GridSpec::cell_centered(6, 6, -1.0, 1.0);
    const auto rot = VelocityField::rotational();
    RVec vx(36), vy(36);
    for (std::size_t k = 0; k < 36; ++k) {
        const auto u = rot.at(g, k);
        vx[k] = u[0];
        vy[k] = u[1];
    }
    // Same field sampled at the centre point: plain central differences of u . grad z.
    const auto centred = VelocityField::sampled(vx, vy);
    for (const auto& vel : {rot, centred}) {
        for (const auto& f : fisher_rhs(make_field(g, CVec(36)), 200.0, 1.0, vel)) CHECK(f == Complex{});
    }
    for (const auto& f : fisher_rhs(make_field(g, CVec(36, 1.0)), 200.0, 1.0, centred)) {
        CHECK(std::abs(f) <= 1e-12);
    }
    for (const auto& f : fisher_rhs(make_field(g, CVec(36, 0.5)), 200.0, 1.0, centred)) {
        CHECK(std::abs(f - 0.25) <= 1e-12);
    }
    // With 1/r taken at the neighbours a constant is not annihilated by the
    // transport term; diffusion and reaction still vanish at z = 1.
    const auto parts = FisherRhs(200.0, 1.0, rot).parts(make_field(g, CVec(36, 1.0)));
    double transport = 0.0;
    for (std::size_t k = 0; k < 36; ++k) {
        CHECK(std::abs(parts.diffusion[k]) <= 1e-12);
        CHECK(std::abs(parts.reaction[k]) <= 1e-12);
        transport = std::max(transport, std::abs(parts.transport[k]));
    }
    CHECK(transport > 1e-3);

    // d/dz Da (z - z^2) vanishes at z = 1/2; uniform w sees no transport.
    const FisherRhs rhs(200.0, 1.0, centred);
    for (const auto& v : rhs.jacobian_apply(make_field(g, CVec(36, 0.5)), CVec(36, 1.0))) {
        CHECK(std::abs(v) <= 1e-12);
    }
    CHECK_THROWS_AS(FisherRhs(0.0, 1.0, rot), ContractError);
    CHECK_THROWS_AS(fisher_rhs(make_field(GridSpec::line(4, 1.0), CVec(4)), 1.0, 1.0, rot),
                    ContractError);
}

TEST_CASE("fisher rotational weights match the closed form") {
    const auto g = GridSpec::cell_centered(8, 8, -1.0, 1.0);
    const double dx = g.spacing(0), dy = g.spacing(1), pe = 1e9;
    CHECK(dx == dy);
    const auto z = random_field(g.size(), 1.0, true);
    const auto s = make_field(g, z);
    const CVec adv = FisherRhs(pe, 0.0, VelocityField::rotational()).parts(s).transport;
    for (std::size_t k = 0; k < g.size(); ++k) {
        const auto [i, j] = g.coords(k);
        const double x = g.x(k), y = g.y(k);
        auto zz = [&](long a, long b) {
            const long n = 8;
            return z[g.index(static_cast<std::size_t>((a + n) % n), static_cast<std::size_t>((b + n) % n))];
        };
        // Periodic wrap: the weight uses the coordinate of the point actually read.
        auto cx = [&](long a) { return g.coord(0, static_cast<std::size_t>((a + 8) % 8)); };
        auto cy = [&](long b) { return g.coord(1, static_cast<std::size_t>((b + 8) % 8)); };
        const double xm = cx(static_cast<long>(i) - 1), xp = cx(static_cast<long>(i) + 1);
        const double ym = cy(static_cast<long>(j) - 1), yp = cy(static_cast<long>(j) + 1);
        const long I = static_cast<long>(i), J = static_cast<long>(j);
        const Complex expect = y / (2 * dx) * (zz(I + 1, J) / std::hypot(xp, y) - zz(I - 1, J) / std::hypot(xm, y)) -
                               x / (2 * dy) * (zz(I, J + 1) / std::hypot(x, yp) - zz(I, J - 1) / std::hypot(x, ym));
        CHECK(std::abs(adv[k] - expect) <= 1e-12 * (1 + std::abs(expect)));
    }
}

TEST_CASE("diffusion jacobian is the operator itself") {
    const auto g = GridSpec::plane(5, 4, 0.2, 0.3);
    const DiffusionRhs rhs(0.7);
    const auto s = make_field(g, random_field(g.size()));
    const CVec w = random_field(g.size());
    const CVec jw = rhs.jacobian_apply(s, w);
    const CVec fw = rhs.evaluate(make_field(g, w));
    CHECK(diff2(jw, fw) <= 1e-14 * norm2(fw));
}

TEST_CASE("jacobian matches finite differences") {
    check_jacobian(BurgersRhs(20.0), GridSpec::line(32, 1.0 / 32), 100);
    check_jacobian(BurgersRhs(20.0),
                   GridSpec::line(16, 0.1, 0.0, Boundary::dirichlet(Complex(0.3))), 20);
    check_jacobian(FisherRhs(50.0, 2.0, VelocityField::rotational()),
                   GridSpec::cell_centered(8, 8, -1.0, 1.0), 100);
    const auto g = GridSpec::plane(6, 5, 0.2, 0.25);
    check_jacobian(FisherRhs(10.0, 1.0, VelocityField::sampled(RVec(30, 0.4), RVec(30, -1.1))), g, 20);
    check_jacobian(DiffusionRhs(2.0), g, 20);

    const auto cg = GridSpec::cavity(6);
    const auto psi = make_field(cg, random_field(cg.size(), 0.1, true));
    check_jacobian(CavityVorticityRhs(psi, 100.0), cg, 20);
}

TEST_CASE("cavity vorticity examples") {
    const auto g = GridSpec::cavity(8, 0.0);
    const auto zero = make_field(g, CVec(g.size()));
    for (const auto& f : cavity_rhs(zero, zero, 1000.0)) CHECK(f == Complex{});

    const double re = 10.0, h = g.spacing(0);
    CVec psi_c(g.size(), 0.3), om(g.size()), psi_q(g.size()), om_y(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        om[k] = std::sin(3.0 * g.x(k)) * g.y(k);
        psi_q[k] = g.x(k) * g.x(k);
        om_y[k] = g.y(k);
    }
    const auto om_s = make_field(g, om);
    const CVec f = cavity_rhs(om_s, make_field(g, psi_c), re);
    const CVec f_q = cavity_rhs(make_field(g, om_y), make_field(g, psi_q), re);
    for (std::size_t i = 1; i + 1 < 8; ++i) {
        for (std::size_t j = 1; j + 1 < 8; ++j) {
            const std::size_t k = g.index(i, j);
            const Complex lap = (om[g.index(i + 1, j)] + om[g.index(i - 1, j)] + om[g.index(i, j + 1)] +
                                 om[g.index(i, j - 1)] - 4.0 * om[k]) / (h * h);
            CHECK(std::abs(f[k] - lap / re) <= 1e-10 * (1 + std::abs(lap)));
            CHECK(std::abs(f_q[k] - 2.0 * g.x(k)) <= 1e-10);
        }
    }
    CHECK_THROWS_AS(cavity_rhs(zero, make_field(GridSpec::cavity(6), CVec(36)), 1.0), ContractError);
}

TEST_CASE("thom wall closure") {
    const auto g = GridSpec::cavity(4, 2.0);
    const double h = g.spacing(0);
    CVec p(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) p[k] = 0.01 * static_cast<double>(k + 1);
    const auto w = wall_vorticity(make_field(g, p));
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(w.left[j] == doctest::Approx(-2 * p[g.index(0, j)].real() / (h * h)));
        CHECK(w.right[j] == doctest::Approx(-2 * p[g.index(3, j)].real() / (h * h)));
    }
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(w.bottom[i] == doctest::Approx(-2 * p[g.index(i, 0)].real() / (h * h)));
        CHECK(w.top[i] == doctest::Approx(-2 * p[g.index(i, 3)].real() / (h * h) - 2 * 2.0 / h));
    }
}

TEST_CASE("stream-function residual") {
    const auto g = GridSpec::cavity(10);
    const auto zero = make_field(g, CVec(g.size()));
    for (const auto& r : streamfunction_rhs(zero, zero)) CHECK(r == Complex{});
    for (const auto& r : streamfunction_rhs(zero, make_field(g, CVec(g.size(), 1.0)))) {
        CHECK(r == Complex(1.0));
    }

    // Direct sparse Poisson solve: lap psi = -omega with psi = 0 on the walls.
    const std::size_t n = 10;
    const double h = g.spacing(0);
    std::vector<Eigen::Triplet<double>> t;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const auto k = static_cast<int>(g.index(i, j));
            t.emplace_back(k, k, -4.0 / (h * h));
            if (i > 0) t.emplace_back(k, static_cast<int>(g.index(i - 1, j)), 1.0 / (h * h));
            if (i + 1 < n) t.emplace_back(k, static_cast<int>(g.index(i + 1, j)), 1.0 / (h * h));
            if (j > 0) t.emplace_back(k, static_cast<int>(g.index(i, j - 1)), 1.0 / (h * h));
            if (j + 1 < n) t.emplace_back(k, static_cast<int>(g.index(i, j + 1)), 1.0 / (h * h));
        }
    }
    Eigen::SparseMatrix<double> A(static_cast<int>(n * n), static_cast<int>(n * n));
    A.setFromTriplets(t.begin(), t.end());
    Eigen::VectorXd om(n * n);
    for (std::size_t k = 0; k < n * n; ++k) om(static_cast<int>(k)) = std::cos(g.x(k)) + g.y(k);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
    const Eigen::VectorXd ps = lu.solve(-om);
    CVec pz(n * n), oz(n * n);
    for (std::size_t k = 0; k < n * n; ++k) {
        pz[k] = ps(static_cast<int>(k));
        oz[k] = om(static_cast<int>(k));
    }
    for (const auto& r : streamfunction_rhs(make_field(g, pz), make_field(g, oz))) {
        CHECK(std::abs(r) <= 1e-9);
    }
}

TEST_CASE("sigma breakdown") {
    const auto g = GridSpec::line(16, 0.1);
    const BurgersRhs rhs(5.0);
    const auto zero = make_field(g, CVec(16));
    CHECK(sigma(zero, rhs).total == Complex{});

    for (int t = 0; t < 10; ++t) {
        const auto s = make_field(g, random_field(16));
        const auto sb = sigma(s, rhs);
        const Complex sum = sb.diffusion + sb.transport + sb.reaction;
        CHECK(std::abs(sum - sb.total) <= 1e-12 * (1 + std::abs(sb.total)));
    }
    CHECK_THROWS_AS(sigma(zero, CVec(3), RhsParts{}), ContractError);

    const auto fg = GridSpec::cell_centered(6, 6, -1.0, 1.0);
    const double da = 1.5;
    CVec z(36);
    std::uniform_real_distribution<double> u(0.01, 0.3);
    for (auto& v : z) v = u(rng);
    const auto fs = make_field(fg, z);
    double expect = 0.0;
    for (const auto& v : z) expect += da * (std::pow(v.real(), 2) - std::pow(v.real(), 3));
    const auto sb = sigma(fs, FisherRhs(100.0, da, VelocityField::rotational()));
    CHECK(sb.reaction.real() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(sb.reaction.real() > 0.0);
}

TEST_CASE("summation by parts on periodic fields") {
    for (int t = 0; t < 50; ++t) {
        const std::size_t L = 64;
        const double dx = 0.05, re = 3.0;
        const auto g = GridSpec::line(L, dx);
        const CVec z = random_field(L, 1.0, true);
        double zmax = 0.0;
        for (const auto& v : z) zmax = std::max(zmax, std::abs(v));
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t k = 0; k < L; ++k) {
            const double zp = z[(k + 1) % L].real(), zm = z[(k + L - 1) % L].real(), zk = z[k].real();
            lhs += zk * (zp - 2 * zk + zm);
            rhs -= (zp - zk) * (zp - zk);
        }
        CHECK(std::abs(lhs - rhs) <= 1e-12 * L * zmax * zmax);
        const auto sd = sigma(make_field(g, z), BurgersRhs(re)).diffusion.real();
        CHECK(std::abs(sd - rhs / (re * dx * dx)) <= 1e-12 * L * zmax * zmax / (re * dx * dx));
        CHECK(sd <= 0.0);
    }
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 8;
        const auto g = GridSpec::plane(n, n + 2, 0.1, 0.2);
        const double pe = 4.0;
        const CVec z = random_field(g.size());
        double zmax = 0.0, expect = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            zmax = std::max(zmax, std::abs(z[k]));
            expect -= std::norm(z[neighbor(g, k, 1, 0).index] - z[k]) / (0.1 * 0.1) +
                      std::norm(z[neighbor(g, k, 0, 1).index] - z[k]) / (0.2 * 0.2);
        }
        expect /= pe;
        const auto sd = sigma(make_field(g, z), FisherRhs(pe, 0.0, VelocityField::sampled(RVec(g.size()), RVec(g.size())))).diffusion.real();
        CHECK(std::abs(sd - expect) <= 1e-12 * g.size() * zmax * zmax / (pe * 0.01));
        CHECK(sd <= 0.0);
    }
}

TEST_CASE("convection bound") {
    const std::size_t L = 32;
    const double dx = 1.0 / L, re = 40.0;
    const auto g = GridSpec::line(L, dx);
    for (int t = 0; t < 20; ++t) {
        const CVec z = random_field(L, 1.0, true);
        const auto sb = sigma(make_field(g, z), BurgersRhs(re));
        double grad = 0.0, grad1 = 0.0, zinf = 0.0;
        for (std::size_t k = 0; k < L; ++k) {
            grad += std::norm(z[(k + 1) % L] - z[k]);
            grad1 += std::abs(z[(k + 1) % L] - z[k]);
            zinf = std::max(zinf, std::abs(z[k]));
        }
        CHECK(std::abs(sb.transport) <= zinf * zinf / dx * grad1 * (1 + 1e-12));
        // Young's inequality on the line above; the constant term carries Re, not Re dx^2.
        for (double eps : {0.1, 1.0, 10.0}) {
            const double bound = eps / (re * dx * dx) * grad + re / (4 * eps) * std::pow(zinf, 4) * L;
            CHECK(std::abs(sb.transport) <= bound);
        }
    }
}

TEST_CASE("rhs specs reproduce the numeric right-hand sides") {
    const auto g = GridSpec::line(12, 0.1);
    RhsParams p;
    p.reynolds = 7.0;
    const auto bs = rhs_to_spec("burgers", g, p);
    CHECK(bs.degree == 2);
    CHECK(bs.deriv_order == 2);
    CHECK(bs.radius == 1);
    CHECK(bs.monomial_count() == 12 * 5);
    for (const auto& st : bs.sites) {
        int lin = 0, quad = 0;
        for (const auto& m : st.monomials) (m.factors.size() == 1 ? lin : quad)++;
        CHECK(lin == 3);
        CHECK(quad == 2);
    }
    for (int t = 0; t < 10; ++t) {
        const CVec z = random_field(12);
        const CVec a = evaluate(bs, std::span<const CVec>(&z, 1));
        const CVec b = burgers_rhs(make_field(g, z), 7.0);
        CHECK(diff2(a, b) <= 1e-12 * norm2(b));
    }

    const auto gd = GridSpec::line(12, 0.1, 0.0, Boundary::dirichlet({Complex(1.0), Complex(-0.5), {}, {}}));
    const auto bd = rhs_to_spec("burgers", gd, p);
    const CVec zd = random_field(12);
    CHECK(diff2(evaluate(bd, std::span<const CVec>(&zd, 1)), burgers_rhs(make_field(gd, zd), 7.0)) <=
          1e-12 * norm2(burgers_rhs(make_field(gd, zd), 7.0)));

    const auto fg = GridSpec::cell_centered(6, 6, -1.0, 1.0);
    p.peclet = 30.0;
    p.damkohler = 1.2;
    const auto fs = rhs_to_spec("fisher", fg, p);
    CHECK(fs.degree == 2);
    bool self_quadratic = false;
    for (const auto& m : fs.sites[0].monomials) {
        if (m.factors.size() == 2 && m.factors[0] == Offset{} && m.factors[1] == Offset{}) self_quadratic = true;
    }
    CHECK(self_quadratic);
    const CVec zf = random_field(36);
    const CVec nf = fisher_rhs(make_field(fg, zf), 30.0, 1.2, VelocityField::rotational());
    CHECK(diff2(evaluate(fs, std::span<const CVec>(&zf, 1)), nf) <= 1e-12 * norm2(nf));

    const auto lin = rhs_to_spec("generic-linear", g, p);
    std::size_t couplings = 0;
    for (const auto& st : lin.sites) {
        for (const auto& m : st.monomials) couplings += m.factors.front() == Offset{} ? 0 : 1;
    }
    CHECK(couplings == 2 * 12);

    CHECK_THROWS_AS(rhs_to_spec("navier-stokes", g, p), ContractError);
}

TEST_CASE("cavity spec matches the interior vorticity transport") {
    const auto g = GridSpec::cavity(7);
    RhsParams p;
    p.reynolds = 100.0;
    const auto spec = rhs_to_spec("cavity-vorticity", g, p);
    CHECK(spec.n_fields == 2);
    const CVec om = random_field(g.size(), 1.0, true), ps = random_field(g.size(), 0.1, true);
    const std::vector<CVec> fields{om, ps};
    const CVec a = evaluate(spec, fields);
    const CVec b = cavity_rhs(make_field(g, om), make_field(g, ps), 100.0);
    for (std::size_t i = 1; i + 1 < 7; ++i) {
        for (std::size_t j = 1; j + 1 < 7; ++j) {
            const auto k = g.index(i, j);
            CHECK(std::abs(a[k] - b[k]) <= 1e-10 * (1 + std::abs(b[k])));
        }
    }
}

TEST_CASE("spec rhs wraps evaluation, jacobian and parts") {
    const auto g = GridSpec::line(10, 0.2);
    RhsParams p;
    p.reynolds = 3.0;
    const SpecRhs rhs(rhs_to_spec("burgers", g, p));
    check_jacobian(rhs, g, 20);
    const auto s = make_field(g, random_field(10));
    const auto parts = rhs.parts(s);
    const CVec f = rhs.evaluate(s);
    for (std::size_t k = 0; k < 10; ++k) {
        CHECK(std::abs(parts.diffusion[k] + parts.transport[k] + parts.reaction[k] - f[k]) <= 1e-12);
    }
}

TEST_CASE("spec validation, canonical form and text round trip") {
    const auto g = GridSpec::line(6, 1.0);
    RhsSpec spec;
    spec.grid = g;
    spec.sites.resize(6);
    for (std::size_t k = 0; k < 6; ++k) spec.sites[k].site = k;
    spec.sites[2].monomials.push_back({2.0, {{1, 0, 0}, {-1, 0, 0}}});
    spec.sites[2].monomials.push_back({Complex(0.5, 1.0), {{-1, 0, 0}, {1, 0, 0}}});
    spec.degree = 2;
    canonicalize(spec);
    REQUIRE(spec.sites[2].monomials.size() == 1);
    CHECK(spec.sites[2].monomials[0].coeff == Complex(2.5, 1.0));
    CHECK(spec.sites[2].monomials[0].factors[0] == Offset{-1, 0, 0});

    const auto back = parse_spec(serialize(spec), g);
    CHECK(back.sites[2].monomials[0].coeff == spec.sites[2].monomials[0].coeff);
    CHECK(serialize(back) == serialize(spec));

    RhsParams p;
    const auto fs = rhs_to_spec("fisher", GridSpec::cell_centered(4, 4, -1, 1), p);
    CHECK(serialize(parse_spec(serialize(fs), fs.grid)) == serialize(fs));

    auto wide = spec;
    wide.sites[0].monomials.push_back({1.0, {{2, 0, 0}}});
    CHECK_THROWS_AS(validate(wide), ContractError);
    auto deep = spec;
    deep.sites[0].monomials.push_back({1.0, {{0, 0, 0}, {0, 0, 0}, {1, 0, 0}}});
    CHECK_THROWS_AS(validate(deep), ContractError);
    auto low = spec;
    low.deriv_order = 4;
    CHECK_THROWS_AS(validate(low), ContractError);
    CHECK_THROWS_AS(parse_spec("term 0 1 0 | 0,0,0\n", g), ContractError);
}
