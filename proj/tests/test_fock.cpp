#include "doctest.h"

#include <cmath>
#include <random>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "kvn/error.hpp"
#include "kvn/fock.hpp"

using namespace kvn;

namespace {

Matrix random_matrix(Eigen::Index n, std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, scale);
    Matrix M(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) M(i, j) = Complex(g(rng), g(rng));
    return M;
}

} // namespace

TEST_CASE("single mode annihilator") {
    const Matrix a = single_mode_annihilator(4);
    CHECK(a(0, 1) == Complex(1.0));
    CHECK(a(1, 2) == Complex(std::sqrt(2.0)));
    CHECK(a(2, 3) == Complex(std::sqrt(3.0)));
    CHECK(a.cwiseAbs().sum() == doctest::Approx(1.0 + std::sqrt(2.0) + std::sqrt(3.0)));
    // [a, a^dagger] = I except in the top level
    const Matrix comm = a * a.adjoint() - a.adjoint() * a;
    for (int n = 0; n < 3; ++n) CHECK(comm(n, n).real() == doctest::Approx(1.0));
    CHECK(comm(3, 3).real() == doctest::Approx(-3.0));
    CHECK_THROWS_AS(single_mode_annihilator(0), ContractError);
}

TEST_CASE("fock space layout") {
    const auto fs = build_fock(3, 3);
    CHECK(fs.total_dim == 27);
    REQUIRE(fs.annihilators.size() == 3);
    const Matrix a1 = single_mode_annihilator(3);
    const Matrix id = Matrix::Identity(3, 3);
    // mode 0 most significant
    const Matrix a0_ref = Eigen::kroneckerProduct(a1, Eigen::kroneckerProduct(id, id)).eval();
    const Matrix a2_ref = Eigen::kroneckerProduct(id, Eigen::kroneckerProduct(id, a1)).eval();
    CHECK((Matrix(fs.a(0)) - a0_ref).norm() == doctest::Approx(0.0));
    CHECK((Matrix(fs.a(2)) - a2_ref).norm() == doctest::Approx(0.0));
    // different modes commute
    const Matrix c = Matrix(fs.a(0) * fs.a(1)) - Matrix(fs.a(1) * fs.a(0));
    CHECK(c.norm() == doctest::Approx(0.0));
    CHECK(Matrix(fs.identity()).isIdentity());

    CHECK_THROWS_AS(build_fock(0, 3), ContractError);
    CHECK_THROWS_AS(build_fock(2, 1), ContractError);
    CHECK_THROWS_AS(build_fock(7, 4), ContractError);
    CHECK(build_fock(6, 4).total_dim == 4096);
    CHECK_NOTHROW(build_fock(7, 4, 1 << 14));
}

TEST_CASE("expm against reference") {
    for (double scale : {1e-3, 0.3, 3.0, 20.0}) {
        CAPTURE(scale);
        const Matrix M = random_matrix(12, 5, scale);
        const Matrix ref = M.exp();
        const Matrix got = expm(M);
        CHECK((got - ref).norm() / ref.norm() < 1e-11);
    }
    CHECK(expm(Matrix::Zero(5, 5)).isIdentity(1e-15));
    // exp(A) exp(-A) = I
    const Matrix A = random_matrix(8, 9, 1.0);
    CHECK((expm(A) * expm(-A)).isIdentity(1e-11));
    // commuting diagonal
    Matrix D = Matrix::Zero(3, 3);
    D(0, 0) = 1.0;
    D(1, 1) = Complex(0.0, 2.0);
    D(2, 2) = -3.0;
    const Matrix eD = expm(D);
    CHECK(std::abs(eD(0, 0) - std::exp(1.0)) < 1e-13);
    CHECK(std::abs(eD(1, 1) - std::exp(Complex(0.0, 2.0))) < 1e-13);
    CHECK(std::abs(eD(2, 2) - std::exp(-3.0)) < 1e-13);
    CHECK_THROWS_AS(expm(Matrix::Zero(2, 3)), ContractError);
}

TEST_CASE("expm_apply matches expm") {
    const Matrix M = random_matrix(20, 11, 2.0);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    Vector v(20);
    for (auto& x : v) x = Complex(g(rng), g(rng));
    for (double t : {0.01, 0.5, -1.3}) {
        const Vector ref = (M * t).exp() * v;
        CHECK((expm_apply(M, v, t) - ref).norm() / ref.norm() < 1e-11);
    }
    CHECK_THROWS_AS(expm_apply(M, Vector::Zero(3), 1.0), ContractError);
}

TEST_CASE("coherent state moments") {
    const auto fs = build_fock(2, 12);
    const CVec z{Complex(0.3, -0.2), Complex(-0.5, 0.1)};
    const Vector psi = coherent_state(fs, z);
    CHECK(psi.norm() == doctest::Approx(1.0));
    const auto mm = mode_moments(fs, psi);
    for (int m = 0; m < 2; ++m) {
        CHECK(std::abs(mm.mean[static_cast<std::size_t>(m)] - z[static_cast<std::size_t>(m)]) < 1e-9);
        CHECK(std::abs(mm.variance[static_cast<std::size_t>(m)]) < 1e-9);
    }
    CHECK(std::abs(expectation(psi, fs.a(1)) - z[1]) < 1e-9);
    const Vector vac = coherent_state(fs, CVec(2));
    CHECK(std::abs(vac(0)) == doctest::Approx(1.0));
    CHECK_THROWS_AS(coherent_state(fs, CVec(3)), ContractError);
    CHECK_THROWS_AS(mode_moments(fs, Vector::Zero(4)), ContractError);
}

TEST_CASE("linear generator moves coherent means along the linear flow") {
    const std::size_t L = 3;
    const auto g = GridSpec::line(L, 1.0);
    RhsParams p;
    p.kappa = 0.7;
    const auto spec = rhs_to_spec("generic-linear", g, p);
    const auto fs = build_fock(static_cast<int>(L), 8);
    const auto gen = assemble_generator(fs, spec, SiteMap::identity(L));
    CHECK(gen.A.rows() == 512);
    CHECK(!gen.provenance.empty());

    // circulant Laplacian on three sites
    Eigen::Matrix3cd lap;
    lap << -2, 1, 1, 1, -2, 1, 1, 1, -2;
    lap *= 0.7;
    const CVec z{Complex(0.2, 0.0), Complex(-0.1, 0.05), Complex(0.0, 0.15)};
    const double dt = 0.3;
    const Eigen::Vector3cd ref = (lap * dt).exp() * Eigen::Vector3cd(z[0], z[1], z[2]);
    const auto mm = evolve_coherent_moments(fs, gen.A, z, dt);
    for (std::size_t k = 0; k < L; ++k) {
        CHECK(std::abs(mm.mean[k] - ref(static_cast<Eigen::Index>(k))) < 1e-8);
        CHECK(std::abs(mm.variance[k]) < 1e-8);
    }
}

TEST_CASE("generator reproduces the field equation on coherent states") {
    // <z| A |z> = sum_i conj(z_i) F_i(z) for a normal-ordered A
    const std::size_t L = 3;
    const auto g = GridSpec::line(L, 1.0 / 3.0);
    const auto spec = rhs_to_spec("burgers", g, {});
    const auto fs = build_fock(static_cast<int>(L), 10);
    const auto gen = assemble_generator(fs, spec, SiteMap::identity(L));
    const CVec z{Complex(0.1, 0.02), Complex(-0.05, 0.0), Complex(0.08, -0.03)};
    const Vector psi = coherent_state(fs, z);
    const CVec fields[] = {z};
    const CVec F = evaluate(spec, fields);
    Complex sigma{};
    for (std::size_t k = 0; k < L; ++k) sigma += std::conj(z[k]) * F[k];
    CHECK(std::abs(expectation(psi, gen.A) - sigma) < 1e-9);
}

TEST_CASE("dirichlet ghosts enter the generator as constants") {
    const auto g = GridSpec::line(3, 1.0, 0.0, Boundary::dirichlet(Complex(0.5)));
    RhsParams p;
    p.kappa = 1.0;
    const auto spec = rhs_to_spec("generic-linear", g, p);
    const auto fs = build_fock(3, 6);
    const auto gen = assemble_generator(fs, spec, SiteMap::identity(3));
    const CVec z{Complex(0.1), Complex(-0.2), Complex(0.05, 0.1)};
    const Vector psi = coherent_state(fs, z);
    const CVec fields[] = {z};
    const CVec F = evaluate(spec, fields);
    Complex sigma{};
    for (std::size_t k = 0; k < 3; ++k) sigma += std::conj(z[k]) * F[k];
    CHECK(std::abs(expectation(psi, gen.A) - sigma) < 1e-9);
}

TEST_CASE("site map errors") {
    const auto g = GridSpec::line(4, 1.0);
    const auto spec = rhs_to_spec("generic-linear", g, {});
    const auto fs = build_fock(2, 3);
    CHECK_THROWS_AS(assemble_generator(fs, spec, SiteMap::identity(4)), ContractError);
    SiteMap partial;
    partial.mode = {{0, 1, -1, -1}};
    CHECK_THROWS_AS(assemble_generator(fs, spec, partial), ContractError);
    CHECK(partial(0, 3) == -1);
    CHECK(partial(1, 0) == -1);
    CHECK(partial(0, 1) == 1);
}
