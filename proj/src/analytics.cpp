#include "kvn/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include <Eigen/Dense>

#include "kvn/error.hpp"

namespace kvn {

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

std::uint64_t stencil_size(int radius, int dims) {
    if (radius < 0 || dims < 1) throw ContractError("stencil size: need R >= 0 and d >= 1");
    // |{x in Z^d : |x|_1 <= R}| = sum_k 2^k C(d, k) C(R, k)
    std::uint64_t ball = 0;
    for (int k = 0; k <= std::min(dims, radius); ++k) {
        ball += (std::uint64_t{1} << k) * binomial(static_cast<std::uint64_t>(dims), k) *
                binomial(static_cast<std::uint64_t>(radius), k);
    }
    return ball - 1;
}

int ceil_log2(std::uint64_t n) {
    int d = 0;
    while ((std::uint64_t{1} << d) < n) ++d;
    return d;
}

RankReport rank_analytics(std::uint64_t lattice_size, int dims, int deriv_order, int degree,
                          bool self_coupling) {
    if (lattice_size < 1) throw ContractError("rank analytics: L must be >= 1");
    if (dims < 1 || dims > 3) throw ContractError("rank analytics: d must be 1, 2 or 3");
    if (deriv_order < 1) throw ContractError("rank analytics: K must be >= 1");
    if (degree < 1) throw ContractError("rank analytics: r must be >= 1");
    RankReport r;
    r.lattice_size = lattice_size;
    r.dims = dims;
    r.deriv_order = deriv_order;
    r.degree = degree;
    r.radius = (deriv_order + 1) / 2;
    r.self_coupling = self_coupling;
    r.stencil_size = stencil_size(r.radius, dims);
    r.effective_stencil = r.stencil_size + (self_coupling ? 1 : 0);
    r.edges = lattice_size * r.stencil_size;
    r.rank_linear = 2 * r.edges;
    r.monomials_per_site =
        binomial(r.effective_stencil + static_cast<std::uint64_t>(degree) - 1,
                 static_cast<std::uint64_t>(degree));
    r.rank_poly = 2 * lattice_size * r.monomials_per_site;
    r.depth = ceil_log2(r.rank_poly);
    return r;
}

RankReport rank_analytics(const RhsSpec& spec, bool self_coupling) {
    return rank_analytics(spec.grid.size(), spec.dims, spec.deriv_order, spec.degree,
                          self_coupling);
}

std::vector<double> stencil_coefficients(int K, int R) {
    if (K < 1) throw ContractError("stencil: K must be >= 1");
    if (R < (K + 1) / 2) {
        throw ContractError("stencil: infeasible, radius " + std::to_string(R) +
                            " below ceil(K/2) = " + std::to_string((K + 1) / 2));
    }
    double fact = 1.0;
    for (int i = 2; i <= K; ++i) fact *= i;
    const bool even = K % 2 == 0;
    // Unknowns c_0..c_R (even) or c_1..c_R (odd); the mirror half follows by symmetry.
    const int first = even ? 0 : 1;
    const int n = R - first + 1;
    Eigen::MatrixXd M(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (int row = 0; row < n; ++row) {
        const int j = even ? 2 * row : 2 * row + 1;
        for (int col = 0; col < n; ++col) {
            const int m = first + col;
            M(row, col) = m == 0 ? (j == 0 ? 1.0 : 0.0) : 2.0 * std::pow(m, j);
        }
        if (j == K) rhs(row) = fact;
    }
    const Eigen::VectorXd c = M.fullPivLu().solve(rhs);
    std::vector<double> out(static_cast<std::size_t>(2 * R + 1), 0.0);
    for (int col = 0; col < n; ++col) {
        const int m = first + col;
        out[static_cast<std::size_t>(R + m)] = c(col);
        out[static_cast<std::size_t>(R - m)] = even ? c(col) : -c(col);
    }
    return out;
}

double moment_residual(const std::vector<double>& c, int K) {
    if (c.size() % 2 == 0) throw ContractError("moment residual: need 2R + 1 weights");
    const int R = static_cast<int>(c.size() / 2);
    double fact = 1.0;
    for (int i = 2; i <= K; ++i) fact *= i;
    double worst = 0.0;
    for (int j = 0; j <= 2 * R; ++j) {
        double s = 0.0;
        for (int m = -R; m <= R; ++m) s += std::pow(m, j) * c[static_cast<std::size_t>(m + R)];
        worst = std::max(worst, std::abs(s - (j == K ? fact : 0.0)));
    }
    return worst;
}

} // namespace kvn
