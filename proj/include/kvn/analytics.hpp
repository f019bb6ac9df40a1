#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "kvn/rhs.hpp"

namespace kvn {

// Lattice points with 0 < |offset|_1 <= radius in `dims` dimensions.
std::uint64_t stencil_size(int radius, int dims);
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);
int ceil_log2(std::uint64_t n);

struct RankReport {
    std::uint64_t lattice_size = 0;  // L
    int dims = 1;                    // d
    int deriv_order = 2;             // K
    int degree = 1;                  // r
    int radius = 1;                  // R = ceil(K / 2)
    bool self_coupling = false;
    std::uint64_t stencil_size = 0;      // S
    std::uint64_t effective_stencil = 0; // S + 1 with self-coupling
    std::uint64_t edges = 0;             // |E| = L S
    std::uint64_t rank_linear = 0;       // 2 |E|
    std::uint64_t monomials_per_site = 0;
    std::uint64_t rank_poly = 0;         // 2 L C(S_eff + r - 1, r)
    int depth = 0;                       // ceil(log2 rank_poly)
};

RankReport rank_analytics(std::uint64_t lattice_size, int dims, int deriv_order, int degree,
                          bool self_coupling = false);
RankReport rank_analytics(const RhsSpec& spec, bool self_coupling = false);

// Symmetric central weights c_{-R..R} with sum_m m^j c_m = K! [j == K]
// for the moments that symmetry leaves free. Throws ContractError when
// R < ceil(K/2).
std::vector<double> stencil_coefficients(int deriv_order, int radius);
// max_j |sum_m m^j c_m - K! [j == K]| over j = 0 .. 2R.
double moment_residual(const std::vector<double>& coeffs, int deriv_order);

} // namespace kvn
