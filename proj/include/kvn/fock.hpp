#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "kvn/grid.hpp"
#include "kvn/rhs.hpp"

namespace kvn {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using SparseMatrix = Eigen::SparseMatrix<Complex>;

inline constexpr std::size_t kDefaultDimCap = 4096;

// Product of `n_modes` bosonic modes, each truncated to `levels` number states.
// Basis index = sum_m n_m * levels^(n_modes - 1 - m): mode 0 is most significant.
struct FockSpace {
    int n_modes = 0;
    int levels = 0;
    std::size_t total_dim = 0;
    std::vector<SparseMatrix> annihilators;  // one per mode, full dimension

    const SparseMatrix& a(int mode) const { return annihilators.at(static_cast<std::size_t>(mode)); }
    SparseMatrix identity() const;
};

// levels x levels matrix with <n-1|a|n> = sqrt(n).
Matrix single_mode_annihilator(int levels);
FockSpace build_fock(int n_modes, int levels, std::size_t dim_cap = kDefaultDimCap);

struct GeneratorMatrix {
    Matrix A;
    std::string provenance;
};

// Maps (field, grid site) to a mode; -1 marks sites without a mode.
struct SiteMap {
    std::vector<std::vector<int>> mode;  // [field][site]

    static SiteMap identity(std::size_t sites, int n_fields = 1);
    int operator()(int field, std::size_t site) const;
};

// A = sum_i sum_alpha c_alpha a_i^dagger prod_m a_{j_m}, normal ordered.
// Factors that resolve to boundary values enter as constants.
GeneratorMatrix assemble_generator(const FockSpace& space, const RhsSpec& spec,
                                   const SiteMap& site_map);

// Scaling and squaring with the degree-13 Pade approximant.
Matrix expm(const Matrix& A);
// exp(t M) v by a scaled Taylor series; M is applied only through products.
Vector expm_apply(const Matrix& M, const Vector& v, double t);

// Product coherent state, truncated per mode and renormalised.
Vector coherent_state(const FockSpace& space, std::span<const Complex> z);
// <psi|op|psi> / <psi|psi>
Complex expectation(const Vector& psi, const Matrix& op);
Complex expectation(const Vector& psi, const SparseMatrix& op);

struct ModeMoments {
    CVec mean;     // <a_m>
    RVec variance; // <a_m^dagger a_m> - |<a_m>|^2
};

ModeMoments mode_moments(const FockSpace& space, const Vector& psi);
// Moments of exp(dt M)|z> after renormalisation.
ModeMoments evolve_coherent_moments(const FockSpace& space, const Matrix& M,
                                    std::span<const Complex> z, double dt);

} // namespace kvn
