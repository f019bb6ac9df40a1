#pragma once

#include <compare>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kvn/grid.hpp"

namespace kvn {

// Per-point contributions of a right-hand side, split by physical role.
// Absent parts are left empty.
struct RhsParts {
    CVec diffusion;
    CVec transport;  // convection (Burgers) or advection (Fisher, cavity)
    CVec reaction;   // includes the photon-loss drift when present
};

// Semi-discrete polynomial right-hand side F(z) on a grid.
class Rhs {
public:
    virtual ~Rhs() = default;

    virtual CVec evaluate(const FieldState& state) const = 0;
    // sum_j dF_k/dz_j (z) w_j
    virtual CVec jacobian_apply(const FieldState& state, std::span<const Complex> w) const = 0;
    virtual RhsParts parts(const FieldState& state) const = 0;
    virtual std::string name() const = 0;
};

using RhsPtr = std::shared_ptr<const Rhs>;

// F_k = (z_{k+1} - 2 z_k + z_{k-1}) / (Re dx^2) - z_k (z_{k+1} - z_{k-1}) / (2 dx)
class BurgersRhs final : public Rhs {
public:
    explicit BurgersRhs(double reynolds);
    CVec evaluate(const FieldState& state) const override;
    CVec jacobian_apply(const FieldState& state, std::span<const Complex> w) const override;
    RhsParts parts(const FieldState& state) const override;
    std::string name() const override { return "burgers"; }
    double reynolds() const noexcept { return re_; }

private:
    double re_;
};

// Advection by `velocity`, diffusion 1/Pe and reaction Da (z - z^2) on a 2D grid.
// With the rotational field the advection weights are y_j / r(x_{i+-1}, y_j)
// and x_i / r(x_i, y_{j+-1}), evaluated at the neighbouring point.
class FisherRhs final : public Rhs {
public:
    FisherRhs(double peclet, double damkohler, VelocityField velocity);
    CVec evaluate(const FieldState& state) const override;
    CVec jacobian_apply(const FieldState& state, std::span<const Complex> w) const override;
    RhsParts parts(const FieldState& state) const override;
    std::string name() const override { return "fisher"; }

    double peclet() const noexcept { return pe_; }
    double damkohler() const noexcept { return da_; }
    const VelocityField& velocity() const noexcept { return vel_; }

private:
    double pe_, da_;
    VelocityField vel_;
};

// kappa * (discrete Laplacian), the generic linear nearest-neighbour RHS.
class DiffusionRhs final : public Rhs {
public:
    explicit DiffusionRhs(double kappa);
    CVec evaluate(const FieldState& state) const override;
    CVec jacobian_apply(const FieldState& state, std::span<const Complex> w) const override;
    RhsParts parts(const FieldState& state) const override;
    std::string name() const override { return "diffusion"; }

private:
    double kappa_;
};

// Vorticity transport with the stream function held fixed. Affine in omega:
// the wall vorticity is a function of psi only.
class CavityVorticityRhs final : public Rhs {
public:
    CavityVorticityRhs(FieldState psi, double reynolds);
    CVec evaluate(const FieldState& omega) const override;
    CVec jacobian_apply(const FieldState& omega, std::span<const Complex> w) const override;
    RhsParts parts(const FieldState& omega) const override;
    std::string name() const override { return "cavity-vorticity"; }

    void set_psi(FieldState psi);
    const FieldState& psi() const noexcept { return psi_; }

private:
    FieldState psi_;
    double re_;
};

// Builtin shorthands mirroring the classes above.
CVec burgers_rhs(const FieldState& state, double reynolds);
CVec fisher_rhs(const FieldState& state, double peclet, double damkohler,
                const VelocityField& velocity);
CVec cavity_rhs(const FieldState& omega, const FieldState& psi, double reynolds);
// Discrete laplacian(psi) + omega, psi read as zero outside cavity walls.
CVec streamfunction_rhs(const FieldState& psi, const FieldState& omega);
CVec jacobian_apply(const Rhs& rhs, const FieldState& state, std::span<const Complex> w);

// Wall vorticity from the stream function (first-order Thom closure):
// omega_wall = -2 psi_adjacent / h^2, with an extra -2 U / h on the lid (y = 1).
// Returned in the order (left, right, bottom, top), each of length n.
struct WallVorticity {
    RVec left, right, bottom, top;
};
WallVorticity wall_vorticity(const FieldState& psi);

struct SigmaBreakdown {
    Complex total{};
    Complex diffusion{};
    Complex transport{};
    Complex reaction{};
};

// Sigma = sum_k conj(z_k) F_k, with the same overlap taken against each labelled part.
SigmaBreakdown sigma(const FieldState& state, std::span<const Complex> f,
                     const RhsParts& parts);
SigmaBreakdown sigma(const FieldState& state, const Rhs& rhs);

// ---------------------------------------------------------------------------
// Symbolic polynomial stencils.

struct Offset {
    int dx = 0;
    int dy = 0;
    int field = 0;
    auto operator<=>(const Offset&) const = default;
    int manhattan() const { return (dx < 0 ? -dx : dx) + (dy < 0 ? -dy : dy); }
};

struct Monomial {
    Complex coeff;
    std::vector<Offset> factors;  // sorted lexicographically
};

struct SiteTerms {
    std::size_t site = 0;
    int out_field = 0;
    std::vector<Monomial> monomials;
};

// Normal-ordered monomial description of F: for every output site i,
// F_i = sum_alpha c_alpha prod_m z_{i + offset_m}. Factor offsets resolve
// through the grid's boundary rule, so ghost values enter as constants.
struct RhsSpec {
    std::string name;
    GridSpec grid;
    int n_fields = 1;
    int degree = 1;       // r
    int deriv_order = 2;  // K
    int radius = 1;       // R
    int dims = 1;         // d
    std::vector<SiteTerms> sites;

    std::size_t monomial_count() const;
};

struct RhsParams {
    double reynolds = 1.0;
    double peclet = 1.0;
    double damkohler = 0.0;
    double kappa = 1.0;
    VelocityField velocity = VelocityField::rotational();
    // generic-poly only
    int deriv_order = 2;
    int degree = 1;
    bool self_coupling = false;
};

// Builtins: burgers, fisher, cavity-vorticity (fields: 0 = omega, 1 = psi),
// generic-linear, generic-poly.
RhsSpec rhs_to_spec(const std::string& builtin, const GridSpec& grid,
                    const RhsParams& params = {});

// Sorts factor offsets, merges identical monomials and drops zero coefficients.
void canonicalize(RhsSpec& spec);
void validate(const RhsSpec& spec);

// F evaluated site by site; `fields` holds one amplitude vector per field.
CVec evaluate(const RhsSpec& spec, std::span<const CVec> fields);
CVec jacobian_apply(const RhsSpec& spec, std::span<const CVec> fields,
                    std::span<const Complex> w);

// Single-field spec wrapped as an Rhs (everything lands in the diffusion part).
class SpecRhs final : public Rhs {
public:
    explicit SpecRhs(RhsSpec spec);
    CVec evaluate(const FieldState& state) const override;
    CVec jacobian_apply(const FieldState& state, std::span<const Complex> w) const override;
    RhsParts parts(const FieldState& state) const override;
    std::string name() const override { return spec_.name; }
    const RhsSpec& spec() const noexcept { return spec_; }

private:
    RhsSpec spec_;
};

// Text form: one monomial per line,
//   term <site> <out_field> <re> <im> | <dx>,<dy>,<field> ...
std::string serialize(const RhsSpec& spec);
RhsSpec parse_spec(const std::string& text, const GridSpec& grid);

} // namespace kvn
