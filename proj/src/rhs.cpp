#include "kvn/rhs.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "kvn/csv.hpp"
#include "kvn/error.hpp"

namespace kvn {

namespace {

Complex at(const GridSpec& g, std::span<const Complex> z, std::size_t k, int ox, int oy) {
    return value_of(neighbor(g, k, ox, oy), z);
}

// Linearised lookup: boundary values are constants, so their derivative is zero.
Complex at_lin(const GridSpec& g, std::span<const Complex> w, std::size_t k, int ox, int oy) {
    const Neighbor n = neighbor(g, k, ox, oy);
    return n.inside ? w[n.index] : Complex{};
}

void require_dims(const GridSpec& g, int dims, const char* who) {
    if (g.dims() != dims) {
        throw ContractError(std::string(who) + ": requires a " + std::to_string(dims) +
                            "D grid");
    }
}

void require_length(std::size_t got, std::size_t want, const char* who) {
    if (got != want) {
        throw ContractError(std::string(who) + ": length mismatch (" + std::to_string(got) +
                            " vs " + std::to_string(want) + ")");
    }
}

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ContractError(std::string(what) + " must be positive and finite");
    }
}

// Coordinate of the neighbour along one axis; ghosts extrapolate linearly.
double neighbor_coord(const GridSpec& g, std::size_t k, int axis, int offset) {
    const Neighbor n = neighbor_along(g, k, axis, offset);
    if (n.inside) return axis == 0 ? g.x(n.index) : g.y(n.index);
    return (axis == 0 ? g.x(k) : g.y(k)) + offset * g.spacing(axis);
}

// Advection weights for (x+1, x-1, y+1, y-1) neighbours.
std::array<double, 4> advection_weights(const GridSpec& g, const VelocityField& vel,
                                        std::size_t k) {
    const double dx = g.spacing(0), dy = g.spacing(1);
    if (vel.is_rotational()) {
        const double x = g.x(k), y = g.y(k);
        return {
            y / (2 * dx) * inverse_radius(neighbor_coord(g, k, 0, +1), y),
            -y / (2 * dx) * inverse_radius(neighbor_coord(g, k, 0, -1), y),
            -x / (2 * dy) * inverse_radius(x, neighbor_coord(g, k, 1, +1)),
            x / (2 * dy) * inverse_radius(x, neighbor_coord(g, k, 1, -1)),
        };
    }
    const auto v = vel.at(g, k);
    return {-v[0] / (2 * dx), v[0] / (2 * dx), -v[1] / (2 * dy), v[1] / (2 * dy)};
}

template <class Lookup>
Complex laplacian(const GridSpec& g, std::size_t k, Complex center, Lookup&& nb) {
    const double dx2 = g.spacing(0) * g.spacing(0);
    Complex lap = (nb(k, 1, 0) - 2.0 * center + nb(k, -1, 0)) / dx2;
    if (g.dims() == 2) {
        const double dy2 = g.spacing(1) * g.spacing(1);
        lap += (nb(k, 0, 1) - 2.0 * center + nb(k, 0, -1)) / dy2;
    }
    return lap;
}

CVec add(const CVec& a, const CVec& b) {
    CVec out(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] + b[k];
    return out;
}

} // namespace

// --- Burgers ---------------------------------------------------------------

BurgersRhs::BurgersRhs(double reynolds) : re_(reynolds) { require_positive(re_, "Re"); }

RhsParts BurgersRhs::parts(const FieldState& s) const {
    require_dims(s.grid, 1, "burgers_rhs");
    require_length(s.z.size(), s.grid.size(), "burgers_rhs");
    const auto& g = s.grid;
    const double dx = g.spacing(0);
    const double cd = 1.0 / (re_ * dx * dx);
    const double cc = 1.0 / (2.0 * dx);
    RhsParts p;
    p.diffusion.resize(g.size());
    p.transport.resize(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        const Complex zp = at(g, s.z, k, 1, 0), zm = at(g, s.z, k, -1, 0), zk = s.z[k];
        p.diffusion[k] = (zp - 2.0 * zk + zm) * cd;
        p.transport[k] = -zk * (zp - zm) * cc;
    }
    return p;
}

CVec BurgersRhs::evaluate(const FieldState& s) const {
    const RhsParts p = parts(s);
    return add(p.diffusion, p.transport);
}

CVec BurgersRhs::jacobian_apply(const FieldState& s, std::span<const Complex> w) const {
    require_dims(s.grid, 1, "burgers jacobian");
    require_length(w.size(), s.grid.size(), "burgers jacobian");
    const auto& g = s.grid;
    const double dx = g.spacing(0);
    const double cd = 1.0 / (re_ * dx * dx);
    const double cc = 1.0 / (2.0 * dx);
    CVec out(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        const Complex zp = at(g, s.z, k, 1, 0), zm = at(g, s.z, k, -1, 0);
        const Complex wp = at_lin(g, w, k, 1, 0), wm = at_lin(g, w, k, -1, 0);
        out[k] = (wp - 2.0 * w[k] + wm) * cd - (w[k] * (zp - zm) + s.z[k] * (wp - wm)) * cc;
    }
    return out;
}

CVec burgers_rhs(const FieldState& state, double reynolds) {
    return BurgersRhs(reynolds).evaluate(state);
}

// --- Fisher-KPP ------------------------------------------------------------

FisherRhs::FisherRhs(double peclet, double damkohler, VelocityField velocity)
    : pe_(peclet), da_(damkohler), vel_(std::move(velocity)) {
    require_positive(pe_, "Pe");
    if (!std::isfinite(da_)) throw ContractError("Da must be finite");
}

RhsParts FisherRhs::parts(const FieldState& s) const {
    require_dims(s.grid, 2, "fisher_rhs");
    require_length(s.z.size(), s.grid.size(), "fisher_rhs");
    const auto& g = s.grid;
    auto nb = [&](std::size_t k, int ox, int oy) { return at(g, s.z, k, ox, oy); };
    RhsParts p;
    p.diffusion.resize(g.size());
    p.transport.resize(g.size());
    p.reaction.resize(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        const auto w = advection_weights(g, vel_, k);
        p.transport[k] = w[0] * nb(k, 1, 0) + w[1] * nb(k, -1, 0) + w[2] * nb(k, 0, 1) +
                         w[3] * nb(k, 0, -1);
        p.diffusion[k] = laplacian(g, k, s.z[k], nb) / pe_;
        p.reaction[k] = da_ * (s.z[k] - s.z[k] * s.z[k]);
    }
    return p;
}

CVec FisherRhs::evaluate(const FieldState& s) const {
    const RhsParts p = parts(s);
    CVec out(p.diffusion.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = p.transport[k] + p.diffusion[k] + p.reaction[k];
    }
    return out;
}

CVec FisherRhs::jacobian_apply(const FieldState& s, std::span<const Complex> w) const {
    require_dims(s.grid, 2, "fisher jacobian");
    require_length(w.size(), s.grid.size(), "fisher jacobian");
    const auto& g = s.grid;
    auto nb = [&](std::size_t k, int ox, int oy) { return at_lin(g, w, k, ox, oy); };
    CVec out(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        const auto a = advection_weights(g, vel_, k);
        out[k] = a[0] * nb(k, 1, 0) + a[1] * nb(k, -1, 0) + a[2] * nb(k, 0, 1) +
                 a[3] * nb(k, 0, -1) + laplacian(g, k, w[k], nb) / pe_ +
                 da_ * (1.0 - 2.0 * s.z[k]) * w[k];
    }
    return out;
}

CVec fisher_rhs(const FieldState& state, double peclet, double damkohler,
                const VelocityField& velocity) {
    return FisherRhs(peclet, damkohler, velocity).evaluate(state);
}

// --- Linear diffusion ------------------------------------------------------

DiffusionRhs::DiffusionRhs(double kappa) : kappa_(kappa) {
    if (!std::isfinite(kappa_)) throw ContractError("kappa must be finite");
}

RhsParts DiffusionRhs::parts(const FieldState& s) const {
    require_length(s.z.size(), s.grid.size(), "diffusion rhs");
    const auto& g = s.grid;
    auto nb = [&](std::size_t k, int ox, int oy) { return at(g, s.z, k, ox, oy); };
    RhsParts p;
    p.diffusion.resize(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        p.diffusion[k] = kappa_ * laplacian(g, k, s.z[k], nb);
    }
    return p;
}

CVec DiffusionRhs::evaluate(const FieldState& s) const { return parts(s).diffusion; }

CVec DiffusionRhs::jacobian_apply(const FieldState& s, std::span<const Complex> w) const {
    require_length(w.size(), s.grid.size(), "diffusion jacobian");
    const auto& g = s.grid;
    auto nb = [&](std::size_t k, int ox, int oy) { return at_lin(g, w, k, ox, oy); };
    CVec out(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) out[k] = kappa_ * laplacian(g, k, w[k], nb);
    return out;
}

// --- Lid-driven cavity -----------------------------------------------------

namespace {

void require_cavity_pair(const FieldState& a, const FieldState& b, const char* who) {
    if (!(a.grid == b.grid)) throw ContractError(std::string(who) + ": grid mismatch");
    require_length(a.z.size(), a.grid.size(), who);
    require_length(b.z.size(), b.grid.size(), who);
}

// (nx + 2) x (ny + 2) padded copy of the real parts; border filled by `border`.
struct Padded {
    std::size_t nx, ny;
    RVec v;
    double& operator()(long i, long j) {
        return v[static_cast<std::size_t>((i + 1) * static_cast<long>(ny + 2) + (j + 1))];
    }
    double operator()(long i, long j) const {
        return v[static_cast<std::size_t>((i + 1) * static_cast<long>(ny + 2) + (j + 1))];
    }
};

Padded pad(const GridSpec& g, std::span<const Complex> z) {
    Padded p{g.extent(0), g.extent(1), RVec((g.extent(0) + 2) * (g.extent(1) + 2), 0.0)};
    for (std::size_t i = 0; i < p.nx; ++i) {
        for (std::size_t j = 0; j < p.ny; ++j) {
            p(static_cast<long>(i), static_cast<long>(j)) = z[g.index(i, j)].real();
        }
    }
    return p;
}

void set_walls(Padded& p, const WallVorticity& w) {
    const long nx = static_cast<long>(p.nx), ny = static_cast<long>(p.ny);
    for (long j = 0; j < ny; ++j) {
        p(-1, j) = w.left[static_cast<std::size_t>(j)];
        p(nx, j) = w.right[static_cast<std::size_t>(j)];
    }
    for (long i = 0; i < nx; ++i) {
        p(i, -1) = w.bottom[static_cast<std::size_t>(i)];
        p(i, ny) = w.top[static_cast<std::size_t>(i)];
    }
}

} // namespace

WallVorticity wall_vorticity(const FieldState& psi) {
    const auto& g = psi.grid;
    if (g.boundary().kind != BoundaryKind::CavityWalls) {
        throw ContractError("wall_vorticity: grid has no cavity walls");
    }
    const std::size_t nx = g.extent(0), ny = g.extent(1);
    const double hx = g.spacing(0), hy = g.spacing(1);
    const double lid = g.boundary().lid_velocity;
    WallVorticity w{RVec(ny), RVec(ny), RVec(nx), RVec(nx)};
    for (std::size_t j = 0; j < ny; ++j) {
        w.left[j] = -2.0 * psi.z[g.index(0, j)].real() / (hx * hx);
        w.right[j] = -2.0 * psi.z[g.index(nx - 1, j)].real() / (hx * hx);
    }
    for (std::size_t i = 0; i < nx; ++i) {
        w.bottom[i] = -2.0 * psi.z[g.index(i, 0)].real() / (hy * hy);
        w.top[i] = -2.0 * psi.z[g.index(i, ny - 1)].real() / (hy * hy) - 2.0 * lid / hy;
    }
    return w;
}

CavityVorticityRhs::CavityVorticityRhs(FieldState psi, double reynolds)
    : psi_(std::move(psi)), re_(reynolds) {
    require_positive(re_, "Re");
    if (psi_.grid.boundary().kind != BoundaryKind::CavityWalls) {
        throw ContractError("cavity_rhs: grid must use CavityWalls");
    }
}

void CavityVorticityRhs::set_psi(FieldState psi) {
    if (!(psi.grid == psi_.grid)) throw ContractError("cavity_rhs: grid mismatch");
    psi_ = std::move(psi);
}

namespace {

// Shared kernel: `wall` selects physical wall vorticity (true) or zero (linearised).
void cavity_kernel(const FieldState& psi, std::span<const Complex> omega, double re,
                   bool wall, CVec* transport, CVec* diffusion) {
    const auto& g = psi.grid;
    const std::size_t nx = g.extent(0), ny = g.extent(1);
    const double hx = g.spacing(0), hy = g.spacing(1);
    const Padded ps = pad(g, psi.z);
    Padded om = pad(g, omega);
    if (wall) set_walls(om, wall_vorticity(psi));
    for (std::size_t ui = 0; ui < nx; ++ui) {
        for (std::size_t uj = 0; uj < ny; ++uj) {
            const long i = static_cast<long>(ui), j = static_cast<long>(uj);
            const double psi_x = (ps(i + 1, j) - ps(i - 1, j)) / (2 * hx);
            const double psi_y = (ps(i, j + 1) - ps(i, j - 1)) / (2 * hy);
            const double om_x = (om(i + 1, j) - om(i - 1, j)) / (2 * hx);
            const double om_y = (om(i, j + 1) - om(i, j - 1)) / (2 * hy);
            const double lap = (om(i + 1, j) - 2 * om(i, j) + om(i - 1, j)) / (hx * hx) +
                               (om(i, j + 1) - 2 * om(i, j) + om(i, j - 1)) / (hy * hy);
            const std::size_t k = g.index(ui, uj);
            (*transport)[k] = -psi_y * om_x + psi_x * om_y;
            (*diffusion)[k] = lap / re;
        }
    }
}

} // namespace

RhsParts CavityVorticityRhs::parts(const FieldState& omega) const {
    require_cavity_pair(omega, psi_, "cavity_rhs");
    RhsParts p;
    p.transport.resize(omega.grid.size());
    p.diffusion.resize(omega.grid.size());
    cavity_kernel(psi_, omega.z, re_, true, &p.transport, &p.diffusion);
    return p;
}

CVec CavityVorticityRhs::evaluate(const FieldState& omega) const {
    const RhsParts p = parts(omega);
    return add(p.transport, p.diffusion);
}

CVec CavityVorticityRhs::jacobian_apply(const FieldState& omega,
                                        std::span<const Complex> w) const {
    require_cavity_pair(omega, psi_, "cavity jacobian");
    require_length(w.size(), omega.grid.size(), "cavity jacobian");
    CVec tr(w.size()), df(w.size());
    cavity_kernel(psi_, w, re_, false, &tr, &df);
    return add(tr, df);
}

CVec cavity_rhs(const FieldState& omega, const FieldState& psi, double reynolds) {
    if (!(omega.grid == psi.grid)) throw ContractError("cavity_rhs: grid mismatch");
    return CavityVorticityRhs(psi, reynolds).evaluate(omega);
}

CVec streamfunction_rhs(const FieldState& psi, const FieldState& omega) {
    if (!(psi.grid == omega.grid)) throw ContractError("streamfunction_rhs: grid mismatch");
    require_length(psi.z.size(), psi.grid.size(), "streamfunction_rhs");
    require_length(omega.z.size(), omega.grid.size(), "streamfunction_rhs");
    const auto& g = psi.grid;
    auto nb = [&](std::size_t k, int ox, int oy) { return at(g, psi.z, k, ox, oy); };
    CVec out(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        out[k] = laplacian(g, k, psi.z[k], nb) + omega.z[k];
    }
    return out;
}

CVec jacobian_apply(const Rhs& rhs, const FieldState& state, std::span<const Complex> w) {
    require_length(w.size(), state.z.size(), "jacobian_apply");
    return rhs.jacobian_apply(state, w);
}

// --- Sigma -----------------------------------------------------------------

SigmaBreakdown sigma(const FieldState& s, std::span<const Complex> f, const RhsParts& parts) {
    require_length(f.size(), s.z.size(), "sigma");
    auto overlap = [&](std::span<const Complex> v) {
        if (v.empty()) return Complex{};
        require_length(v.size(), s.z.size(), "sigma part");
        Complex acc{};
        for (std::size_t k = 0; k < v.size(); ++k) acc += std::conj(s.z[k]) * v[k];
        return acc;
    };
    return {overlap(f), overlap(parts.diffusion), overlap(parts.transport),
            overlap(parts.reaction)};
}

SigmaBreakdown sigma(const FieldState& state, const Rhs& rhs) {
    return sigma(state, rhs.evaluate(state), rhs.parts(state));
}

// --- Symbolic specs --------------------------------------------------------

std::size_t RhsSpec::monomial_count() const {
    std::size_t n = 0;
    for (const auto& s : sites) n += s.monomials.size();
    return n;
}

namespace {

void push(SiteTerms& st, Complex c, std::vector<Offset> f) {
    st.monomials.push_back({c, std::move(f)});
}

// Manhattan ball of radius R in d dimensions, lexicographic order.
std::vector<Offset> manhattan_ball(int radius, int dims, bool include_center) {
    std::vector<Offset> out;
    for (int dx = -radius; dx <= radius; ++dx) {
        for (int dy = -radius; dy <= radius; ++dy) {
            if (dims == 1 && dy != 0) continue;
            const Offset o{dx, dy, 0};
            if (o.manhattan() > radius) continue;
            if (!include_center && dx == 0 && dy == 0) continue;
            out.push_back(o);
        }
    }
    return out;
}

} // namespace

RhsSpec rhs_to_spec(const std::string& builtin, const GridSpec& grid, const RhsParams& p) {
    RhsSpec spec;
    spec.name = builtin;
    spec.grid = grid;
    spec.dims = grid.dims();
    spec.sites.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) spec.sites[k].site = k;
    const double dx = grid.spacing(0), dy = grid.spacing(1);

    if (builtin == "burgers") {
        require_dims(grid, 1, "rhs_to_spec(burgers)");
        require_positive(p.reynolds, "Re");
        const double cd = 1.0 / (p.reynolds * dx * dx), cc = 1.0 / (2.0 * dx);
        for (auto& st : spec.sites) {
            push(st, cd, {{-1, 0, 0}});
            push(st, -2.0 * cd, {{0, 0, 0}});
            push(st, cd, {{1, 0, 0}});
            push(st, -cc, {{0, 0, 0}, {1, 0, 0}});
            push(st, cc, {{-1, 0, 0}, {0, 0, 0}});
        }
        spec.degree = 2;
        spec.deriv_order = 2;
        spec.radius = 1;
    } else if (builtin == "fisher") {
        require_dims(grid, 2, "rhs_to_spec(fisher)");
        require_positive(p.peclet, "Pe");
        for (auto& st : spec.sites) {
            const auto w = advection_weights(grid, p.velocity, st.site);
            push(st, w[0], {{1, 0, 0}});
            push(st, w[1], {{-1, 0, 0}});
            push(st, w[2], {{0, 1, 0}});
            push(st, w[3], {{0, -1, 0}});
            const double cx = 1.0 / (p.peclet * dx * dx), cy = 1.0 / (p.peclet * dy * dy);
            push(st, cx, {{1, 0, 0}});
            push(st, cx, {{-1, 0, 0}});
            push(st, cy, {{0, 1, 0}});
            push(st, cy, {{0, -1, 0}});
            push(st, -2.0 * (cx + cy) + p.damkohler, {{0, 0, 0}});
            push(st, -p.damkohler, {{0, 0, 0}, {0, 0, 0}});
        }
        spec.degree = 2;
        spec.deriv_order = 2;
        spec.radius = 1;
    } else if (builtin == "cavity-vorticity") {
        require_dims(grid, 2, "rhs_to_spec(cavity-vorticity)");
        require_positive(p.reynolds, "Re");
        spec.n_fields = 2;
        const double cx = 1.0 / (p.reynolds * dx * dx), cy = 1.0 / (p.reynolds * dy * dy);
        const double c = 1.0 / (4.0 * dx * dy);
        for (auto& st : spec.sites) {
            push(st, cx, {{1, 0, 0}});
            push(st, cx, {{-1, 0, 0}});
            push(st, cy, {{0, 1, 0}});
            push(st, cy, {{0, -1, 0}});
            push(st, -2.0 * (cx + cy), {{0, 0, 0}});
            // -psi_y omega_x
            push(st, -c, {{0, 1, 1}, {1, 0, 0}});
            push(st, c, {{0, 1, 1}, {-1, 0, 0}});
            push(st, c, {{0, -1, 1}, {1, 0, 0}});
            push(st, -c, {{0, -1, 1}, {-1, 0, 0}});
            // +psi_x omega_y
            push(st, c, {{1, 0, 1}, {0, 1, 0}});
            push(st, -c, {{1, 0, 1}, {0, -1, 0}});
            push(st, -c, {{-1, 0, 1}, {0, 1, 0}});
            push(st, c, {{-1, 0, 1}, {0, -1, 0}});
        }
        spec.degree = 2;
        spec.deriv_order = 2;
        spec.radius = 1;
    } else if (builtin == "generic-linear") {
        const double cx = p.kappa / (dx * dx);
        const double cy = grid.dims() == 2 ? p.kappa / (dy * dy) : 0.0;
        for (auto& st : spec.sites) {
            push(st, cx, {{1, 0, 0}});
            push(st, cx, {{-1, 0, 0}});
            if (grid.dims() == 2) {
                push(st, cy, {{0, 1, 0}});
                push(st, cy, {{0, -1, 0}});
            }
            push(st, -2.0 * (cx + cy), {{0, 0, 0}});
        }
        spec.degree = 1;
        spec.deriv_order = 2;
        spec.radius = 1;
    } else if (builtin == "generic-poly") {
        if (p.deriv_order < 1 || p.degree < 1) {
            throw ContractError("generic-poly: K and r must be >= 1");
        }
        const int radius = (p.deriv_order + 1) / 2;
        if (radius > kMaxOffset) throw ContractError("generic-poly: radius beyond supported");
        const auto ball = manhattan_ball(radius, grid.dims(), p.self_coupling);
        const int r = p.degree;
        // Non-decreasing index sequences enumerate each multiset once.
        std::vector<std::size_t> idx(static_cast<std::size_t>(r), 0);
        std::vector<std::vector<Offset>> multisets;
        while (true) {
            std::vector<Offset> f;
            for (auto i : idx) f.push_back(ball[i]);
            multisets.push_back(std::move(f));
            int pos = r - 1;
            while (pos >= 0 && idx[static_cast<std::size_t>(pos)] + 1 == ball.size()) --pos;
            if (pos < 0) break;
            const std::size_t v = idx[static_cast<std::size_t>(pos)] + 1;
            for (int q = pos; q < r; ++q) idx[static_cast<std::size_t>(q)] = v;
        }
        for (auto& st : spec.sites) {
            for (std::size_t a = 0; a < multisets.size(); ++a) {
                push(st, 1.0 / static_cast<double>(a + 1), multisets[a]);
            }
        }
        spec.degree = r;
        spec.deriv_order = p.deriv_order;
        spec.radius = radius;
    } else {
        throw ContractError("rhs_to_spec: unknown builtin '" + builtin + "'");
    }
    canonicalize(spec);
    validate(spec);
    return spec;
}

void canonicalize(RhsSpec& spec) {
    for (auto& st : spec.sites) {
        for (auto& m : st.monomials) std::sort(m.factors.begin(), m.factors.end());
        std::map<std::vector<Offset>, Complex> merged;
        for (const auto& m : st.monomials) merged[m.factors] += m.coeff;
        st.monomials.clear();
        for (auto& [f, c] : merged) {
            if (c != Complex{}) st.monomials.push_back({c, f});
        }
    }
}

void validate(const RhsSpec& spec) {
    if (spec.radius < (spec.deriv_order + 1) / 2) {
        throw ContractError("rhs spec: radius below ceil(K/2)");
    }
    for (const auto& st : spec.sites) {
        if (st.site >= spec.grid.size()) throw ContractError("rhs spec: site out of range");
        for (const auto& m : st.monomials) {
            if (static_cast<int>(m.factors.size()) > spec.degree) {
                throw ContractError("rhs spec: monomial degree exceeds r");
            }
            for (const auto& f : m.factors) {
                if (f.manhattan() > spec.radius) {
                    throw ContractError("rhs spec: factor offset outside radius R");
                }
                if (f.field < 0 || f.field >= spec.n_fields) {
                    throw ContractError("rhs spec: field index out of range");
                }
            }
        }
    }
}

CVec evaluate(const RhsSpec& spec, std::span<const CVec> fields) {
    if (static_cast<int>(fields.size()) != spec.n_fields) {
        throw ContractError("rhs spec evaluate: wrong number of fields");
    }
    for (const auto& f : fields) require_length(f.size(), spec.grid.size(), "rhs spec evaluate");
    CVec out(spec.grid.size());
    for (const auto& st : spec.sites) {
        Complex acc{};
        for (const auto& m : st.monomials) {
            Complex term = m.coeff;
            for (const auto& f : m.factors) {
                term *= at(spec.grid, fields[static_cast<std::size_t>(f.field)], st.site, f.dx,
                           f.dy);
            }
            acc += term;
        }
        out[st.site] += acc;
    }
    return out;
}

CVec jacobian_apply(const RhsSpec& spec, std::span<const CVec> fields,
                    std::span<const Complex> w) {
    if (spec.n_fields != 1) {
        throw ContractError("rhs spec jacobian: only single-field specs are supported");
    }
    require_length(w.size(), spec.grid.size(), "rhs spec jacobian");
    const CVec& z = fields[0];
    CVec out(spec.grid.size());
    std::vector<Complex> vals;
    for (const auto& st : spec.sites) {
        Complex acc{};
        for (const auto& m : st.monomials) {
            vals.clear();
            for (const auto& f : m.factors) vals.push_back(at(spec.grid, z, st.site, f.dx, f.dy));
            for (std::size_t a = 0; a < m.factors.size(); ++a) {
                Complex term = m.coeff *
                               at_lin(spec.grid, w, st.site, m.factors[a].dx, m.factors[a].dy);
                for (std::size_t b = 0; b < vals.size(); ++b) {
                    if (b != a) term *= vals[b];
                }
                acc += term;
            }
        }
        out[st.site] += acc;
    }
    return out;
}

SpecRhs::SpecRhs(RhsSpec spec) : spec_(std::move(spec)) {
    if (spec_.n_fields != 1) throw ContractError("SpecRhs: single-field specs only");
    validate(spec_);
}

CVec SpecRhs::evaluate(const FieldState& s) const {
    if (!(s.grid == spec_.grid)) throw ContractError("SpecRhs: grid mismatch");
    return kvn::evaluate(spec_, std::span<const CVec>(&s.z, 1));
}

CVec SpecRhs::jacobian_apply(const FieldState& s, std::span<const Complex> w) const {
    if (!(s.grid == spec_.grid)) throw ContractError("SpecRhs: grid mismatch");
    return kvn::jacobian_apply(spec_, std::span<const CVec>(&s.z, 1), w);
}

// Split by monomial degree: constants -> reaction, linear -> diffusion, higher -> transport.
RhsParts SpecRhs::parts(const FieldState& s) const {
    RhsSpec by_degree[3] = {spec_, spec_, spec_};
    for (int d = 0; d < 3; ++d) {
        for (auto& st : by_degree[d].sites) {
            std::erase_if(st.monomials, [d](const Monomial& m) {
                const int deg = static_cast<int>(m.factors.size());
                return d == 2 ? deg < 2 : deg != d;
            });
        }
    }
    const std::span<const CVec> f(&s.z, 1);
    return {kvn::evaluate(by_degree[1], f), kvn::evaluate(by_degree[2], f),
            kvn::evaluate(by_degree[0], f)};
}

std::string serialize(const RhsSpec& spec) {
    std::ostringstream os;
    os << "# kvn rhs-spec v1\n";
    os << "name " << spec.name << '\n';
    os << "meta fields=" << spec.n_fields << " r=" << spec.degree << " K=" << spec.deriv_order
       << " R=" << spec.radius << " d=" << spec.dims << " sites=" << spec.sites.size() << '\n';
    for (const auto& st : spec.sites) {
        for (const auto& m : st.monomials) {
            os << "term " << st.site << ' ' << csv::num(m.coeff.real()) << ' '
               << csv::num(m.coeff.imag()) << " |";
            for (const auto& f : m.factors) os << ' ' << f.dx << ',' << f.dy << ',' << f.field;
            os << '\n';
        }
    }
    return os.str();
}

RhsSpec parse_spec(const std::string& text, const GridSpec& grid) {
    RhsSpec spec;
    spec.grid = grid;
    spec.dims = grid.dims();
    spec.sites.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) spec.sites[k].site = k;
    std::istringstream is(text);
    std::string line;
    bool have_meta = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "name") {
            ls >> spec.name;
        } else if (tag == "meta") {
            std::string kv;
            while (ls >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw ContractError("rhs spec: bad meta field");
                const std::string key = kv.substr(0, eq);
                const int val = std::stoi(kv.substr(eq + 1));
                if (key == "fields") spec.n_fields = val;
                else if (key == "r") spec.degree = val;
                else if (key == "K") spec.deriv_order = val;
                else if (key == "R") spec.radius = val;
                else if (key == "d") spec.dims = val;
                else if (key == "sites") {
                    if (static_cast<std::size_t>(val) != grid.size()) {
                        throw ContractError("rhs spec: site count does not match grid");
                    }
                } else {
                    throw ContractError("rhs spec: unknown meta key '" + key + "'");
                }
            }
            have_meta = true;
        } else if (tag == "term") {
            std::size_t site;
            double re, im;
            std::string bar;
            if (!(ls >> site >> re >> im >> bar) || bar != "|") {
                throw ContractError("rhs spec: malformed term line");
            }
            if (site >= grid.size()) throw ContractError("rhs spec: site out of range");
            Monomial m{{re, im}, {}};
            std::string tok;
            while (ls >> tok) {
                const auto parts = csv::split(tok);
                if (parts.size() != 3) throw ContractError("rhs spec: malformed offset");
                m.factors.push_back(
                    {std::stoi(parts[0]), std::stoi(parts[1]), std::stoi(parts[2])});
            }
            spec.sites[site].monomials.push_back(std::move(m));
        } else {
            throw ContractError("rhs spec: unknown line tag '" + tag + "'");
        }
    }
    if (!have_meta) throw ContractError("rhs spec: missing meta line");
    canonicalize(spec);
    validate(spec);
    return spec;
}

} // namespace kvn
