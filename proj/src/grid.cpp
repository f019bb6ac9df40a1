#include "kvn/grid.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "kvn/csv.hpp"
#include "kvn/error.hpp"

namespace kvn {

Boundary Boundary::dirichlet(Complex value) {
    return dirichlet({value, value, value, value});
}

Boundary Boundary::dirichlet(std::array<Complex, 4> sides) {
    Boundary b;
    b.kind = BoundaryKind::Dirichlet;
    b.ghost = sides;
    return b;
}

Boundary Boundary::cavity(double lid_velocity) {
    Boundary b;
    b.kind = BoundaryKind::CavityWalls;
    b.lid_velocity = lid_velocity;
    return b;
}

GridSpec::GridSpec(int dims, std::size_t nx, std::size_t ny, double dx, double dy,
                   double x0, double y0, Boundary boundary)
    : dims_(dims), nx_(nx), ny_(ny), dx_(dx), dy_(dy), x0_(x0), y0_(y0),
      boundary_(boundary) {
    if (nx_ < 3 || (dims_ == 2 && ny_ < 3)) {
        throw ContractError("grid extents must be >= 3 per axis");
    }
    if (!(dx_ > 0.0) || !(dy_ > 0.0) || !std::isfinite(dx_) || !std::isfinite(dy_)) {
        throw ContractError("grid spacings must be strictly positive");
    }
    if (dims_ == 1 && boundary_.kind == BoundaryKind::CavityWalls) {
        throw ContractError("cavity walls require a 2D grid");
    }
}

GridSpec GridSpec::line(std::size_t n, double dx, double x0, Boundary boundary) {
    return GridSpec(1, n, 1, dx, 1.0, x0, 0.0, boundary);
}

GridSpec GridSpec::plane(std::size_t nx, std::size_t ny, double dx, double dy, double x0,
                         double y0, Boundary boundary) {
    return GridSpec(2, nx, ny, dx, dy, x0, y0, boundary);
}

GridSpec GridSpec::cell_centered(std::size_t nx, std::size_t ny, double lo, double hi,
                                 Boundary boundary) {
    if (!(hi > lo)) throw ContractError("cell_centered: hi must exceed lo");
    const double dx = (hi - lo) / static_cast<double>(nx);
    const double dy = (hi - lo) / static_cast<double>(ny);
    return plane(nx, ny, dx, dy, lo + 0.5 * dx, lo + 0.5 * dy, boundary);
}

GridSpec GridSpec::cavity(std::size_t n, double lid_velocity) {
    const double h = 1.0 / static_cast<double>(n + 1);
    return plane(n, n, h, h, h, h, Boundary::cavity(lid_velocity));
}

double GridSpec::coord(int axis, std::size_t i) const {
    return axis == 0 ? x0_ + dx_ * static_cast<double>(i)
                     : y0_ + dy_ * static_cast<double>(i);
}

bool GridSpec::operator==(const GridSpec& o) const {
    return dims_ == o.dims_ && nx_ == o.nx_ && ny_ == o.ny_ && dx_ == o.dx_ &&
           dy_ == o.dy_ && x0_ == o.x0_ && y0_ == o.y0_ &&
           boundary_.kind == o.boundary_.kind && boundary_.ghost == o.boundary_.ghost &&
           boundary_.lid_velocity == o.boundary_.lid_velocity;
}

namespace {

// Side index into Boundary::ghost for an out-of-range step along `axis`.
int side(int axis, long pos) { return 2 * axis + (pos < 0 ? 0 : 1); }

} // namespace

Neighbor neighbor_along(const GridSpec& grid, std::size_t index, int axis, int offset) {
    return axis == 0 ? neighbor(grid, index, offset, 0) : neighbor(grid, index, 0, offset);
}

Neighbor neighbor(const GridSpec& grid, std::size_t index, int off_x, int off_y) {
    if (std::abs(off_x) > kMaxOffset || std::abs(off_y) > kMaxOffset) {
        throw ContractError("neighbor: offset beyond supported radius");
    }
    if (grid.dims() == 1 && off_y != 0) {
        throw ContractError("neighbor: y offset on a 1D grid");
    }
    if (index >= grid.size()) throw ContractError("neighbor: index out of range");

    const auto [i, j] = grid.coords(index);
    long pos[2] = {static_cast<long>(i) + off_x, static_cast<long>(j) + off_y};
    for (int axis = 0; axis < 2; ++axis) {
        const long n = static_cast<long>(grid.extent(axis));
        if (pos[axis] >= 0 && pos[axis] < n) continue;
        switch (grid.boundary().kind) {
        case BoundaryKind::Periodic:
            pos[axis] = ((pos[axis] % n) + n) % n;
            break;
        case BoundaryKind::Dirichlet:
            return {false, 0, grid.boundary().ghost[side(axis, pos[axis])]};
        case BoundaryKind::CavityWalls:
            return {false, 0, Complex{}};
        }
    }
    return {true, grid.index(static_cast<std::size_t>(pos[0]), static_cast<std::size_t>(pos[1])),
            Complex{}};
}

void validate(const FieldState& s) {
    const std::size_t n = s.grid.size();
    if (s.z.size() != n || s.var.size() != n) {
        throw ContractError("field length mismatch: expected " + std::to_string(n) +
                            " entries, got z=" + std::to_string(s.z.size()) +
                            " var=" + std::to_string(s.var.size()));
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (!std::isfinite(s.z[k].real()) || !std::isfinite(s.z[k].imag()) ||
            !std::isfinite(s.var[k])) {
            throw ContractError("non-finite field entry at index " + std::to_string(k));
        }
        if (s.var[k] < 0.0) {
            throw ContractError("negative variance at index " + std::to_string(k));
        }
    }
    if (!std::isfinite(s.t)) throw ContractError("non-finite time");
}

FieldState make_field(const GridSpec& grid, CVec init_profile, RVec init_var) {
    FieldState s{grid, std::move(init_profile), std::move(init_var), 0.0};
    validate(s);
    return s;
}

FieldState make_field(const GridSpec& grid, CVec init_profile) {
    RVec var(init_profile.size(), 0.0);
    return make_field(grid, std::move(init_profile), std::move(var));
}

VelocityField VelocityField::sampled(RVec vx, RVec vy) {
    if (vx.size() != vy.size() || vx.empty()) {
        throw ContractError("velocity samples: component lengths differ or are empty");
    }
    for (std::size_t k = 0; k < vx.size(); ++k) {
        if (!std::isfinite(vx[k]) || !std::isfinite(vy[k])) {
            throw ContractError("velocity samples must be finite");
        }
    }
    VelocityField v;
    v.vx_ = std::move(vx);
    v.vy_ = std::move(vy);
    return v;
}

double inverse_radius(double x, double y) {
    return 1.0 / std::max(std::hypot(x, y), kRadiusFloor);
}

std::array<double, 2> VelocityField::at(const GridSpec& grid, std::size_t index) const {
    if (is_rotational()) {
        const double x = grid.x(index), y = grid.y(index);
        const double inv_r = inverse_radius(x, y);
        return {-y * inv_r, x * inv_r};
    }
    if (vx_.size() != grid.size()) throw ContractError("velocity samples do not match grid");
    return {vx_[index], vy_[index]};
}

void write_field_csv(std::ostream& os, const FieldState& s) {
    const bool two_d = s.grid.dims() == 2;
    os << (two_d ? "i,j,x,y,re_z,im_z,var\n" : "i,x,re_z,im_z,var\n");
    for (std::size_t k = 0; k < s.grid.size(); ++k) {
        const auto [i, j] = s.grid.coords(k);
        os << i << ',';
        if (two_d) os << j << ',';
        os << csv::num(s.grid.x(k)) << ',';
        if (two_d) os << csv::num(s.grid.y(k)) << ',';
        os << csv::num(s.z[k].real()) << ',' << csv::num(s.z[k].imag()) << ','
           << csv::num(s.var[k]) << '\n';
    }
}

FieldState read_field_csv(std::istream& is, const GridSpec& grid, double t) {
    const bool two_d = grid.dims() == 2;
    std::string line;
    if (!std::getline(is, line)) throw ContractError("field csv: missing header");
    CVec z(grid.size());
    RVec var(grid.size());
    std::vector<bool> seen(grid.size(), false);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cols = csv::split(line);
        const std::size_t want = two_d ? 7 : 5;
        if (cols.size() != want) throw ContractError("field csv: bad column count");
        const std::size_t i = std::stoul(cols[0]);
        const std::size_t j = two_d ? std::stoul(cols[1]) : 0;
        if (i >= grid.extent(0) || j >= grid.extent(1)) {
            throw ContractError("field csv: index outside grid");
        }
        const std::size_t base = two_d ? 4 : 2;
        const std::size_t k = grid.index(i, j);
        z[k] = {std::stod(cols[base]), std::stod(cols[base + 1])};
        var[k] = std::stod(cols[base + 2]);
        seen[k] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
        throw ContractError("field csv: missing grid points");
    }
    FieldState s = make_field(grid, std::move(z), std::move(var));
    s.t = t;
    return s;
}

} // namespace kvn
