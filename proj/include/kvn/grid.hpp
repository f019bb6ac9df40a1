#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace kvn {

using Complex = std::complex<double>;
using CVec = std::vector<Complex>;
using RVec = std::vector<double>;

enum class BoundaryKind { Periodic, Dirichlet, CavityWalls };

// Boundary treatment shared by every axis of a grid.
//
// Dirichlet stores one ghost value per side, ordered (x_lo, x_hi, y_lo, y_hi).
// CavityWalls reads zero outside the domain (the stream function vanishes on
// the walls); the vorticity closure lives in the cavity solver.
struct Boundary {
    BoundaryKind kind = BoundaryKind::Periodic;
    std::array<Complex, 4> ghost{};
    double lid_velocity = 0.0;

    static Boundary periodic() { return {}; }
    static Boundary dirichlet(Complex value);
    static Boundary dirichlet(std::array<Complex, 4> sides);
    static Boundary cavity(double lid_velocity);
};

// Structured 1D/2D grid. Flat indices are row-major with axis order (x, y):
// index = i * ny + j, so y varies fastest.
class GridSpec {
public:
    // Empty placeholder grid (size 0); use the factories for real grids.
    GridSpec() = default;

    static GridSpec line(std::size_t n, double dx, double x0 = 0.0,
                         Boundary boundary = Boundary::periodic());
    static GridSpec plane(std::size_t nx, std::size_t ny, double dx, double dy,
                          double x0 = 0.0, double y0 = 0.0,
                          Boundary boundary = Boundary::periodic());
    // Cell-centred grid on [lo, hi]^2; with a symmetric interval and an even
    // point count the origin is never a grid point.
    static GridSpec cell_centered(std::size_t nx, std::size_t ny, double lo, double hi,
                                  Boundary boundary = Boundary::periodic());
    // Interior points of the unit square with walls at 0 and 1.
    static GridSpec cavity(std::size_t n, double lid_velocity = 1.0);

    int dims() const noexcept { return dims_; }
    std::size_t extent(int axis) const { return axis == 0 ? nx_ : ny_; }
    std::size_t size() const noexcept { return nx_ * ny_; }
    double spacing(int axis) const { return axis == 0 ? dx_ : dy_; }
    double coord(int axis, std::size_t i) const;
    double x(std::size_t index) const { return coord(0, index / ny_); }
    double y(std::size_t index) const { return coord(1, index % ny_); }
    const Boundary& boundary() const noexcept { return boundary_; }

    std::size_t index(std::size_t i, std::size_t j = 0) const { return i * ny_ + j; }
    std::array<std::size_t, 2> coords(std::size_t index) const {
        return {index / ny_, index % ny_};
    }

    bool operator==(const GridSpec& other) const;

private:
    GridSpec(int dims, std::size_t nx, std::size_t ny, double dx, double dy, double x0,
             double y0, Boundary boundary);

    int dims_ = 1;
    std::size_t nx_ = 0, ny_ = 1;
    double dx_ = 1.0, dy_ = 1.0, x0_ = 0.0, y0_ = 0.0;
    Boundary boundary_;
};

// Largest per-axis stencil offset the grid lookups support.
inline constexpr int kMaxOffset = 2;

// Result of a neighbour lookup: either a grid index or a boundary value.
struct Neighbor {
    bool inside = true;
    std::size_t index = 0;
    Complex value{};
};

Neighbor neighbor_along(const GridSpec& grid, std::size_t index, int axis, int offset);
// Combined offset along both axes (Manhattan stencils).
Neighbor neighbor(const GridSpec& grid, std::size_t index, int off_x, int off_y);

inline Complex value_of(const Neighbor& n, std::span<const Complex> z) {
    return n.inside ? z[n.index] : n.value;
}

// Coherent amplitudes and per-point variance at time t.
struct FieldState {
    GridSpec grid;
    CVec z;
    RVec var;
    double t = 0.0;
};

FieldState make_field(const GridSpec& grid, CVec init_profile, RVec init_var);
FieldState make_field(const GridSpec& grid, CVec init_profile);
// Throws ContractError if the state violates its invariants.
void validate(const FieldState& state);

// Rotational transport field or explicit samples. The closed form is
// u = (-y, x) / max(r, 1e-12), i.e. counter-clockwise rotation.
class VelocityField {
public:
    static VelocityField rotational() { return VelocityField(); }
    static VelocityField sampled(RVec vx, RVec vy);

    bool is_rotational() const noexcept { return vx_.empty(); }
    std::array<double, 2> at(const GridSpec& grid, std::size_t index) const;

private:
    RVec vx_, vy_;
};

inline constexpr double kRadiusFloor = 1e-12;
double inverse_radius(double x, double y);

void write_field_csv(std::ostream& os, const FieldState& state);
// Parses a snapshot written by write_field_csv back onto `grid`.
FieldState read_field_csv(std::istream& is, const GridSpec& grid, double t = 0.0);

} // namespace kvn
