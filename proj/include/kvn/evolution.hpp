#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "kvn/error.hpp"
#include "kvn/grid.hpp"
#include "kvn/rhs.hpp"

namespace kvn {

enum class Scheme { Euler1, Trotter2 };
enum class Controller { Off, PaBound };

struct RunConfig {
    Scheme scheme = Scheme::Euler1;
    double dt = 1e-3;
    double t_end = 0.0;
    double epsilon = 0.1;  // per-step post-selection failure budget
    Controller controller = Controller::Off;
    std::vector<double> save_times;
};

void validate(const RunConfig& config);

// Per-step diagnostics. dt_max_allowed is empty when the step is unconstrained.
struct StepReport {
    double t = 0.0;  // time at the start of the step
    double sigma_real = 0.0;
    Complex tr_A_rho{};
    double p_a = 1.0;
    double p_a_raw = 1.0;  // before clipping to [0, 1]
    bool p_a_clipped = false;
    double dt_used = 0.0;
    std::optional<double> dt_max_allowed;
    std::size_t var_clamps = 0;
};

// z' = z + dt F, t' = t + dt. Variance is carried over unchanged.
FieldState euler_step(const FieldState& state, std::span<const Complex> f, double dt);
// z' = z + dt F(z) + dt^2/2 J_F(z) F(z)
FieldState trotter2_step(const FieldState& state, const Rhs& rhs, double dt);
// Same as above with F(z) already evaluated.
FieldState trotter2_step(const FieldState& state, const Rhs& rhs, std::span<const Complex> f,
                         double dt);

struct VarianceUpdate {
    RVec var;
    std::size_t clamps = 0;
};

// var' = max(0, (1 - 2 dt Re Sigma) var), counting points clamped at zero.
VarianceUpdate variance_step(std::span<const double> var, double sigma_real, double dt);

inline constexpr double kControllerFloor = 1e-30;

// dt_max = epsilon / (2 max(Re Tr(A rho), floor)); empty when Re Tr(A rho) <= 0.
std::optional<double> step_controller(Complex tr_A_rho, double epsilon);

// p_a = 1 - 2 dt Re Tr(A rho), unclipped.
inline double success_probability_raw(Complex tr_A_rho, double dt) {
    return 1.0 - 2.0 * dt * tr_A_rho.real();
}

struct Snapshot {
    FieldState state;
    StepReport report;  // diagnostics evaluated at the snapshot state
};

struct Trajectory {
    std::vector<Snapshot> snapshots;
    std::vector<StepReport> steps;
    double cumulative_p_a = 1.0;
    std::size_t p_a_clip_events = 0;
    std::size_t var_clamp_events = 0;

    const Snapshot& at_time(double t, double tol = 1e-9) const;
};

// Thrown by run(): carries the last state whose amplitudes were all finite.
class RunDivergence : public DivergenceError {
public:
    RunDivergence(const std::string& what, std::size_t index, FieldState last_valid)
        : DivergenceError(what, index), last_valid_(std::move(last_valid)) {}
    const FieldState& last_valid() const noexcept { return last_valid_; }

private:
    FieldState last_valid_;
};

Trajectory run(const FieldState& initial, const Rhs& rhs, const RunConfig& config);

// ---------------------------------------------------------------------------
// Lid-driven cavity in stream-function / vorticity form.

struct CavityConfig {
    std::size_t n = 128;  // interior points per axis
    double reynolds = 1000.0;
    double lid_velocity = 1.0;
    double dt_omega = 0.005;
    double dtau_psi = 5e-6;
    double tol_frobenius = 1e-5;  // ||omega_{n+1} - omega_n||_F
    // Inner loop stops once ||lap psi + omega||_F / ||omega||_F <= inner_tol.
    double inner_tol = 1e-5;
    std::size_t max_inner = 200;  // pseudo-time iterations per outer step
    std::size_t max_outer = 200000;
    Scheme scheme = Scheme::Trotter2;
};

struct CavityResult {
    FieldState omega;
    FieldState psi;
    RVec u, v;  // interior velocities, u = psi_y, v = -psi_x
    std::size_t outer_steps = 0;
    std::size_t inner_iterations = 0;
    double last_delta = 0.0;
    double poisson_residual = 0.0;  // relative, as in CavityConfig::inner_tol
};

// Throws ConvergenceError when max_outer is reached.
CavityResult cavity_solve(const CavityConfig& config,
                          const std::function<void(const CavityResult&)>& progress = {});

// ||lap psi + omega||_F / ||omega||_F (zero when both vanish).
double poisson_residual(const FieldState& psi, const FieldState& omega);

// Velocity on the walls from one-sided second-order differences of psi.
// The core values skip bands of max(2, n/8) points next to each corner, where
// the lid discontinuity keeps the pointwise error O(1) at any resolution.
struct WallVelocityCheck {
    double lid_error = 0.0;   // max |u - U| along y = 1
    double slip_error = 0.0;  // max tangential speed on the stationary walls
    double lid_error_core = 0.0;
    double slip_error_core = 0.0;
};
WallVelocityCheck wall_velocity_check(const FieldState& psi);

} // namespace kvn
