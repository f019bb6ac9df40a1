#include "kvn/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace kvn {

namespace {

void check_finite(const FieldState& s, const char* who) {
    for (std::size_t k = 0; k < s.z.size(); ++k) {
        if (!std::isfinite(s.z[k].real()) || !std::isfinite(s.z[k].imag())) {
            throw DivergenceError(std::string(who) + ": non-finite amplitude at index " +
                                      std::to_string(k),
                                  k);
        }
    }
}

void require_dt(double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ContractError("dt must be positive");
}

Complex overlap(std::span<const Complex> z, std::span<const Complex> f) {
    Complex acc{};
    for (std::size_t k = 0; k < z.size(); ++k) acc += std::conj(z[k]) * f[k];
    return acc;
}

} // namespace

void validate(const RunConfig& c) {
    require_dt(c.dt);
    if (!(c.t_end >= 0.0)) throw ContractError("t_end must be >= 0");
    if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw ContractError("epsilon must lie in (0,1)");
    for (double t : c.save_times) {
        if (!(t >= 0.0 && t <= c.t_end * (1 + 1e-12) + 1e-15)) {
            throw ContractError("save time outside [0, t_end]");
        }
    }
}

FieldState euler_step(const FieldState& s, std::span<const Complex> f, double dt) {
    require_dt(dt);
    if (f.size() != s.z.size()) throw ContractError("euler_step: length mismatch");
    FieldState out = s;
    for (std::size_t k = 0; k < f.size(); ++k) out.z[k] += dt * f[k];
    out.t = s.t + dt;
    check_finite(out, "euler_step");
    return out;
}

FieldState trotter2_step(const FieldState& s, const Rhs& rhs, std::span<const Complex> f,
                         double dt) {
    require_dt(dt);
    if (f.size() != s.z.size()) throw ContractError("trotter2_step: length mismatch");
    const CVec jf = rhs.jacobian_apply(s, f);
    FieldState out = s;
    const double half_dt2 = 0.5 * dt * dt;
    for (std::size_t k = 0; k < f.size(); ++k) out.z[k] += dt * f[k] + half_dt2 * jf[k];
    out.t = s.t + dt;
    check_finite(out, "trotter2_step");
    return out;
}

FieldState trotter2_step(const FieldState& s, const Rhs& rhs, double dt) {
    const CVec f = rhs.evaluate(s);
    return trotter2_step(s, rhs, f, dt);
}

VarianceUpdate variance_step(std::span<const double> var, double sigma_real, double dt) {
    VarianceUpdate out{RVec(var.size()), 0};
    const double factor = 1.0 - 2.0 * dt * sigma_real;
    for (std::size_t k = 0; k < var.size(); ++k) {
        if (var[k] < 0.0) throw ContractError("variance_step: negative input variance");
        const double v = factor * var[k];
        if (v < 0.0) {
            out.var[k] = 0.0;
            ++out.clamps;
        } else {
            out.var[k] = v;
        }
    }
    return out;
}

std::optional<double> step_controller(Complex tr_A_rho, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ContractError("epsilon must lie in (0,1)");
    if (tr_A_rho.real() <= 0.0) return std::nullopt;
    return epsilon / (2.0 * std::max(tr_A_rho.real(), kControllerFloor));
}

const Snapshot& Trajectory::at_time(double t, double tol) const {
    for (const auto& s : snapshots) {
        if (std::abs(s.state.t - t) <= tol * std::max(1.0, std::abs(t))) return s;
    }
    throw ContractError("trajectory has no snapshot at t = " + std::to_string(t));
}

Trajectory run(const FieldState& initial, const Rhs& rhs, const RunConfig& cfg) {
    validate(cfg);
    validate(initial);
    std::vector<double> saves = cfg.save_times;
    std::sort(saves.begin(), saves.end());
    saves.erase(std::unique(saves.begin(), saves.end()), saves.end());

    Trajectory traj;
    FieldState state = initial;
    std::size_t next_save = 0;
    const double snap_tol = 1e-9 * cfg.dt;

    auto diagnose = [&](const FieldState& s, std::span<const Complex> f) {
        StepReport r;
        r.t = s.t;
        r.tr_A_rho = overlap(s.z, f);
        r.sigma_real = r.tr_A_rho.real();
        if (cfg.controller == Controller::PaBound) {
            r.dt_max_allowed = step_controller(r.tr_A_rho, cfg.epsilon);
        }
        return r;
    };

    while (true) {
        const CVec f = rhs.evaluate(state);
        while (next_save < saves.size() && std::abs(saves[next_save] - state.t) <= snap_tol) {
            traj.snapshots.push_back({state, diagnose(state, f)});
            ++next_save;
        }
        if (state.t >= cfg.t_end - snap_tol) break;

        StepReport r = diagnose(state, f);
        double dt = cfg.dt;
        if (r.dt_max_allowed) dt = std::min(dt, *r.dt_max_allowed);
        const double target = next_save < saves.size() ? saves[next_save] : cfg.t_end;
        bool land = false;
        if (target - state.t <= dt + snap_tol) {
            dt = target - state.t;
            land = true;
        }
        r.dt_used = dt;
        r.p_a_raw = success_probability_raw(r.tr_A_rho, dt);
        r.p_a = std::clamp(r.p_a_raw, 0.0, 1.0);
        r.p_a_clipped = r.p_a != r.p_a_raw;

        FieldState next;
        try {
            next = cfg.scheme == Scheme::Euler1 ? euler_step(state, f, dt)
                                                : trotter2_step(state, rhs, f, dt);
        } catch (const DivergenceError& e) {
            throw RunDivergence(e.what(), e.index(), state);
        }
        if (land) next.t = target;
        auto vu = variance_step(state.var, r.sigma_real, dt);
        next.var = std::move(vu.var);
        r.var_clamps = vu.clamps;

        traj.cumulative_p_a *= r.p_a;
        traj.p_a_clip_events += r.p_a_clipped ? 1 : 0;
        traj.var_clamp_events += r.var_clamps;
        traj.steps.push_back(r);
        state = std::move(next);
    }
    return traj;
}

// --- Cavity ----------------------------------------------------------------

namespace {

// Real (n+2)^2 work arrays with zero walls for the pseudo-time Poisson loop.
struct StreamRelaxer {
    std::size_t nx, ny;
    double hx2, hy2;
    RVec psi, next, omega;

    explicit StreamRelaxer(const GridSpec& g)
        : nx(g.extent(0)), ny(g.extent(1)), hx2(g.spacing(0) * g.spacing(0)),
          hy2(g.spacing(1) * g.spacing(1)), psi((nx + 2) * (ny + 2), 0.0),
          next((nx + 2) * (ny + 2), 0.0), omega(nx * ny, 0.0) {}

    std::size_t p(std::size_t i, std::size_t j) const { return (i + 1) * (ny + 2) + (j + 1); }

    void load(const FieldState& ps, const FieldState& om) {
        for (std::size_t i = 0; i < nx; ++i) {
            for (std::size_t j = 0; j < ny; ++j) {
                psi[p(i, j)] = ps.z[i * ny + j].real();
                omega[i * ny + j] = om.z[i * ny + j].real();
            }
        }
    }

    void store(FieldState& ps) const {
        for (std::size_t i = 0; i < nx; ++i) {
            for (std::size_t j = 0; j < ny; ++j) ps.z[i * ny + j] = psi[p(i, j)];
        }
    }

    // Squared Frobenius norm of lap psi + omega at the current psi.
    double residual2() const {
        double acc = 0.0;
        for (std::size_t i = 0; i < nx; ++i) {
            for (std::size_t j = 0; j < ny; ++j) {
                const std::size_t c = p(i, j);
                const double r = (psi[c + (ny + 2)] - 2 * psi[c] + psi[c - (ny + 2)]) / hx2 +
                                 (psi[c + 1] - 2 * psi[c] + psi[c - 1]) / hy2 +
                                 omega[i * ny + j];
                acc += r * r;
            }
        }
        return acc;
    }

    // One explicit pseudo-time step; returns the squared residual before the step.
    double step(double dtau) {
        double acc = 0.0;
        for (std::size_t i = 0; i < nx; ++i) {
            for (std::size_t j = 0; j < ny; ++j) {
                const std::size_t c = p(i, j);
                const double r = (psi[c + (ny + 2)] - 2 * psi[c] + psi[c - (ny + 2)]) / hx2 +
                                 (psi[c + 1] - 2 * psi[c] + psi[c - 1]) / hy2 +
                                 omega[i * ny + j];
                acc += r * r;
                next[c] = psi[c] + dtau * r;
            }
        }
        psi.swap(next);
        return acc;
    }
};

double frobenius(std::span<const Complex> z) {
    double acc = 0.0;
    for (const auto& v : z) acc += std::norm(v);
    return std::sqrt(acc);
}

} // namespace

double poisson_residual(const FieldState& psi, const FieldState& omega) {
    const CVec r = streamfunction_rhs(psi, omega);
    const double num = frobenius(r);
    const double den = frobenius(omega.z);
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return num / den;
}

WallVelocityCheck wall_velocity_check(const FieldState& psi) {
    const auto& g = psi.grid;
    if (g.boundary().kind != BoundaryKind::CavityWalls) {
        throw ContractError("wall_velocity_check: grid has no cavity walls");
    }
    const std::size_t nx = g.extent(0), ny = g.extent(1);
    const double hx = g.spacing(0), hy = g.spacing(1);
    const double lid = g.boundary().lid_velocity;
    auto ps = [&](std::size_t i, std::size_t j) { return psi.z[g.index(i, j)].real(); };
    WallVelocityCheck c;
    const std::size_t band = std::max<std::size_t>(2, nx / 8);
    auto core = [band](std::size_t k, std::size_t n) { return k >= band && k + band < n; };
    // Wall value of psi is zero in every one-sided stencil below.
    for (std::size_t i = 0; i < nx; ++i) {
        const double u_top = (-4 * ps(i, ny - 1) + ps(i, ny - 2)) / (2 * hy);
        const double u_bottom = (4 * ps(i, 0) - ps(i, 1)) / (2 * hy);
        c.lid_error = std::max(c.lid_error, std::abs(u_top - lid));
        c.slip_error = std::max(c.slip_error, std::abs(u_bottom));
        if (core(i, nx)) {
            c.lid_error_core = std::max(c.lid_error_core, std::abs(u_top - lid));
            c.slip_error_core = std::max(c.slip_error_core, std::abs(u_bottom));
        }
    }
    for (std::size_t j = 0; j < ny; ++j) {
        const double v_left = -(4 * ps(0, j) - ps(1, j)) / (2 * hx);
        const double v_right = -(-4 * ps(nx - 1, j) + ps(nx - 2, j)) / (2 * hx);
        c.slip_error = std::max({c.slip_error, std::abs(v_left), std::abs(v_right)});
        if (core(j, ny)) {
            c.slip_error_core = std::max({c.slip_error_core, std::abs(v_left), std::abs(v_right)});
        }
    }
    return c;
}

CavityResult cavity_solve(const CavityConfig& cfg,
                          const std::function<void(const CavityResult&)>& progress) {
    require_dt(cfg.dt_omega);
    require_dt(cfg.dtau_psi);
    if (!(cfg.tol_frobenius > 0.0) || !(cfg.inner_tol > 0.0)) {
        throw ContractError("cavity tolerances must be positive");
    }
    const GridSpec grid = GridSpec::cavity(cfg.n, cfg.lid_velocity);
    const CVec zeros(grid.size());
    CavityResult res{make_field(grid, zeros), make_field(grid, zeros), {}, {}, 0, 0, 0.0, 0.0};
    CavityVorticityRhs rhs(res.psi, cfg.reynolds);
    StreamRelaxer relax(grid);

    for (res.outer_steps = 1; res.outer_steps <= cfg.max_outer; ++res.outer_steps) {
        const CVec f = rhs.evaluate(res.omega);
        FieldState next = cfg.scheme == Scheme::Euler1
                              ? euler_step(res.omega, f, cfg.dt_omega)
                              : trotter2_step(res.omega, rhs, f, cfg.dt_omega);
        double delta2 = 0.0;
        for (std::size_t k = 0; k < next.z.size(); ++k) delta2 += std::norm(next.z[k] - res.omega.z[k]);
        res.last_delta = std::sqrt(delta2);
        res.omega = std::move(next);

        relax.load(res.psi, res.omega);
        const double om2 = std::max(std::pow(frobenius(res.omega.z), 2), 1e-300);
        const double tol2 = cfg.inner_tol * cfg.inner_tol * om2;
        // step() reports the residual of the iterate it starts from.
        double r2 = relax.residual2();
        for (std::size_t it = 0; it < cfg.max_inner && r2 > tol2; ++it) {
            const double before = relax.step(cfg.dtau_psi);
            ++res.inner_iterations;
            r2 = it + 1 < cfg.max_inner ? before : relax.residual2();
        }
        relax.store(res.psi);
        res.psi.t = res.omega.t;
        rhs.set_psi(res.psi);
        res.poisson_residual = frobenius(res.omega.z) == 0.0 ? std::sqrt(r2) : std::sqrt(r2 / om2);

        if (progress && res.outer_steps % 1000 == 0) progress(res);
        if (res.last_delta <= cfg.tol_frobenius && r2 <= tol2) break;
    }
    if (res.outer_steps > cfg.max_outer) {
        throw ConvergenceError("cavity_solve: no steady state after " +
                               std::to_string(cfg.max_outer) + " outer steps (last delta " +
                               std::to_string(res.last_delta) + ")");
    }

    res.u.assign(grid.size(), 0.0);
    res.v.assign(grid.size(), 0.0);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        auto ps = [&](int ox, int oy) { return value_of(neighbor(grid, k, ox, oy), res.psi.z).real(); };
        res.u[k] = (ps(0, 1) - ps(0, -1)) / (2 * grid.spacing(1));
        res.v[k] = -(ps(1, 0) - ps(-1, 0)) / (2 * grid.spacing(0));
    }
    return res;
}

} // namespace kvn
