#include "kvn/noise.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include <Eigen/Dense>

#include "kvn/csv.hpp"
#include "kvn/error.hpp"
#include "kvn/fock.hpp"

namespace kvn {

void validate(const NoiseConfig& c) {
    if (!(c.gamma >= 0.0) || !(c.gamma_bar >= 0.0)) {
        throw ContractError("noise: rates must be >= 0");
    }
    for (std::size_t i = 0; i < c.richardson_gammas.size(); ++i) {
        if (!(c.richardson_gammas[i] >= 0.0)) throw ContractError("noise: rates must be >= 0");
        if (i > 0 && !(c.richardson_gammas[i] > c.richardson_gammas[i - 1])) {
            throw ContractError("noise: richardson rates must be strictly increasing");
        }
    }
    if (!c.richardson_gammas.empty() && c.richardson_gammas.size() < 2) {
        throw ContractError("noise: richardson needs at least two rates");
    }
    if (c.order < 1) throw ContractError("noise: extrapolation order must be >= 1");
    if (!c.richardson_gammas.empty() &&
        c.richardson_gammas.size() < static_cast<std::size_t>(c.order) + 1) {
        throw ContractError("noise: richardson needs order + 1 rates");
    }
}

NoisyRhs::NoisyRhs(RhsPtr base, double gamma) : base_(std::move(base)), gamma_(gamma) {
    if (!base_) throw ContractError("noisy rhs: null base");
    if (!(gamma_ >= 0.0) || !std::isfinite(gamma_)) throw ContractError("noisy rhs: gamma must be >= 0");
}

CVec NoisyRhs::evaluate(const FieldState& s) const {
    CVec f = base_->evaluate(s);
    for (std::size_t k = 0; k < f.size(); ++k) f[k] -= 0.5 * gamma_ * s.z[k];
    return f;
}

CVec NoisyRhs::jacobian_apply(const FieldState& s, std::span<const Complex> w) const {
    CVec f = base_->jacobian_apply(s, w);
    for (std::size_t k = 0; k < f.size(); ++k) f[k] -= 0.5 * gamma_ * w[k];
    return f;
}

RhsParts NoisyRhs::parts(const FieldState& s) const {
    RhsParts p = base_->parts(s);
    if (p.reaction.empty()) p.reaction.assign(s.z.size(), Complex{});
    for (std::size_t k = 0; k < s.z.size(); ++k) p.reaction[k] -= 0.5 * gamma_ * s.z[k];
    return p;
}

std::string NoisyRhs::name() const { return base_->name() + "+loss"; }

RhsPtr noisy_rhs(RhsPtr base, double gamma) {
    if (!base) throw ContractError("noisy rhs: null base");
    if (gamma == 0.0) return base;
    return std::make_shared<NoisyRhs>(std::move(base), gamma);
}

FieldState counterterm(const FieldState& state, double gamma_bar) {
    if (!(gamma_bar >= 0.0)) throw ContractError("counterterm: gamma_bar must be >= 0");
    FieldState out = state;
    const double g = std::exp(0.5 * gamma_bar * state.t);
    for (auto& z : out.z) z *= g;
    return out;
}

Trajectory counterterm(const Trajectory& noisy, double gamma_bar) {
    Trajectory out = noisy;
    for (auto& snap : out.snapshots) snap.state = counterterm(snap.state, gamma_bar);
    return out;
}

std::vector<double> richardson_weights(std::span<const double> gammas, int order) {
    if (order < 0) throw ContractError("richardson: order must be >= 0");
    const auto n = static_cast<Eigen::Index>(gammas.size());
    if (n < order + 1) throw ContractError("richardson: insufficient points for the order");
    std::vector<double> sorted(gammas.begin(), gammas.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ContractError("richardson: duplicate gamma");
    }
    // Vandermonde V (n x (order+1)); the estimate is the constant coefficient.
    Eigen::MatrixXd V(n, order + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        double p = 1.0;
        for (int j = 0; j <= order; ++j) {
            V(i, j) = p;
            p *= gammas[static_cast<std::size_t>(i)];
        }
    }
    // Row 0 of pinv(V) = e_0^T (V^T V)^{-1} V^T, computed via QR.
    const Eigen::MatrixXd P = V.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(n, n));
    std::vector<double> w(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = P(0, i);
    return w;
}

CVec richardson_extrapolate(std::span<const double> gammas, std::span<const CVec> values,
                            int order) {
    if (gammas.size() != values.size()) {
        throw ContractError("richardson: one value vector per gamma");
    }
    const auto w = richardson_weights(gammas, order);
    const std::size_t L = values.front().size();
    CVec out(L);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].size() != L) throw ContractError("richardson: length mismatch");
        for (std::size_t k = 0; k < L; ++k) out[k] += w[i] * values[i][k];
    }
    return out;
}

FieldState linear_flow(const Rhs& rhs, const FieldState& state, double t) {
    const std::size_t n = state.z.size();
    Matrix J(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    CVec e(n);
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        const CVec col = rhs.jacobian_apply(state, e);
        for (std::size_t i = 0; i < n; ++i) {
            J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
        }
        e[j] = 0.0;
    }
    const Vector z = Eigen::Map<const Vector>(state.z.data(), static_cast<Eigen::Index>(n));
    const Vector out = expm(J * t) * z;
    FieldState next = state;
    next.z.assign(out.data(), out.data() + out.size());
    next.t = state.t + t;
    return next;
}

double l2_distance(std::span<const Complex> a, std::span<const Complex> b) {
    if (a.size() != b.size()) throw ContractError("l2 distance: length mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += std::norm(a[k] - b[k]);
    return std::sqrt(s);
}

std::vector<NoiseSweepRow> noise_sweep(const FieldState& initial, const RhsPtr& base,
                                       const RunConfig& run_cfg, const NoiseConfig& config,
                                       std::span<const double> gammas) {
    validate(config);
    if (run_cfg.save_times.empty()) throw ContractError("noise sweep: no save times");
    const double ratio = config.gamma > 0.0 ? config.gamma_bar / config.gamma : 1.0;

    std::map<double, Trajectory> runs;
    auto get = [&](double g) -> const Trajectory& {
        auto it = runs.find(g);
        if (it == runs.end()) it = runs.emplace(g, run(initial, *noisy_rhs(base, g), run_cfg)).first;
        return it->second;
    };
    const Trajectory& ref = get(0.0);
    for (double g : gammas) get(g);
    for (double g : config.richardson_gammas) get(g);

    std::vector<NoiseSweepRow> rows;
    for (double t : run_cfg.save_times) {
        const CVec& z0 = ref.at_time(t).state.z;
        double rich = 0.0;
        if (!config.richardson_gammas.empty()) {
            std::vector<CVec> vals;
            for (double g : config.richardson_gammas) vals.push_back(get(g).at_time(t).state.z);
            rich = l2_distance(richardson_extrapolate(config.richardson_gammas, vals, config.order),
                               z0);
        }
        for (double g : gammas) {
            const FieldState& noisy = get(g).at_time(t).state;
            NoiseSweepRow r;
            r.gamma = g;
            r.gamma_bar = g * ratio;
            r.t = noisy.t;
            r.l2_error_raw = l2_distance(noisy.z, z0);
            r.l2_error_counterterm = l2_distance(counterterm(noisy, r.gamma_bar).z, z0);
            r.l2_error_richardson = rich;
            rows.push_back(r);
        }
    }
    return rows;
}

void write_noise_csv(std::ostream& os, std::span<const NoiseSweepRow> rows) {
    os << "gamma,gamma_bar,t,l2_error_raw,l2_error_counterterm,l2_error_richardson\n";
    for (const auto& r : rows) {
        os << csv::num(r.gamma) << ',' << csv::num(r.gamma_bar) << ',' << csv::num(r.t) << ','
           << csv::num(r.l2_error_raw) << ',' << csv::num(r.l2_error_counterterm) << ','
           << csv::num(r.l2_error_richardson) << '\n';
    }
}

} // namespace kvn
