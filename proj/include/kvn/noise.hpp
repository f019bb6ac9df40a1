#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "kvn/evolution.hpp"
#include "kvn/rhs.hpp"

namespace kvn {

struct NoiseConfig {
    double gamma = 0.0;      // true loss rate
    double gamma_bar = 0.0;  // calibrated estimate used by the counterterm
    std::vector<double> richardson_gammas;
    int order = 1;
};

void validate(const NoiseConfig& config);

// F'(z) = F(z) - (gamma / 2) z. The loss drift is reported in the reaction part.
class NoisyRhs final : public Rhs {
public:
    NoisyRhs(RhsPtr base, double gamma);
    CVec evaluate(const FieldState& state) const override;
    CVec jacobian_apply(const FieldState& state, std::span<const Complex> w) const override;
    RhsParts parts(const FieldState& state) const override;
    std::string name() const override;

    double gamma() const noexcept { return gamma_; }
    const Rhs& base() const noexcept { return *base_; }

private:
    RhsPtr base_;
    double gamma_;
};

// gamma == 0 hands back `base` itself.
RhsPtr noisy_rhs(RhsPtr base, double gamma);

// z(t) * exp(gamma_bar t / 2) per point; variances are left as they are.
FieldState counterterm(const FieldState& state, double gamma_bar);
Trajectory counterterm(const Trajectory& noisy, double gamma_bar);

// Weights w_i with sum_i w_i p(gamma_i) = p(0) for every polynomial p of
// degree <= order; least squares when more than order + 1 points are given.
std::vector<double> richardson_weights(std::span<const double> gammas, int order);
CVec richardson_extrapolate(std::span<const double> gammas, std::span<const CVec> values,
                            int order);

// exp(t J) z for a linear F, with J assembled column by column from the
// Jacobian at `state`. The result is stamped with time state.t + t.
FieldState linear_flow(const Rhs& rhs, const FieldState& state, double t);

double l2_distance(std::span<const Complex> a, std::span<const Complex> b);

struct NoiseSweepRow {
    double gamma = 0.0;
    double gamma_bar = 0.0;
    double t = 0.0;
    double l2_error_raw = 0.0;
    double l2_error_counterterm = 0.0;
    double l2_error_richardson = 0.0;
};

// Runs the noiseless reference, every gamma in `gammas` and every rate in
// config.richardson_gammas, and compares them at run.save_times. The
// counterterm for rate gamma uses gamma * (gamma_bar / gamma) from `config`
// (gamma_bar = gamma when config.gamma is zero). Richardson extrapolates the
// raw noisy amplitudes and is the same for every row at a given time.
std::vector<NoiseSweepRow> noise_sweep(const FieldState& initial, const RhsPtr& base,
                                       const RunConfig& run, const NoiseConfig& config,
                                       std::span<const double> gammas);

void write_noise_csv(std::ostream& os, std::span<const NoiseSweepRow> rows);

} // namespace kvn
