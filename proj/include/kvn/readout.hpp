#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "kvn/evolution.hpp"
#include "kvn/grid.hpp"

namespace kvn {

struct ShotStats {
    std::size_t n_shots = 0;
    RVec sample_mean;
    RVec sample_var;  // unbiased, divisor n - 1
    RVec var_th;
    double var_th_mean = 0.0;
    double var_em_mean = 0.0;
    double rel_bias = 0.0;  // (mean Var_em - mean Var_th) / mean Var_th
    double rel_l2 = 0.0;    // ||Var_em - Var_th||_2 / ||Var_th||_2
    double envelope = 0.0;  // sqrt(2 / (n - 1))
};

double sampling_envelope(std::size_t n_shots);

// Seed of the independent stream used for grid point `index`.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index);

// Draws n i.i.d. Gaussian shots per point with the given mean and variance.
// Each point uses its own substream, so results do not depend on `threads`.
ShotStats sample_readout(std::span<const double> mean_field, std::span<const double> var_th,
                         std::size_t n_shots, std::uint64_t seed, unsigned threads = 1);

// Where the theoretical readout variance comes from.
struct VarianceModel {
    enum class Kind { Propagated, Constant } kind = Kind::Propagated;
    double value = 0.0;  // Constant only

    static VarianceModel propagated() { return {}; }
    static VarianceModel constant(double v) { return {Kind::Constant, v}; }
};

struct StatsRow {
    double t = 0.0;
    double var_th_mean = 0.0;
    double var_em_mean = 0.0;
    double rel_bias = 0.0;
    double rel_l2 = 0.0;
};

// One row per requested time; the real part of z is the sampled mean.
std::vector<StatsRow> stats_table(const Trajectory& trajectory, const VarianceModel& model,
                                  std::size_t n_shots, std::span<const double> times,
                                  std::uint64_t seed, unsigned threads = 1);

void write_stats_csv(std::ostream& os, std::span<const StatsRow> rows);

} // namespace kvn
