#include "kvn/readout.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <thread>

#include "kvn/csv.hpp"
#include "kvn/error.hpp"

namespace kvn {

double sampling_envelope(std::size_t n_shots) {
    if (n_shots < 2) throw ContractError("sampling envelope needs n >= 2");
    return std::sqrt(2.0 / static_cast<double>(n_shots - 1));
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finaliser over a combined key
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

namespace {

void sample_range(std::span<const double> mean, std::span<const double> var, std::size_t n,
                  std::uint64_t seed, std::size_t begin, std::size_t end, ShotStats& out) {
    for (std::size_t k = begin; k < end; ++k) {
        std::mt19937_64 rng(substream_seed(seed, k));
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double sd = std::sqrt(var[k]);
        // Welford
        double m = 0.0, m2 = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double x = mean[k] + sd * gauss(rng);
            const double d = x - m;
            m += d / static_cast<double>(s + 1);
            m2 += d * (x - m);
        }
        out.sample_mean[k] = m;
        out.sample_var[k] = m2 / static_cast<double>(n - 1);
    }
}

} // namespace

ShotStats sample_readout(std::span<const double> mean_field, std::span<const double> var_th,
                         std::size_t n_shots, std::uint64_t seed, unsigned threads) {
    if (n_shots < 2) throw ContractError("sample_readout: need at least 2 shots");
    if (mean_field.size() != var_th.size()) {
        throw ContractError("sample_readout: mean and variance lengths differ");
    }
    for (double v : var_th) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ContractError("sample_readout: variance must be finite and >= 0");
        }
    }
    const std::size_t L = mean_field.size();
    ShotStats st;
    st.n_shots = n_shots;
    st.sample_mean.assign(L, 0.0);
    st.sample_var.assign(L, 0.0);
    st.var_th.assign(var_th.begin(), var_th.end());
    st.envelope = sampling_envelope(n_shots);

    threads = std::max(1u, threads);
    if (threads == 1 || L < 2) {
        sample_range(mean_field, var_th, n_shots, seed, 0, L, st);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (L + threads - 1) / threads;
        for (std::size_t b = 0; b < L; b += chunk) {
            pool.emplace_back(sample_range, mean_field, var_th, n_shots, seed, b,
                              std::min(L, b + chunk), std::ref(st));
        }
        for (auto& t : pool) t.join();
    }

    // Fixed-order reductions keep results bit-identical across thread counts.
    double th_sum = 0.0, em_sum = 0.0, diff2 = 0.0, th2 = 0.0;
    for (std::size_t k = 0; k < L; ++k) {
        th_sum += var_th[k];
        em_sum += st.sample_var[k];
        diff2 += (st.sample_var[k] - var_th[k]) * (st.sample_var[k] - var_th[k]);
        th2 += var_th[k] * var_th[k];
    }
    const double nL = static_cast<double>(std::max<std::size_t>(L, 1));
    st.var_th_mean = th_sum / nL;
    st.var_em_mean = em_sum / nL;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (th_sum > 0.0) {
        st.rel_bias = (st.var_em_mean - st.var_th_mean) / st.var_th_mean;
    } else {
        st.rel_bias = em_sum == 0.0 ? 0.0 : nan;
    }
    if (th2 > 0.0) {
        st.rel_l2 = std::sqrt(diff2) / std::sqrt(th2);
    } else {
        st.rel_l2 = diff2 == 0.0 ? 0.0 : nan;
    }
    return st;
}

std::vector<StatsRow> stats_table(const Trajectory& traj, const VarianceModel& model,
                                  std::size_t n_shots, std::span<const double> times,
                                  std::uint64_t seed, unsigned threads) {
    if (model.kind == VarianceModel::Kind::Constant && !(model.value >= 0.0)) {
        throw ContractError("stats_table: constant variance must be >= 0");
    }
    std::vector<StatsRow> rows;
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        const Snapshot& snap = traj.at_time(times[ti]);
        const auto& s = snap.state;
        RVec mean(s.z.size()), var(s.z.size());
        for (std::size_t k = 0; k < s.z.size(); ++k) {
            mean[k] = s.z[k].real();
            var[k] = model.kind == VarianceModel::Kind::Constant ? model.value : s.var[k];
        }
        const ShotStats st =
            sample_readout(mean, var, n_shots, substream_seed(seed, 1000003ULL + ti), threads);
        rows.push_back({s.t, st.var_th_mean, st.var_em_mean, st.rel_bias, st.rel_l2});
    }
    return rows;
}

void write_stats_csv(std::ostream& os, std::span<const StatsRow> rows) {
    os << "t,var_th_mean,var_em_mean,rel_bias,rel_l2\n";
    for (const auto& r : rows) {
        os << csv::num(r.t) << ',' << csv::num(r.var_th_mean) << ',' << csv::num(r.var_em_mean)
           << ',' << csv::num(r.rel_bias) << ',' << csv::num(r.rel_l2) << '\n';
    }
}

} // namespace kvn
