#include "doctest.h"

#include <cmath>
#include <numeric>
#include <sstream>

#include "kvn/error.hpp"
#include "kvn/readout.hpp"

using namespace kvn;

TEST_CASE("sampling envelope") {
    CHECK(sampling_envelope(2) == doctest::Approx(std::sqrt(2.0)));
    CHECK(sampling_envelope(10000) == doctest::Approx(0.014143));
    CHECK_THROWS_AS(sampling_envelope(1), ContractError);
}

TEST_CASE("readout statistics stay within the envelope") {
    const std::size_t L = 64;
    RVec mean(L), var(L);
    for (std::size_t k = 0; k < L; ++k) {
        mean[k] = std::sin(0.1 * static_cast<double>(k));
        var[k] = 0.5 + 0.01 * static_cast<double>(k);
    }
    const auto st = sample_readout(mean, var, 10000, 7);
    CHECK(st.n_shots == 10000);
    CHECK(std::abs(st.rel_bias) < 3.0 * st.envelope);
    CHECK(st.rel_l2 > 0.5 * st.envelope);
    CHECK(st.rel_l2 < 3.0 * st.envelope);
    for (std::size_t k = 0; k < L; ++k) {
        CHECK(std::abs(st.sample_mean[k] - mean[k]) < 5.0 * std::sqrt(var[k] / 10000.0));
    }
}

TEST_CASE("readout is deterministic and thread independent") {
    RVec mean(37, 1.5), var(37, 2.0);
    const auto a = sample_readout(mean, var, 500, 99, 1);
    const auto b = sample_readout(mean, var, 500, 99, 4);
    const auto c = sample_readout(mean, var, 500, 100, 1);
    CHECK(a.sample_var == b.sample_var);
    CHECK(a.sample_mean == b.sample_mean);
    CHECK(a.rel_l2 == b.rel_l2);
    CHECK(a.sample_var != c.sample_var);
    CHECK(substream_seed(1, 0) != substream_seed(1, 1));
    CHECK(substream_seed(1, 0) != substream_seed(2, 0));
}

TEST_CASE("zero variance gives exact readout") {
    RVec mean{0.25, -1.0, 3.0}, var(3, 0.0);
    const auto st = sample_readout(mean, var, 100, 1);
    CHECK(st.sample_mean == mean);
    for (double v : st.sample_var) CHECK(v == 0.0);
    CHECK(st.rel_bias == 0.0);
    CHECK(st.rel_l2 == 0.0);
}

TEST_CASE("readout contract errors") {
    RVec mean(3, 0.0), var(3, 1.0);
    CHECK_THROWS_AS(sample_readout(mean, var, 1, 0), ContractError);
    CHECK_THROWS_AS(sample_readout(mean, RVec(2, 1.0), 10, 0), ContractError);
    CHECK_THROWS_AS(sample_readout(mean, RVec{1.0, -0.1, 1.0}, 10, 0), ContractError);
    CHECK_THROWS_AS(sample_readout(mean, RVec{1.0, NAN, 1.0}, 10, 0), ContractError);
}

TEST_CASE("stats table from a trajectory") {
    const auto g = GridSpec::line(16, 1.0 / 16);
    Trajectory traj;
    for (double t : {0.0, 0.5}) {
        auto s = make_field(g, CVec(16, Complex(t, 0.0)), RVec(16, 2.0 - t));
        s.t = t;
        traj.snapshots.push_back({s, {}});
    }
    const RVec times{0.0, 0.5};
    const auto rows = stats_table(traj, VarianceModel::propagated(), 2000, times, 3);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].var_th_mean == doctest::Approx(2.0));
    CHECK(rows[1].var_th_mean == doctest::Approx(1.5));
    CHECK(rows[1].t == 0.5);
    for (const auto& r : rows) {
        CHECK(std::abs(r.rel_bias) < 4.0 * sampling_envelope(2000) / std::sqrt(16.0) + 1e-12);
    }

    const auto fixed = stats_table(traj, VarianceModel::constant(3.0), 2000, times, 3);
    CHECK(fixed[0].var_th_mean == doctest::Approx(3.0));
    CHECK(fixed[1].var_th_mean == doctest::Approx(3.0));
    CHECK_THROWS(stats_table(traj, VarianceModel::constant(-1.0), 10, times, 3));

    std::ostringstream os;
    write_stats_csv(os, rows);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "t,var_th_mean,var_em_mean,rel_bias,rel_l2");
    int n = 0;
    while (std::getline(is, line)) ++n;
    CHECK(n == 2);
}
