#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kvn/evolution.hpp"
#include "kvn/fock.hpp"
#include "kvn/noise.hpp"
#include "kvn/readout.hpp"

namespace kvn {

enum class Experiment { Burgers1d, Fisher2d, Cavity, KrausCompile, RankReport, Stencil, NoiseSweep };

std::string_view experiment_name(Experiment e);
// "solve", "compile" or "report"
std::string_view experiment_verb(Experiment e);

// gaussian: offset + amplitude exp(-|x - center|^2 / (2 width^2))
// sine:     offset + amplitude sin(2 pi x / length), 1D only
// constant: offset
struct InitialProfile {
    std::string shape = "gaussian";
    double amplitude = 1.0;
    double width = 0.1;
    double offset = 0.0;
    std::array<double, 2> center{0.5, 0.0};
    double variance = 0.0;
};

struct ReadoutConfig {
    bool enabled = true;
    std::size_t shots = 10000;
    VarianceModel model = VarianceModel::propagated();
};

struct BurgersExperiment {
    std::size_t n_points = 128;
    double length = 1.0;
    double reynolds = 10.0;
    std::string boundary = "periodic";  // or "dirichlet"
    InitialProfile initial;
    RunConfig run;
    ReadoutConfig readout;
};

struct FisherExperiment {
    std::size_t nx = 64, ny = 64;
    double lo = -1.0, hi = 1.0;
    double peclet = 200.0;
    double damkohler = 1.0;
    std::string boundary = "periodic";  // or "dirichlet"
    double boundary_value = 0.0;
    InitialProfile initial;
    RunConfig run;
    ReadoutConfig readout;
};

struct KrausExperiment {
    std::string rhs = "burgers";  // burgers, generic-linear, zero
    std::size_t sites = 4;
    int levels = 4;
    double reynolds = 10.0;
    double kappa = 1.0;
    std::string boundary = "periodic";
    double dt = 0.01;
    std::size_t rank = 16;
    std::size_t probes = 4;
    double tolerance = 1e-9;
    // Multiplies every complement operator; anything but 1 breaks completeness.
    double corrupt_scale = 1.0;
    std::size_t dim_cap = kDefaultDimCap;
};

struct RankExperiment {
    std::vector<std::uint64_t> lattice_sizes{8, 16, 32, 64, 128, 256, 512, 1024};
    std::vector<int> dims{1};
    std::vector<int> deriv_orders{2};
    std::vector<int> degrees{1};
    bool self_coupling = false;
};

struct StencilCase {
    int deriv_order = 2;
    int radius = 1;
};

struct StencilExperiment {
    std::vector<StencilCase> cases;
};

struct NoiseExperiment {
    BurgersExperiment model;  // readout unused
    NoiseConfig noise;
    std::vector<double> gammas{0.0, 0.05, 0.1, 0.2};
};

struct ExperimentConfig {
    Experiment experiment = Experiment::Burgers1d;
    std::uint64_t seed = 0;
    std::string output_dir;
    std::string source;  // canonical JSON of the effective configuration

    BurgersExperiment burgers;
    FisherExperiment fisher;
    CavityConfig cavity;
    KrausExperiment kraus;
    RankExperiment rank;
    StencilExperiment stencil;
    NoiseExperiment noise;
};

// Throws ConfigError on malformed JSON, unknown keys, wrong types or values
// outside the documented ranges.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& file);

// Rewrites seed / output_dir and refreshes `source` accordingly.
void set_seed(ExperimentConfig& config, std::uint64_t seed);
void set_output_dir(ExperimentConfig& config, const std::string& dir);

std::uint64_t fnv1a(std::string_view bytes);
// 16 hex digits of fnv1a(source)
std::string config_hash(const ExperimentConfig& config);

} // namespace kvn
