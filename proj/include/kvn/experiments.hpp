#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "kvn/channel.hpp"
#include "kvn/config.hpp"

namespace kvn {

struct ExperimentOutcome {
    std::vector<std::string> artifacts;  // relative to the output directory
    std::vector<std::pair<std::string, double>> metrics;
};

FieldState burgers_initial(const BurgersExperiment& config);
FieldState fisher_initial(const FisherExperiment& config);
// Kraus set of one step for the configured generator, split to `rank`.
KrausSet build_kraus(const KrausExperiment& config);

// Runs the configured experiment and writes its artifacts into `out_dir`.
// Errors propagate: ConfigError/ContractError, DivergenceError,
// ConvergenceError, IoError and ChannelError (verification failure).
ExperimentOutcome run_experiment(const ExperimentConfig& config,
                                 const std::filesystem::path& out_dir, unsigned threads = 1);

// manifest.json: effective config, hash, seed, artifacts, metrics and the
// timestamp (the only field that differs between identical runs).
void write_manifest(const ExperimentConfig& config, const ExperimentOutcome& outcome,
                    const std::filesystem::path& out_dir, const std::string& timestamp);

std::string utc_timestamp();

} // namespace kvn
