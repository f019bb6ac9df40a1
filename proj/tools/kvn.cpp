#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "kvn/config.hpp"
#include "kvn/error.hpp"
#include "kvn/evolution.hpp"
#include "kvn/experiments.hpp"

namespace {

enum Exit : int { Ok = 0, ConfigFail = 2, Diverged = 3, IoFail = 4, VerifyFail = 5 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    unsigned threads = 1;
};

int execute(const std::string& verb, const Options& opt) {
    kvn::ExperimentConfig cfg;
    try {
        cfg = kvn::load_config(opt.config);
    } catch (const kvn::Error& e) {
        std::cerr << "kvn: " << e.what() << '\n';
        return ConfigFail;
    }
    if (kvn::experiment_verb(cfg.experiment) != verb) {
        std::cerr << "kvn: experiment '" << kvn::experiment_name(cfg.experiment)
                  << "' runs under '" << kvn::experiment_verb(cfg.experiment) << "', not '"
                  << verb << "'\n";
        return ConfigFail;
    }
    if (opt.seed) kvn::set_seed(cfg, *opt.seed);
    // --out beats KVN_OUT_DIR beats output_dir in the config
    if (opt.out) {
        kvn::set_output_dir(cfg, *opt.out);
    } else if (const char* env = std::getenv("KVN_OUT_DIR"); env && *env) {
        kvn::set_output_dir(cfg, env);
    }
    if (cfg.output_dir.empty()) {
        kvn::set_output_dir(cfg, "out/" + std::string(kvn::experiment_name(cfg.experiment)));
    }

    try {
        const auto outcome = kvn::run_experiment(cfg, cfg.output_dir, opt.threads);
        kvn::write_manifest(cfg, outcome, cfg.output_dir, kvn::utc_timestamp());
        std::cout << kvn::experiment_name(cfg.experiment) << ": wrote "
                  << outcome.artifacts.size() + 1 << " files to " << cfg.output_dir << '\n';
        for (const auto& [k, v] : outcome.metrics) std::cout << "  " << k << " = " << v << '\n';
        return Ok;
    } catch (const kvn::ChannelError& e) {
        std::cerr << "kvn: " << e.what() << '\n';
        return VerifyFail;
    } catch (const kvn::DivergenceError& e) {
        std::cerr << "kvn: " << e.what() << '\n';
        return Diverged;
    } catch (const kvn::ConvergenceError& e) {
        std::cerr << "kvn: " << e.what() << '\n';
        return Diverged;
    } catch (const kvn::IoError& e) {
        std::cerr << "kvn: " << e.what() << '\n';
        return IoFail;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "kvn: " << e.what() << '\n';
        return IoFail;
    } catch (const kvn::Error& e) {
        std::cerr << "kvn: " << e.what() << '\n';
        return ConfigFail;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coherent-state KvN simulator: field solvers, channel compilation, reports"};
    app.require_subcommand(1);
    Options opt;
    std::string verb;
    for (const char* name : {"solve", "compile", "report"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", opt.config, "experiment config (JSON)")->required();
        sub->add_option("--seed", opt.seed, "overrides the config seed");
        sub->add_option("--out", opt.out, "output directory (overrides KVN_OUT_DIR)");
        sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->callback([&verb, name] { verb = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Ok : ConfigFail;
    }
    return execute(verb, opt);
}
