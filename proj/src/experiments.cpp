#include "kvn/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "kvn/analytics.hpp"
#include "kvn/csv.hpp"
#include "kvn/error.hpp"
#include "kvn/fock.hpp"
#include "kvn/noise.hpp"
#include "kvn/readout.hpp"

namespace kvn {

namespace {

namespace fs = std::filesystem;

double profile_at(const InitialProfile& p, double x, double y, double length, int dims) {
    if (p.shape == "constant") return p.offset;
    if (p.shape == "sine") return p.offset + p.amplitude * std::sin(2.0 * std::numbers::pi * x / length);
    double r2 = (x - p.center[0]) * (x - p.center[0]);
    if (dims == 2) r2 += (y - p.center[1]) * (y - p.center[1]);
    return p.offset + p.amplitude * std::exp(-r2 / (2.0 * p.width * p.width));
}

class Writer {
public:
    Writer(fs::path dir, ExperimentOutcome& out) : dir_(std::move(dir)), out_(out) {}

    template <class F>
    void file(const std::string& name, F&& body) {
        const fs::path path = dir_ / name;
        std::ofstream os(path);
        if (!os) throw IoError("cannot open " + path.string() + " for writing");
        body(os);
        os.flush();
        if (!os) throw IoError("write failed for " + path.string());
        out_.artifacts.push_back(name);
    }

private:
    fs::path dir_;
    ExperimentOutcome& out_;
};

std::string snapshot_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "field_%02zu.csv", k);
    return buf;
}

void write_run_summary(std::ostream& os, const Trajectory& traj) {
    os << "t,dt,re_sigma,re_trArho,p_a,cum_p_a\n";
    double cum = 1.0;
    for (const auto& s : traj.steps) {
        cum *= s.p_a;
        os << csv::num(s.t) << ',' << csv::num(s.dt_used) << ',' << csv::num(s.sigma_real) << ','
           << csv::num(s.tr_A_rho.real()) << ',' << csv::num(s.p_a) << ',' << csv::num(cum)
           << '\n';
    }
}

void add_run_metrics(ExperimentOutcome& out, const Trajectory& traj) {
    out.metrics.emplace_back("steps", static_cast<double>(traj.steps.size()));
    out.metrics.emplace_back("cumulative_p_a", traj.cumulative_p_a);
    out.metrics.emplace_back("p_a_clip_events", static_cast<double>(traj.p_a_clip_events));
    out.metrics.emplace_back("var_clamp_events", static_cast<double>(traj.var_clamp_events));
}

// Evolves, then writes snapshots, the run summary and (optionally) the stats table.
void solve_field(const FieldState& initial, const Rhs& rhs, const RunConfig& run_cfg,
                 const ReadoutConfig& readout, const ExperimentConfig& config, unsigned threads,
                 Writer& w, ExperimentOutcome& out) {
    Trajectory traj;
    try {
        traj = run(initial, rhs, run_cfg);
    } catch (const RunDivergence& e) {
        w.file("last_valid.csv", [&](std::ostream& os) { write_field_csv(os, e.last_valid()); });
        throw;
    }
    for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
        w.file(snapshot_name(k),
               [&](std::ostream& os) { write_field_csv(os, traj.snapshots[k].state); });
    }
    w.file("run_summary.csv", [&](std::ostream& os) { write_run_summary(os, traj); });
    add_run_metrics(out, traj);
    if (readout.enabled) {
        std::vector<double> times;
        for (const auto& s : traj.snapshots) times.push_back(s.state.t);
        const auto rows =
            stats_table(traj, readout.model, readout.shots, times, config.seed, threads);
        w.file("stats.csv", [&](std::ostream& os) { write_stats_csv(os, rows); });
        double worst = 0.0;
        for (const auto& r : rows) worst = std::max(worst, r.rel_l2);
        out.metrics.emplace_back("max_rel_l2", worst);
        out.metrics.emplace_back("envelope", sampling_envelope(readout.shots));
    }
}

void write_scalar_csv(std::ostream& os, const GridSpec& g, const RVec& v, const char* name) {
    os << "i,j,x,y," << name << '\n';
    for (std::size_t k = 0; k < g.size(); ++k) {
        const auto [i, j] = g.coords(k);
        os << i << ',' << j << ',' << csv::num(g.x(k)) << ',' << csv::num(g.y(k)) << ','
           << csv::num(v[k]) << '\n';
    }
}

void run_cavity(const ExperimentConfig& c, Writer& w, ExperimentOutcome& out) {
    const auto res = cavity_solve(c.cavity);
    w.file("psi.csv", [&](std::ostream& os) { write_field_csv(os, res.psi); });
    w.file("omega.csv", [&](std::ostream& os) { write_field_csv(os, res.omega); });
    w.file("u.csv", [&](std::ostream& os) { write_scalar_csv(os, res.psi.grid, res.u, "u"); });
    w.file("v.csv", [&](std::ostream& os) { write_scalar_csv(os, res.psi.grid, res.v, "v"); });
    const auto wall = wall_velocity_check(res.psi);
    out.metrics.emplace_back("outer_steps", static_cast<double>(res.outer_steps));
    out.metrics.emplace_back("inner_iterations", static_cast<double>(res.inner_iterations));
    out.metrics.emplace_back("last_delta", res.last_delta);
    out.metrics.emplace_back("poisson_residual", res.poisson_residual);
    out.metrics.emplace_back("lid_error", wall.lid_error);
    out.metrics.emplace_back("slip_error", wall.slip_error);
    out.metrics.emplace_back("lid_error_core", wall.lid_error_core);
    out.metrics.emplace_back("slip_error_core", wall.slip_error_core);
}

void run_kraus(const ExperimentConfig& c, Writer& w, ExperimentOutcome& out,
               const fs::path& dir) {
    const KrausSet ks = build_kraus(c.kraus);
    const double completeness = completeness_error(ks.ops);
    out.metrics.emplace_back("dim", static_cast<double>(ks.ops.front().rows()));
    out.metrics.emplace_back("n_kraus", static_cast<double>(ks.ops.size()));
    out.metrics.emplace_back("shift", ks.shift);
    out.metrics.emplace_back("completeness_error", completeness);

    nlohmann::json report;
    report["completeness_error"] = completeness;
    report["completeness_tolerance"] = kCompletenessTol;
    report["shift"] = ks.shift;
    auto write_report = [&] {
        w.file("verification.json", [&](std::ostream& os) { os << report.dump(2) << '\n'; });
    };
    ChannelTree tree;
    try {
        tree = compile_tree(ks);
    } catch (const ChannelError& e) {
        report["ok"] = false;
        report["failures"] = {e.what()};
        write_report();
        throw;
    }
    export_tree(tree, dir / "tree");
    for (const auto& [bits, U] : tree.nodes) {
        const std::string base = bits.empty() ? "U_root" : "U_" + bits;
        out.artifacts.push_back("tree/" + base + ".bin");
        out.artifacts.push_back("tree/" + base + "_abs.csv");
    }
    out.artifacts.push_back("tree/manifest.json");

    const auto probes = probe_states(tree.dim, c.kraus.probes, c.seed);
    const ChannelCheck chk = verify_channel(tree, ks, probes, c.kraus.tolerance);
    const double zero_path =
        (tree.path_product(std::string(static_cast<std::size_t>(tree.depth), '0')) - ks.ops[0])
            .norm();
    report["ok"] = chk.ok();
    report["depth"] = tree.depth;
    report["nodes"] = tree.nodes.size();
    report["trace_error"] = chk.trace_error;
    report["tree_trace_error"] = chk.tree_trace_error;
    report["path_error"] = chk.path_error;
    report["zero_path_error"] = zero_path;
    report["p_a_error"] = chk.p_a_error;
    report["state_error"] = chk.state_error;
    report["min_probability"] = chk.min_probability;
    report["unitarity_error"] = chk.unitarity_error;
    report["failures"] = chk.failures;
    write_report();
    out.metrics.emplace_back("depth", tree.depth);
    out.metrics.emplace_back("nodes", static_cast<double>(tree.nodes.size()));
    out.metrics.emplace_back("unitarity_error", chk.unitarity_error);
    out.metrics.emplace_back("path_error", chk.path_error);
    out.metrics.emplace_back("zero_path_error", zero_path);
    if (!chk.ok()) {
        std::string msg = "channel verification failed:";
        for (const auto& f : chk.failures) msg += " " + f + ";";
        throw ChannelError(msg);
    }
}

void run_rank(const ExperimentConfig& c, Writer& w, ExperimentOutcome& out) {
    std::size_t rows = 0;
    w.file("rank_report.csv", [&](std::ostream& os) {
        os << "L,d,K,r,R,self_coupling,S,S_eff,edges,rank_linear,monomials_per_site,rank_poly,"
              "depth\n";
        for (int d : c.rank.dims)
            for (int K : c.rank.deriv_orders)
                for (int r : c.rank.degrees)
                    for (auto L : c.rank.lattice_sizes) {
                        const auto x = rank_analytics(L, d, K, r, c.rank.self_coupling);
                        os << x.lattice_size << ',' << x.dims << ',' << x.deriv_order << ','
                           << x.degree << ',' << x.radius << ',' << (x.self_coupling ? 1 : 0)
                           << ',' << x.stencil_size << ',' << x.effective_stencil << ','
                           << x.edges << ',' << x.rank_linear << ',' << x.monomials_per_site
                           << ',' << x.rank_poly << ',' << x.depth << '\n';
                        ++rows;
                    }
    });
    out.metrics.emplace_back("rows", static_cast<double>(rows));
}

void run_stencil(const ExperimentConfig& c, Writer& w, ExperimentOutcome& out) {
    struct Row {
        StencilCase sc;
        bool feasible;
        std::vector<double> coeffs;
        double residual;
    };
    std::vector<Row> rows;
    for (const auto& sc : c.stencil.cases) {
        Row r{sc, true, {}, 0.0};
        try {
            r.coeffs = stencil_coefficients(sc.deriv_order, sc.radius);
            r.residual = moment_residual(r.coeffs, sc.deriv_order);
        } catch (const ContractError&) {
            r.feasible = false;
        }
        rows.push_back(std::move(r));
    }
    w.file("stencil_summary.csv", [&](std::ostream& os) {
        os << "K,R,feasible,moment_residual,coefficients\n";
        for (const auto& r : rows) {
            os << r.sc.deriv_order << ',' << r.sc.radius << ',' << (r.feasible ? 1 : 0) << ','
               << (r.feasible ? csv::num(r.residual) : std::string()) << ',';
            for (std::size_t i = 0; i < r.coeffs.size(); ++i) {
                os << (i ? " " : "") << csv::num(r.coeffs[i]);
            }
            os << '\n';
        }
    });
    w.file("stencil_coefficients.csv", [&](std::ostream& os) {
        os << "K,R,m,coefficient\n";
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.coeffs.size(); ++i) {
                os << r.sc.deriv_order << ',' << r.sc.radius << ','
                   << static_cast<int>(i) - r.sc.radius << ',' << csv::num(r.coeffs[i]) << '\n';
            }
        }
    });
    std::size_t infeasible = 0;
    for (const auto& r : rows) infeasible += r.feasible ? 0 : 1;
    out.metrics.emplace_back("cases", static_cast<double>(rows.size()));
    out.metrics.emplace_back("infeasible", static_cast<double>(infeasible));
}

void run_noise(const ExperimentConfig& c, Writer& w, ExperimentOutcome& out) {
    const auto& n = c.noise;
    const FieldState init = burgers_initial(n.model);
    const RhsPtr base = std::make_shared<BurgersRhs>(n.model.reynolds);
    const auto rows = noise_sweep(init, base, n.model.run, n.noise, n.gammas);
    w.file("noise_sweep.csv", [&](std::ostream& os) { write_noise_csv(os, rows); });
    out.metrics.emplace_back("rows", static_cast<double>(rows.size()));
}

} // namespace

FieldState burgers_initial(const BurgersExperiment& c) {
    const double dx = c.length / static_cast<double>(c.n_points);
    auto at = [&](double x) { return profile_at(c.initial, x, 0.0, c.length, 1); };
    Boundary b = Boundary::periodic();
    if (c.boundary == "dirichlet") {
        b = Boundary::dirichlet({Complex(at(-dx)), Complex(at(c.length)), Complex{}, Complex{}});
    }
    const auto g = GridSpec::line(c.n_points, dx, 0.0, b);
    CVec z(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) z[k] = at(g.x(k));
    return make_field(g, std::move(z), RVec(g.size(), c.initial.variance));
}

FieldState fisher_initial(const FisherExperiment& c) {
    const Boundary b = c.boundary == "dirichlet" ? Boundary::dirichlet(Complex(c.boundary_value))
                                                 : Boundary::periodic();
    const auto g = GridSpec::cell_centered(c.nx, c.ny, c.lo, c.hi, b);
    CVec z(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        z[k] = profile_at(c.initial, g.x(k), g.y(k), c.hi - c.lo, 2);
    }
    return make_field(g, std::move(z), RVec(g.size(), c.initial.variance));
}

KrausSet build_kraus(const KrausExperiment& c) {
    const auto space = build_fock(static_cast<int>(c.sites), c.levels, c.dim_cap);
    Matrix A;
    if (c.rhs == "zero") {
        A = Matrix::Zero(static_cast<Eigen::Index>(space.total_dim),
                         static_cast<Eigen::Index>(space.total_dim));
    } else {
        const Boundary b =
            c.boundary == "dirichlet" ? Boundary::dirichlet(Complex{}) : Boundary::periodic();
        const auto g = GridSpec::line(c.sites, 1.0 / static_cast<double>(c.sites), 0.0, b);
        RhsParams p;
        p.reynolds = c.reynolds;
        p.kappa = c.kappa;
        const auto spec = rhs_to_spec(c.rhs, g, p);
        A = assemble_generator(space, spec, SiteMap::identity(c.sites)).A;
    }
    KrausSet ks = kraus_pair(A, c.dt);
    if (c.rank > 2) ks = kraus_split(ks, c.rank);
    for (std::size_t i = 1; i < ks.ops.size(); ++i) ks.ops[i] *= c.corrupt_scale;
    return ks;
}

ExperimentOutcome run_experiment(const ExperimentConfig& c, const fs::path& dir,
                                 unsigned threads) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create output directory " + dir.string());
    }
    ExperimentOutcome out;
    Writer w(dir, out);
    switch (c.experiment) {
    case Experiment::Burgers1d: {
        const BurgersRhs rhs(c.burgers.reynolds);
        solve_field(burgers_initial(c.burgers), rhs, c.burgers.run, c.burgers.readout, c,
                    threads, w, out);
        break;
    }
    case Experiment::Fisher2d: {
        const FisherRhs rhs(c.fisher.peclet, c.fisher.damkohler, VelocityField::rotational());
        solve_field(fisher_initial(c.fisher), rhs, c.fisher.run, c.fisher.readout, c, threads,
                    w, out);
        break;
    }
    case Experiment::Cavity: run_cavity(c, w, out); break;
    case Experiment::KrausCompile: run_kraus(c, w, out, dir); break;
    case Experiment::RankReport: run_rank(c, w, out); break;
    case Experiment::Stencil: run_stencil(c, w, out); break;
    case Experiment::NoiseSweep: run_noise(c, w, out); break;
    }
    return out;
}

void write_manifest(const ExperimentConfig& c, const ExperimentOutcome& outcome,
                    const fs::path& dir, const std::string& timestamp) {
    nlohmann::json m;
    m["experiment"] = std::string(experiment_name(c.experiment));
    m["verb"] = std::string(experiment_verb(c.experiment));
    m["config"] = nlohmann::json::parse(c.source);
    m["config_hash"] = config_hash(c);
    m["seed"] = c.seed;
    m["timestamp"] = timestamp;
    m["artifacts"] = outcome.artifacts;
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& [k, v] : outcome.metrics) metrics[k] = v;
    m["metrics"] = metrics;
    const fs::path path = dir / "manifest.json";
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << m.dump(2) << '\n';
    if (!os) throw IoError("write failed for " + path.string());
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace kvn
