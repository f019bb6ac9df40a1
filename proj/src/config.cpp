#include "kvn/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "json.hpp"

#include "kvn/error.hpp"

namespace kvn {

using nlohmann::json;

std::string_view experiment_name(Experiment e) {
    switch (e) {
    case Experiment::Burgers1d: return "burgers1d";
    case Experiment::Fisher2d: return "fisher2d";
    case Experiment::Cavity: return "cavity";
    case Experiment::KrausCompile: return "kraus-compile";
    case Experiment::RankReport: return "rank-report";
    case Experiment::Stencil: return "stencil";
    case Experiment::NoiseSweep: return "noise-sweep";
    }
    return "?";
}

std::string_view experiment_verb(Experiment e) {
    switch (e) {
    case Experiment::Burgers1d:
    case Experiment::Fisher2d:
    case Experiment::Cavity: return "solve";
    case Experiment::KrausCompile: return "compile";
    default: return "report";
    }
}

namespace {

// Object reader that remembers which keys were consumed so the rest can be
// rejected as unknown.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("", "must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    double number(const std::string& key, double def, double lo = -HUGE_VAL,
                  double hi = HUGE_VAL) {
        const json* v = take(key);
        if (!v) return def;
        if (!v->is_number()) fail(key, "must be a number");
        const double x = v->get<double>();
        if (!std::isfinite(x) || x < lo || x > hi) fail(key, "out of range");
        return x;
    }

    double positive(const std::string& key, double def) {
        const double x = number(key, def);
        if (!(x > 0.0)) fail(key, "must be > 0");
        return x;
    }

    std::uint64_t integer(const std::string& key, std::uint64_t def, std::uint64_t lo = 0,
                          std::uint64_t hi = UINT64_MAX) {
        const json* v = take(key);
        if (!v) return def;
        if (!v->is_number_unsigned()) fail(key, "must be a nonnegative integer");
        const auto x = v->get<std::uint64_t>();
        if (x < lo || x > hi) fail(key, "out of range");
        return x;
    }

    bool boolean(const std::string& key, bool def) {
        const json* v = take(key);
        if (!v) return def;
        if (!v->is_boolean()) fail(key, "must be true or false");
        return v->get<bool>();
    }

    std::string text(const std::string& key, const std::string& def) {
        const json* v = take(key);
        if (!v) return def;
        if (!v->is_string()) fail(key, "must be a string");
        return v->get<std::string>();
    }

    std::string choice(const std::string& key, const std::string& def,
                       std::initializer_list<const char*> allowed) {
        const json* v = take(key);
        if (!v) return def;
        if (!v->is_string()) fail(key, "must be a string");
        const auto s = v->get<std::string>();
        for (const char* a : allowed) {
            if (s == a) return s;
        }
        std::string list;
        for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
        fail(key, "must be one of: " + list);
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> def) {
        const json* v = take(key);
        if (!v) return def;
        if (!v->is_array()) fail(key, "must be an array of numbers");
        std::vector<double> out;
        for (const auto& e : *v) {
            if (!e.is_number() || !std::isfinite(e.get<double>())) {
                fail(key, "must be an array of numbers");
            }
            out.push_back(e.get<double>());
        }
        return out;
    }

    template <class T>
    std::vector<T> integers(const std::string& key, std::vector<T> def) {
        const json* v = take(key);
        if (!v) return def;
        if (!v->is_array()) fail(key, "must be an array of integers");
        std::vector<T> out;
        for (const auto& e : *v) {
            if (!e.is_number_unsigned()) fail(key, "must be an array of positive integers");
            out.push_back(static_cast<T>(e.get<std::uint64_t>()));
        }
        return out;
    }

    std::optional<Reader> object(const std::string& key) {
        const json* v = take(key);
        if (!v) return std::nullopt;
        return Reader(*v, join(key));
    }

    const json* array(const std::string& key) {
        const json* v = take(key);
        if (v && !v->is_array()) fail(key, "must be an array");
        return v;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) fail(it.key(), "unknown key");
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw ConfigError("config: " + join(key) + ": " + what);
    }

    std::string join(const std::string& key) const {
        if (key.empty()) return path_.empty() ? "<root>" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    const json* take(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class F>
void checked(const Reader& r, const std::string& key, F&& f) {
    try {
        f();
    } catch (const ContractError& e) {
        r.fail(key, e.what());
    }
}

InitialProfile read_initial(Reader& parent, int dims) {
    InitialProfile p;
    if (dims == 2) p.center = {0.0, 0.0};
    auto r = parent.object("initial");
    if (!r) return p;
    p.shape = r->choice("shape", p.shape, {"gaussian", "sine", "constant"});
    if (p.shape == "sine" && dims != 1) r->fail("shape", "sine is 1D only");
    p.amplitude = r->number("amplitude", p.amplitude);
    p.width = r->positive("width", p.width);
    p.offset = r->number("offset", p.offset);
    p.variance = r->number("variance", p.variance, 0.0);
    if (r->has("center")) {
        const auto c = r->numbers("center", {});
        if (c.size() != static_cast<std::size_t>(dims)) {
            r->fail("center", "needs " + std::to_string(dims) + " coordinates");
        }
        p.center[0] = c[0];
        if (dims == 2) p.center[1] = c[1];
    }
    r->finish();
    return p;
}

RunConfig read_run(Reader& parent) {
    RunConfig c;
    auto r = parent.object("run");
    if (!r) parent.fail("run", "is required");
    const auto scheme = r->choice("scheme", "euler1", {"euler1", "trotter2"});
    c.scheme = scheme == "euler1" ? Scheme::Euler1 : Scheme::Trotter2;
    c.dt = r->positive("dt", c.dt);
    const auto ctrl = r->choice("controller", "off", {"off", "pa-bound"});
    c.controller = ctrl == "off" ? Controller::Off : Controller::PaBound;
    c.epsilon = r->positive("epsilon", c.epsilon);
    c.save_times = r->numbers("save_times", {});
    if (c.save_times.empty()) r->fail("save_times", "needs at least one time");
    const double last = *std::max_element(c.save_times.begin(), c.save_times.end());
    c.t_end = r->number("t_end", last, 0.0);
    r->finish();
    checked(parent, "run", [&] { validate(c); });
    return c;
}

ReadoutConfig read_readout(Reader& parent) {
    ReadoutConfig c;
    auto r = parent.object("readout");
    if (!r) return c;
    c.enabled = r->boolean("enabled", c.enabled);
    c.shots = r->integer("shots", c.shots, 2);
    const auto model = r->choice("variance_model", "propagated", {"propagated", "constant"});
    if (model == "constant") {
        if (!r->has("variance")) r->fail("variance", "is required for the constant model");
        c.model = VarianceModel::constant(r->number("variance", 0.0, 0.0));
    }
    r->finish();
    return c;
}

BurgersExperiment read_burgers(Reader& r, bool with_readout) {
    BurgersExperiment b;
    b.n_points = r.integer("n_points", b.n_points, 3);
    b.length = r.positive("length", b.length);
    b.reynolds = r.positive("reynolds", b.reynolds);
    b.boundary = r.choice("boundary", b.boundary, {"periodic", "dirichlet"});
    b.initial = read_initial(r, 1);
    b.run = read_run(r);
    if (with_readout) b.readout = read_readout(r);
    return b;
}

FisherExperiment read_fisher(Reader& r) {
    FisherExperiment f;
    f.nx = r.integer("nx", f.nx, 3);
    f.ny = r.integer("ny", f.ny, 3);
    f.lo = r.number("lo", f.lo);
    f.hi = r.number("hi", f.hi);
    if (!(f.hi > f.lo)) r.fail("hi", "must exceed lo");
    f.peclet = r.positive("peclet", f.peclet);
    f.damkohler = r.number("damkohler", f.damkohler);
    f.boundary = r.choice("boundary", f.boundary, {"periodic", "dirichlet"});
    f.boundary_value = r.number("boundary_value", f.boundary_value);
    f.initial = read_initial(r, 2);
    f.run = read_run(r);
    f.readout = read_readout(r);
    return f;
}

CavityConfig read_cavity(Reader& r) {
    CavityConfig c;
    c.n = r.integer("n", c.n, 3);
    c.reynolds = r.positive("reynolds", c.reynolds);
    c.lid_velocity = r.number("lid_velocity", c.lid_velocity);
    c.dt_omega = r.positive("dt", c.dt_omega);
    c.dtau_psi = r.positive("dtau", c.dtau_psi);
    c.tol_frobenius = r.positive("tol", c.tol_frobenius);
    c.inner_tol = r.positive("inner_tol", c.inner_tol);
    c.max_inner = r.integer("max_inner", c.max_inner, 1);
    c.max_outer = r.integer("max_outer", c.max_outer, 1);
    const auto scheme = r.choice("scheme", "trotter2", {"euler1", "trotter2"});
    c.scheme = scheme == "euler1" ? Scheme::Euler1 : Scheme::Trotter2;
    return c;
}

KrausExperiment read_kraus(Reader& r) {
    KrausExperiment k;
    k.rhs = r.choice("rhs", k.rhs, {"burgers", "generic-linear", "zero"});
    k.sites = r.integer("sites", k.sites, 3);
    k.levels = static_cast<int>(r.integer("levels", static_cast<std::uint64_t>(k.levels), 2, 64));
    k.reynolds = r.positive("reynolds", k.reynolds);
    k.kappa = r.number("kappa", k.kappa);
    k.boundary = r.choice("boundary", k.boundary, {"periodic", "dirichlet"});
    k.dt = r.positive("dt", k.dt);
    k.rank = r.integer("rank", k.rank, 2);
    k.probes = r.integer("probes", k.probes);
    k.tolerance = r.positive("tolerance", k.tolerance);
    k.corrupt_scale = r.number("corrupt_scale", k.corrupt_scale, 0.0);
    k.dim_cap = r.integer("dim_cap", k.dim_cap, 1);
    return k;
}

RankExperiment read_rank(Reader& r) {
    RankExperiment k;
    k.lattice_sizes = r.integers<std::uint64_t>("lattice_sizes", k.lattice_sizes);
    k.dims = r.integers<int>("dims", k.dims);
    k.deriv_orders = r.integers<int>("deriv_orders", k.deriv_orders);
    k.degrees = r.integers<int>("degrees", k.degrees);
    k.self_coupling = r.boolean("self_coupling", k.self_coupling);
    auto nonempty = [&](const char* key, std::size_t n) {
        if (n == 0) r.fail(key, "must not be empty");
    };
    nonempty("lattice_sizes", k.lattice_sizes.size());
    nonempty("dims", k.dims.size());
    nonempty("deriv_orders", k.deriv_orders.size());
    nonempty("degrees", k.degrees.size());
    for (auto L : k.lattice_sizes) {
        if (L < 1) r.fail("lattice_sizes", "entries must be >= 1");
    }
    for (int d : k.dims) {
        if (d < 1 || d > 3) r.fail("dims", "entries must be 1, 2 or 3");
    }
    for (int K : k.deriv_orders) {
        if (K < 1) r.fail("deriv_orders", "entries must be >= 1");
    }
    for (int q : k.degrees) {
        if (q < 1) r.fail("degrees", "entries must be >= 1");
    }
    return k;
}

StencilExperiment read_stencil(Reader& r) {
    StencilExperiment s;
    const json* cases = r.array("cases");
    if (!cases || cases->empty()) r.fail("cases", "needs at least one case");
    for (std::size_t i = 0; i < cases->size(); ++i) {
        Reader c((*cases)[i], r.join("cases[" + std::to_string(i) + "]"));
        StencilCase sc;
        sc.deriv_order = static_cast<int>(c.integer("deriv_order", 2, 1, 16));
        sc.radius = static_cast<int>(c.integer("radius", static_cast<std::uint64_t>((sc.deriv_order + 1) / 2), 0, 16));
        c.finish();
        s.cases.push_back(sc);
    }
    return s;
}

NoiseExperiment read_noise(Reader& r) {
    NoiseExperiment n;
    n.model = read_burgers(r, false);
    n.noise.gamma = r.number("gamma", n.noise.gamma, 0.0);
    n.noise.gamma_bar = r.number("gamma_bar", n.noise.gamma, 0.0);
    n.noise.richardson_gammas = r.numbers("richardson_gammas", {});
    n.noise.order = static_cast<int>(r.integer("order", 1, 1, 16));
    n.gammas = r.numbers("gammas", n.gammas);
    if (n.gammas.empty()) r.fail("gammas", "needs at least one rate");
    for (double g : n.gammas) {
        if (!(g >= 0.0)) r.fail("gammas", "rates must be >= 0");
    }
    checked(r, "noise", [&] { validate(n.noise); });
    return n;
}

Experiment parse_experiment(Reader& r) {
    const auto name = r.choice("experiment", "",
                               {"burgers1d", "fisher2d", "cavity", "kraus-compile",
                                "rank-report", "stencil", "noise-sweep"});
    if (name.empty()) r.fail("experiment", "is required");
    for (auto e : {Experiment::Burgers1d, Experiment::Fisher2d, Experiment::Cavity,
                   Experiment::KrausCompile, Experiment::RankReport, Experiment::Stencil,
                   Experiment::NoiseSweep}) {
        if (experiment_name(e) == name) return e;
    }
    r.fail("experiment", "unknown experiment");
}

void refresh_source(ExperimentConfig& c) {
    json j = json::parse(c.source);
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    c.source = j.dump(2);
}

} // namespace

ExperimentConfig parse_config(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    Reader root(j, "");
    ExperimentConfig c;
    c.experiment = parse_experiment(root);
    c.seed = root.integer("seed", 0);
    c.output_dir = root.text("output_dir", "");
    const std::string section(experiment_name(c.experiment));
    for (auto e : {Experiment::Burgers1d, Experiment::Fisher2d, Experiment::Cavity,
                   Experiment::KrausCompile, Experiment::RankReport, Experiment::Stencil,
                   Experiment::NoiseSweep}) {
        const std::string other(experiment_name(e));
        if (other != section && j.contains(other)) {
            root.fail(other, "section does not match experiment '" + section + "'");
        }
    }
    auto sec = root.object(section);
    const json empty = json::object();
    Reader body = sec ? std::move(*sec) : Reader(empty, section);
    switch (c.experiment) {
    case Experiment::Burgers1d: c.burgers = read_burgers(body, true); break;
    case Experiment::Fisher2d: c.fisher = read_fisher(body); break;
    case Experiment::Cavity: c.cavity = read_cavity(body); break;
    case Experiment::KrausCompile: c.kraus = read_kraus(body); break;
    case Experiment::RankReport: c.rank = read_rank(body); break;
    case Experiment::Stencil: c.stencil = read_stencil(body); break;
    case Experiment::NoiseSweep: c.noise = read_noise(body); break;
    }
    body.finish();
    root.finish();
    c.source = j.dump(2);
    refresh_source(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw ConfigError("config: cannot open " + file.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

void set_seed(ExperimentConfig& c, std::uint64_t seed) {
    c.seed = seed;
    refresh_source(c);
}

void set_output_dir(ExperimentConfig& c, const std::string& dir) {
    c.output_dir = dir;
    refresh_source(c);
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const ExperimentConfig& c) {
    json j = json::parse(c.source);
    j.erase("output_dir");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

} // namespace kvn
