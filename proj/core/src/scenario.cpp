#include "hybridsim/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "hybridsim/io.hpp"
#include "hybridsim/monte_carlo.hpp"

namespace hybridsim::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw config_error(msg); }

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(path + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok) fail("unknown key '" + it.key() + "' in " + path);
    }
}

double num_or(const json& j, const char* key, double def, const std::string& path) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_number()) fail(path + "." + key + " must be a number");
    return j.at(key).get<double>();
}

std::int64_t int_or(const json& j, const char* key, std::int64_t def, const std::string& path) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_number_integer()) fail(path + "." + key + " must be an integer");
    return j.at(key).get<std::int64_t>();
}

bool bool_or(const json& j, const char* key, bool def, const std::string& path) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_boolean()) fail(path + "." + key + " must be a boolean");
    return j.at(key).get<bool>();
}

std::string str_or(const json& j, const char* key, const std::string& def, const std::string& path) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_string()) fail(path + "." + key + " must be a string");
    return j.at(key).get<std::string>();
}

json deep_merge(json base, const json& over) {
    if (!base.is_object() || !over.is_object()) return over;
    for (auto it = over.begin(); it != over.end(); ++it) {
        if (base.contains(it.key()))
            base[it.key()] = deep_merge(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
    return base;
}

Mode parse_mode(const std::string& name) {
    if (name == "simulate") return Mode::simulate;
    if (name == "taylor") return Mode::taylor;
    if (name == "koopman") return Mode::koopman;
    if (name == "oracle") return Mode::oracle;
    if (name == "check-state") return Mode::check_state;
    if (name == "sweep") return Mode::sweep;
    fail("unknown mode '" + name + "'");
}

PotentialConfig parse_potential(const json& j) {
    PotentialConfig pc;
    check_keys(j, "$.potential", {"preset", "params", "bilinear", "coeffs"});
    pc.preset = str_or(j, "preset", "quadratic", "$.potential");
    if (pc.preset != "example1" && pc.preset != "example2" && pc.preset != "quadratic" &&
        pc.preset != "custom")
        fail("potential preset must be example1, example2, quadratic or custom");

    if (j.contains("params")) {
        const json& p = j.at("params");
        check_keys(p, "$.potential.params",
                   {"alpha", "beta1", "beta2", "gamma1", "gamma2", "classical_quadratic"});
        pc.params.alpha = num_or(p, "alpha", 1.0, "$.potential.params");
        pc.params.beta1 = num_or(p, "beta1", 0.0, "$.potential.params");
        pc.params.beta2 = num_or(p, "beta2", 0.0, "$.potential.params");
        pc.params.gamma1 = num_or(p, "gamma1", 0.0, "$.potential.params");
        pc.params.gamma2 = num_or(p, "gamma2", 0.0, "$.potential.params");
        pc.params.classical_quadratic = num_or(p, "classical_quadratic", 1.0, "$.potential.params");
    }
    pc.bilinear = num_or(j, "bilinear", 0.0, "$.potential");
    if (pc.bilinear != 0.0 && pc.preset != "quadratic")
        fail("'bilinear' applies only to the quadratic potential preset");

    if (j.contains("coeffs")) {
        if (pc.preset != "custom") fail("'coeffs' applies only to the custom potential preset");
        for (const auto& t : j.at("coeffs")) {
            check_keys(t, "$.potential.coeffs[]", {"m", "n", "c"});
            pc.coeffs.push_back({static_cast<int>(int_or(t, "m", 0, "$.potential.coeffs[]")),
                                 static_cast<int>(int_or(t, "n", 0, "$.potential.coeffs[]")),
                                 num_or(t, "c", 0.0, "$.potential.coeffs[]")});
        }
    } else if (pc.preset == "custom") {
        fail("custom potential requires 'coeffs'");
    }
    return pc;
}

InitialConfig parse_initial(const json& j) {
    InitialConfig ic;
    if (j.contains("cov")) {
        check_keys(j, "$.initial", {"means", "cov"});
        ic.shorthand = false;
        json wrapper = j;
        ic.explicit_spec = GaussianStateSpec::from_json(wrapper.dump());
        return ic;
    }
    check_keys(j, "$.initial", {"z1", "z2", "y1", "y2", "qp0", "qx0", "means"});
    ic.shorthand = true;
    ic.data.z1 = num_or(j, "z1", 0.0, "$.initial");
    ic.data.z2 = num_or(j, "z2", 0.0, "$.initial");
    ic.data.y1 = num_or(j, "y1", 0.0, "$.initial");
    ic.data.y2 = num_or(j, "y2", 0.0, "$.initial");
    ic.data.qp0 = num_or(j, "qp0", 0.0, "$.initial");
    ic.data.qx0 = num_or(j, "qx0", 0.0, "$.initial");
    if (j.contains("means")) {
        const auto& m = j.at("means");
        if (!m.is_array() || m.size() != 4) fail("$.initial.means must be [q, p, x, k]");
        ic.data.means = {m[0].get<double>(), m[1].get<double>(), m[2].get<double>(),
                         m[3].get<double>()};
    }
    if (ic.data.z1 <= -0.5 || ic.data.z2 <= -0.5 || ic.data.y1 <= -0.5 || ic.data.y2 <= -0.5)
        fail("variance offsets must lie in (-1/2, inf)");
    return ic;
}

IntegratorConfig parse_integrator(const json& j) {
    IntegratorConfig cfg;
    check_keys(j, "$.integrator", {"dt", "steps", "order_cap", "closure", "sample_stride"});
    cfg.dt = num_or(j, "dt", cfg.dt, "$.integrator");
    cfg.steps = int_or(j, "steps", cfg.steps, "$.integrator");
    cfg.order_cap = static_cast<int>(int_or(j, "order_cap", cfg.order_cap, "$.integrator"));
    cfg.sample_stride = int_or(j, "sample_stride", cfg.sample_stride, "$.integrator");
    const std::string closure = str_or(j, "closure", "wick", "$.integrator");
    if (closure == "wick")
        cfg.closure = Closure::wick;
    else if (closure == "zero")
        cfg.closure = Closure::zero;
    else
        fail("$.integrator.closure must be 'wick' or 'zero'");
    if (!(cfg.dt > 0.0)) fail("$.integrator.dt must be > 0");
    if (cfg.steps < 0) fail("$.integrator.steps must be >= 0");
    if (cfg.order_cap < 2) fail("$.integrator.order_cap must be >= 2");
    if (cfg.sample_stride < 1) fail("$.integrator.sample_stride must be >= 1");
    return cfg;
}

KoopmanConfig parse_koopman(const json& j) {
    KoopmanConfig kc;
    check_keys(j, "$.koopman",
               {"omega_q", "omega_c", "coupling", "constrained", "initial", "dt", "steps",
                "sample_stride"});
    kc.initial.omega_q = num_or(j, "omega_q", 1.0, "$.koopman");
    kc.initial.omega_c = num_or(j, "omega_c", 1.0, "$.koopman");
    kc.constrained = bool_or(j, "constrained", true, "$.koopman");
    if (j.contains("coupling")) {
        const json& c = j.at("coupling");
        if (kc.constrained) {
            check_keys(c, "$.koopman.coupling", {"a1x", "a2x", "a1k", "a2k"});
            kc.coupling = koopman::Coupling::constrained(
                num_or(c, "a1x", 0.0, "$.koopman.coupling"), num_or(c, "a1k", 0.0, "$.koopman.coupling"),
                num_or(c, "a2x", 0.0, "$.koopman.coupling"), num_or(c, "a2k", 0.0, "$.koopman.coupling"));
        } else {
            check_keys(c, "$.koopman.coupling",
                       {"a1x", "a2x", "a1k", "a2k", "b1x", "b2x", "b1k", "b2k"});
            kc.coupling.a1x = num_or(c, "a1x", 0.0, "$.koopman.coupling");
            kc.coupling.a2x = num_or(c, "a2x", 0.0, "$.koopman.coupling");
            kc.coupling.a1k = num_or(c, "a1k", 0.0, "$.koopman.coupling");
            kc.coupling.a2k = num_or(c, "a2k", 0.0, "$.koopman.coupling");
            kc.coupling.b1x = num_or(c, "b1x", 0.0, "$.koopman.coupling");
            kc.coupling.b2x = num_or(c, "b2x", 0.0, "$.koopman.coupling");
            kc.coupling.b1k = num_or(c, "b1k", 0.0, "$.koopman.coupling");
            kc.coupling.b2k = num_or(c, "b2k", 0.0, "$.koopman.coupling");
        }
    }
    if (j.contains("initial")) {
        const json& s = j.at("initial");
        check_keys(s, "$.koopman.initial", {"qbar", "pbar", "xbar", "kbar", "pxbar", "pkbar"});
        kc.initial.qbar = num_or(s, "qbar", 0.0, "$.koopman.initial");
        kc.initial.pbar = num_or(s, "pbar", 0.0, "$.koopman.initial");
        kc.initial.xbar = num_or(s, "xbar", 0.0, "$.koopman.initial");
        kc.initial.kbar = num_or(s, "kbar", 0.0, "$.koopman.initial");
        kc.initial.pxbar = num_or(s, "pxbar", 0.0, "$.koopman.initial");
        kc.initial.pkbar = num_or(s, "pkbar", 0.0, "$.koopman.initial");
    }
    kc.dt = num_or(j, "dt", kc.dt, "$.koopman");
    kc.steps = int_or(j, "steps", kc.steps, "$.koopman");
    kc.sample_stride = int_or(j, "sample_stride", kc.sample_stride, "$.koopman");
    if (!(kc.dt > 0.0)) fail("$.koopman.dt must be > 0");
    if (kc.steps < 0) fail("$.koopman.steps must be >= 0");
    if (kc.sample_stride < 1) fail("$.koopman.sample_stride must be >= 1");
    return kc;
}

const std::vector<std::string>& sweep_parameter_names() {
    static const std::vector<std::string> names = {
        "z1",    "z2",    "y1",    "y2",    "qp0",   "qx0",
        "q0",    "p0",    "x0",    "k0",    "alpha", "beta1",
        "beta2", "gamma1", "gamma2", "classical_quadratic", "bilinear"};
    return names;
}

std::vector<SweepParameter> parse_sweep(const json& j) {
    std::vector<SweepParameter> out;
    check_keys(j, "$.sweep", {"parameters"});
    if (!j.contains("parameters") || !j.at("parameters").is_array())
        fail("$.sweep.parameters must be an array");
    for (const auto& p : j.at("parameters")) {
        check_keys(p, "$.sweep.parameters[]", {"name", "values"});
        SweepParameter sp;
        sp.name = str_or(p, "name", "", "$.sweep.parameters[]");
        const auto& names = sweep_parameter_names();
        if (std::find(names.begin(), names.end(), sp.name) == names.end())
            fail("unknown sweep parameter '" + sp.name + "'");
        if (!p.contains("values") || !p.at("values").is_array())
            fail("$.sweep.parameters[].values must be an array");
        for (const auto& v : p.at("values")) sp.values.push_back(v.get<double>());
        if (sp.values.empty()) fail("sweep parameter '" + sp.name + "' has an empty grid");
        out.push_back(std::move(sp));
    }
    if (out.empty() || out.size() > 2) fail("sweep needs one or two parameters");
    return out;
}

json potential_json(const PotentialConfig& pc) {
    json j;
    j["preset"] = pc.preset;
    if (pc.preset == "example1" || pc.preset == "example2") {
        j["params"] = {{"alpha", pc.params.alpha},
                       {"beta1", pc.params.beta1},
                       {"beta2", pc.params.beta2},
                       {"gamma1", pc.params.gamma1},
                       {"gamma2", pc.params.gamma2},
                       {"classical_quadratic", pc.params.classical_quadratic}};
    } else if (pc.preset == "quadratic") {
        j["params"] = {{"alpha", pc.params.alpha},
                       {"classical_quadratic", pc.params.classical_quadratic}};
        j["bilinear"] = pc.bilinear;
    } else {
        json coeffs = json::array();
        for (const auto& t : pc.coeffs) coeffs.push_back({{"m", t.m}, {"n", t.n}, {"c", t.c}});
        j["coeffs"] = coeffs;
    }
    return j;
}

json initial_json(const InitialConfig& ic) {
    if (!ic.shorthand) return json::parse(ic.explicit_spec.to_json());
    const auto& d = ic.data;
    return {{"z1", d.z1},   {"z2", d.z2},   {"y1", d.y1},
            {"y2", d.y2},   {"qp0", d.qp0}, {"qx0", d.qx0},
            {"means", json::array({d.means.q, d.means.p, d.means.x, d.means.k})}};
}

json scenario_json_object(const ScenarioConfig& cfg) {
    json j;
    j["mode"] = mode_name(cfg.mode);
    j["potential"] = potential_json(cfg.potential);
    j["initial"] = initial_json(cfg.initial);
    j["integrator"] = {{"dt", cfg.integrator.dt},
                       {"steps", cfg.integrator.steps},
                       {"order_cap", cfg.integrator.order_cap},
                       {"closure", cfg.integrator.closure == Closure::wick ? "wick" : "zero"},
                       {"sample_stride", cfg.integrator.sample_stride}};
    if (cfg.mode == Mode::koopman) {
        const auto& kc = cfg.koopman;
        json c;
        if (kc.constrained) {
            c = {{"a1x", kc.coupling.a1x},
                 {"a2x", kc.coupling.a2x},
                 {"a1k", kc.coupling.a1k},
                 {"a2k", kc.coupling.a2k}};
        } else {
            c = {{"a1x", kc.coupling.a1x}, {"a2x", kc.coupling.a2x}, {"a1k", kc.coupling.a1k},
                 {"a2k", kc.coupling.a2k}, {"b1x", kc.coupling.b1x}, {"b2x", kc.coupling.b2x},
                 {"b1k", kc.coupling.b1k}, {"b2k", kc.coupling.b2k}};
        }
        j["koopman"] = {{"omega_q", kc.initial.omega_q},
                        {"omega_c", kc.initial.omega_c},
                        {"coupling", c},
                        {"constrained", kc.constrained},
                        {"initial",
                         {{"qbar", kc.initial.qbar},
                          {"pbar", kc.initial.pbar},
                          {"xbar", kc.initial.xbar},
                          {"kbar", kc.initial.kbar},
                          {"pxbar", kc.initial.pxbar},
                          {"pkbar", kc.initial.pkbar}}},
                        {"dt", kc.dt},
                        {"steps", kc.steps},
                        {"sample_stride", kc.sample_stride}};
    }
    if (!cfg.sweep.empty()) {
        json params = json::array();
        for (const auto& sp : cfg.sweep) params.push_back({{"name", sp.name}, {"values", sp.values}});
        j["sweep"] = {{"parameters", params}};
    }
    j["seed"] = cfg.seed;
    j["samples"] = cfg.samples;
    j["taylor_order"] = cfg.taylor_order;
    j["taylor_step"] = cfg.taylor_step;
    j["allow_invalid_state"] = cfg.allow_invalid_state;
    if (!cfg.output_path.empty()) j["output"] = cfg.output_path;
    return j;
}

ScenarioConfig parse_object(const json& j) {
    check_keys(j, "$",
               {"mode", "potential", "initial", "integrator", "koopman", "sweep", "seed", "samples",
                "taylor_order", "taylor_step", "allow_invalid_state", "output"});
    ScenarioConfig cfg;
    cfg.mode = parse_mode(str_or(j, "mode", "simulate", "$"));
    if (j.contains("potential")) cfg.potential = parse_potential(j.at("potential"));
    if (j.contains("initial")) cfg.initial = parse_initial(j.at("initial"));
    if (j.contains("integrator")) cfg.integrator = parse_integrator(j.at("integrator"));
    if (j.contains("koopman")) cfg.koopman = parse_koopman(j.at("koopman"));
    if (j.contains("sweep")) cfg.sweep = parse_sweep(j.at("sweep"));
    if (j.contains("seed")) cfg.seed = static_cast<std::uint64_t>(int_or(j, "seed", 1, "$"));
    if (j.contains("samples")) {
        const auto n = int_or(j, "samples", 0, "$");
        if (n < 1) fail("$.samples must be >= 1");
        cfg.samples = static_cast<std::size_t>(n);
    }
    cfg.taylor_order = static_cast<int>(int_or(j, "taylor_order", cfg.taylor_order, "$"));
    if (cfg.taylor_order < 0 || cfg.taylor_order > 3) fail("$.taylor_order must be 0..3");
    cfg.taylor_step = num_or(j, "taylor_step", cfg.taylor_step, "$");
    if (!(cfg.taylor_step > 0.0)) fail("$.taylor_step must be > 0");
    cfg.allow_invalid_state = bool_or(j, "allow_invalid_state", false, "$");
    cfg.output_path = str_or(j, "output", "", "$");
    if (cfg.mode == Mode::sweep && cfg.sweep.empty()) fail("sweep mode requires $.sweep");
    return cfg;
}

struct ClosedForm {
    std::string which;
    ExpansionCoefficients coeffs;
};

std::optional<ClosedForm> closed_form_for(const ScenarioConfig& cfg) {
    if (!cfg.initial.shorthand) return std::nullopt;
    const auto& d = cfg.initial.data;
    const auto& pc = cfg.potential;
    if (pc.preset == "example1" && d.uncorrelated())
        return ClosedForm{"example1", example1_expansion(pc.params, d)};
    if (pc.preset == "example2")
        return d.uncorrelated() ? ClosedForm{"example2", example2_expansion(pc.params, d)}
                                : ClosedForm{"example2_correlated",
                                             example2_correlated_expansion(pc.params, d)};
    const PolynomialPotential pot = pc.build();
    const bool q_only = std::all_of(pot.terms().begin(), pot.terms().end(),
                                    [](const auto& t) { return t.n == 0; });
    if (q_only && d.uncorrelated()) return ClosedForm{"single_dof", single_dof_expansion(pot, d)};
    return ClosedForm{"general_linear", general_linear_expansion(pot, d)};
}

struct Bound {
    std::string kind;
    std::optional<double> value;
};

std::optional<Bound> bound_for(const ScenarioConfig& cfg) {
    if (!cfg.initial.shorthand) return std::nullopt;
    const auto& d = cfg.initial.data;
    const auto& pc = cfg.potential;
    if (pc.preset == "example2")
        return Bound{"general", violation_time_bound_general(d, pc.params)};
    if (pc.preset == "quadratic")
        return Bound{"quadratic", violation_time_bound_quadratic(d, pc.bilinear)};
    if (pc.preset == "example1" && pc.params.beta2 == 0.0 && pc.params.gamma2 == 0.0)
        return Bound{"quadratic",
                     violation_time_bound_quadratic(d, pc.params.beta1 * pc.params.gamma1)};
    return std::nullopt;
}

json coeffs_json(const ExpansionCoefficients& c) {
    json arr = json::array();
    for (double v : c.c) arr.push_back(v);
    return arr;
}

void write_file_or_fail(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail("cannot open output file '" + path + "'");
    f << content;
    if (!f) fail("failed writing output file '" + path + "'");
}

double relative_gap(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    if (scale < 1e-8) return 0.0;
    return std::abs(a - b) / scale;
}

int run_simulate(const ScenarioConfig& cfg, std::ostream& out) {
    const PolynomialPotential pot = cfg.potential.build();
    const GaussianStateSpec spec = cfg.initial.build();
    IntegratorConfig icfg = cfg.integrator;
    icfg.allow_invalid_initial = cfg.allow_invalid_state;

    const auto outcome = integrate_with_violation_search(spec, pot, icfg);

    if (!cfg.output_path.empty()) {
        std::ostringstream csv;
        write_trajectory_csv(csv, outcome.trajectory);
        write_file_or_fail(cfg.output_path, csv.str());
    }

    json results;
    results["valid_initial"] = symplectic_check(spec.cov).valid;
    results["f0"] = outcome.trajectory.front().f;
    results["final_t"] = outcome.trajectory.back().t;
    results["final_f"] = outcome.trajectory.back().f;
    results["t_star"] = outcome.violation_time ? json(*outcome.violation_time) : json(nullptr);
    if (const auto bound = bound_for(cfg)) {
        results["t_star_bound"] = bound->value ? json(*bound->value) : json(nullptr);
        results["t_star_bound_kind"] = bound->kind;
    }
    if (const auto closed = closed_form_for(cfg)) {
        results["closed_form"] = {{"which", closed->which}, {"c", coeffs_json(closed->coeffs)}};
    }

    json summary;
    summary["mode"] = "simulate";
    summary["scenario"] = scenario_json_object(cfg);
    summary["results"] = results;
    out << summary.dump() << "\n";
    return 0;
}

int run_taylor(const ScenarioConfig& cfg, std::ostream& out) {
    const auto closed = closed_form_for(cfg);
    if (!closed) fail("taylor mode requires shorthand initial data");
    const PolynomialPotential pot = cfg.potential.build();
    const GaussianStateSpec spec = cfg.initial.build();

    const int order =
        std::min<int>(cfg.taylor_order, static_cast<int>(closed->coeffs.order()));
    TaylorOptions topts;
    topts.step = cfg.taylor_step;
    topts.dt = cfg.integrator.dt;
    const TaylorResult numeric = numeric_taylor(spec, pot, order, topts);

    double max_rel_err = 0.0;
    for (int n = 0; n <= order; ++n)
        max_rel_err = std::max(
            max_rel_err, relative_gap(closed->coeffs[static_cast<std::size_t>(n)],
                                      numeric.coeffs[static_cast<std::size_t>(n)]));

    json summary;
    summary["mode"] = "taylor";
    summary["scenario"] = scenario_json_object(cfg);
    summary["which"] = closed->which;
    summary["closed_form"] = coeffs_json(closed->coeffs);
    summary["numeric"] = coeffs_json(numeric.coeffs);
    summary["max_rel_err"] = max_rel_err;
    summary["converged"] = numeric.converged;
    summary["richardson_level_diff"] = numeric.max_level_diff;
    out << summary.dump() << "\n";
    return 0;
}

int run_koopman(const ScenarioConfig& cfg, std::ostream& out) {
    const auto& kc = cfg.koopman;
    const auto traj =
        koopman::integrate(kc.initial, kc.coupling, kc.dt, kc.steps, kc.constrained, kc.sample_stride);

    if (!cfg.output_path.empty()) {
        std::ostringstream csv;
        write_koopman_csv(csv, traj);
        write_file_or_fail(cfg.output_path, csv.str());
    }

    json results;
    results["final_t"] = traj.samples.back().t;
    results["energy_q_final"] = traj.samples.back().energy_q;
    results["energy_c_final"] = traj.samples.back().energy_c;
    const double total_t = traj.samples.back().t;
    try {
        results["growth_exponent"] =
            koopman::fit_energy_growth_exponent(traj, 0.1 * total_t, total_t);
    } catch (const std::invalid_argument&) {
        results["growth_exponent"] = nullptr;
    }
    results["backreaction"] =
        kc.constrained ? json(koopman::backreaction_deviation(kc.initial, kc.coupling, kc.dt, kc.steps))
                       : json(nullptr);

    json summary;
    summary["mode"] = "koopman";
    summary["scenario"] = scenario_json_object(cfg);
    summary["results"] = results;
    out << summary.dump() << "\n";
    return 0;
}

int run_oracle(const ScenarioConfig& cfg, std::ostream& out) {
    const PolynomialPotential pot = cfg.potential.build();
    if (!classical_evolution_exact(pot))
        fail("oracle mode requires a potential at most quadratic in q "
             "(classical characteristics would not match the quantum evolution)");
    const GaussianStateSpec spec = cfg.initial.build();

    IntegratorConfig icfg = cfg.integrator;
    icfg.allow_invalid_initial = cfg.allow_invalid_state;
    const Trajectory traj = integrate(spec, pot, icfg);

    auto ensemble = mc::sample_gaussian(spec, cfg.samples, cfg.seed);
    const int threads = thread_budget();

    std::ostringstream csv;
    csv << "t,f_mc,f_mc_stderr,f_hierarchy\n";
    double max_abs_z = 0.0;
    double prev_t = 0.0;
    for (const auto& sample : traj.samples) {
        if (sample.t > prev_t) {
            const auto steps =
                static_cast<std::int64_t>(std::llround((sample.t - prev_t) / icfg.dt));
            mc::evolve_ensemble(ensemble, pot, icfg.dt, steps, threads);
            prev_t = sample.t;
        }
        const auto est = mc::estimate_hur(ensemble);
        csv << format_double(sample.t) << ',' << format_double(est.value) << ','
            << format_double(est.std_error) << ',' << format_double(sample.f) << '\n';
        if (est.std_error > 0.0)
            max_abs_z = std::max(max_abs_z, std::abs(est.value - sample.f) / est.std_error);
    }

    if (!cfg.output_path.empty())
        write_file_or_fail(cfg.output_path, csv.str());
    else
        out << csv.str();

    json summary;
    summary["mode"] = "oracle";
    summary["scenario"] = scenario_json_object(cfg);
    summary["results"] = {{"checkpoints", traj.samples.size()},
                          {"particles", ensemble.count()},
                          {"max_abs_z", max_abs_z}};
    out << summary.dump() << "\n";
    return 0;
}

int run_check_state(const ScenarioConfig& cfg, std::ostream& out) {
    const GaussianStateSpec spec = cfg.initial.build();
    const SymplecticCheck chk = symplectic_check(spec.cov);

    json results;
    results["valid"] = chk.valid;
    results["symplectic_eigenvalues"] = {chk.eigenvalues[0], chk.eigenvalues[1]};
    results["min_principal_minor"] = chk.min_principal_minor;
    results["cup_epsilon_1"] = cup_check(spec.cov, 1.0);
    results["f0"] = hur_value(spec.cov);

    json summary;
    summary["mode"] = "check-state";
    summary["scenario"] = scenario_json_object(cfg);
    summary["results"] = results;
    out << summary.dump() << "\n";
    return chk.valid ? 0 : 2;
}

void apply_sweep_value(ScenarioConfig& cfg, const std::string& name, double value) {
    auto& d = cfg.initial.data;
    auto& p = cfg.potential.params;
    if (name == "z1") d.z1 = value;
    else if (name == "z2") d.z2 = value;
    else if (name == "y1") d.y1 = value;
    else if (name == "y2") d.y2 = value;
    else if (name == "qp0") d.qp0 = value;
    else if (name == "qx0") d.qx0 = value;
    else if (name == "q0") d.means.q = value;
    else if (name == "p0") d.means.p = value;
    else if (name == "x0") d.means.x = value;
    else if (name == "k0") d.means.k = value;
    else if (name == "alpha") p.alpha = value;
    else if (name == "beta1") p.beta1 = value;
    else if (name == "beta2") p.beta2 = value;
    else if (name == "gamma1") p.gamma1 = value;
    else if (name == "gamma2") p.gamma2 = value;
    else if (name == "classical_quadratic") p.classical_quadratic = value;
    else if (name == "bilinear") cfg.potential.bilinear = value;
    else fail("unknown sweep parameter '" + name + "'");
}

int run_sweep(const ScenarioConfig& cfg, std::ostream& out) {
    if (cfg.sweep.empty() || cfg.sweep.size() > 2) fail("sweep needs one or two parameters");
    if (!cfg.initial.shorthand) fail("sweep requires shorthand initial data");

    const auto& p1 = cfg.sweep[0];
    const SweepParameter* p2 = cfg.sweep.size() == 2 ? &cfg.sweep[1] : nullptr;
    const std::size_t n1 = p1.values.size();
    const std::size_t n2 = p2 ? p2->values.size() : 1;
    const std::size_t rows = n1 * n2;

    struct Row {
        double v1 = 0, v2 = 0;
        double f0 = 0;
        std::optional<double> c1, c2, c3;
        std::optional<double> t_star;
        std::optional<double> bound;
    };
    std::vector<Row> table(rows);
    std::vector<std::exception_ptr> errors(rows);

    auto work = [&](std::size_t r) {
        ScenarioConfig local = cfg;
        Row& row = table[r];
        row.v1 = p1.values[r / n2];
        apply_sweep_value(local, p1.name, row.v1);
        if (p2) {
            row.v2 = p2->values[r % n2];
            apply_sweep_value(local, p2->name, row.v2);
        }
        const PolynomialPotential pot = local.potential.build();
        const GaussianStateSpec spec = local.initial.build();

        if (const auto closed = closed_form_for(local)) {
            row.f0 = closed->coeffs[0];
            row.c1 = closed->coeffs.c.size() > 1 ? std::optional<double>(closed->coeffs[1])
                                                 : std::nullopt;
            row.c2 = closed->coeffs.c.size() > 2 ? std::optional<double>(closed->coeffs[2])
                                                 : std::nullopt;
            row.c3 = closed->coeffs.c.size() > 3 ? std::optional<double>(closed->coeffs[3])
                                                 : std::nullopt;
        } else {
            row.f0 = hur_value(spec.cov);
        }
        if (const auto bound = bound_for(local)) row.bound = bound->value;

        IntegratorConfig icfg = local.integrator;
        icfg.allow_invalid_initial = local.allow_invalid_state;
        row.t_star = integrate_with_violation_search(spec, pot, icfg).violation_time;
    };

    const int threads = std::min<int>(thread_budget(), static_cast<int>(rows));
    if (threads <= 1) {
        for (std::size_t r = 0; r < rows; ++r) {
            try {
                work(r);
            } catch (...) {
                errors[r] = std::current_exception();
                break;
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t r = next.fetch_add(1);
                if (r >= rows) return;
                try {
                    work(r);
                } catch (...) {
                    errors[r] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);

    std::ostringstream csv;
    csv << p1.name;
    if (p2) csv << ',' << p2->name;
    csv << ",f0,c1,c2,c3,t_star,t_star_bound\n";
    auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const Row& row : table) {
        csv << format_double(row.v1);
        if (p2) csv << ',' << format_double(row.v2);
        csv << ',' << format_double(row.f0) << ',' << cell(row.c1) << ',' << cell(row.c2) << ','
            << cell(row.c3) << ',' << cell(row.t_star) << ',' << cell(row.bound) << '\n';
    }

    if (!cfg.output_path.empty()) {
        write_file_or_fail(cfg.output_path, csv.str());
        json summary;
        summary["mode"] = "sweep";
        summary["scenario"] = scenario_json_object(cfg);
        summary["results"] = {{"rows", rows}};
        out << summary.dump() << "\n";
    } else {
        out << csv.str();
    }
    return 0;
}

} // namespace

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::simulate: return "simulate";
        case Mode::taylor: return "taylor";
        case Mode::koopman: return "koopman";
        case Mode::oracle: return "oracle";
        case Mode::check_state: return "check-state";
        case Mode::sweep: return "sweep";
    }
    return "simulate";
}

PolynomialPotential PotentialConfig::build() const {
    if (preset == "example1") return example1_potential(params);
    if (preset == "example2") return example2_potential(params);
    if (preset == "quadratic")
        return quadratic_potential(params.alpha, params.classical_quadratic, bilinear);
    PolynomialPotential pot;
    for (const auto& t : coeffs) pot.add_term(t.m, t.n, t.c);
    return pot;
}

GaussianStateSpec InitialConfig::build() const {
    if (shorthand) return data.state();
    return explicit_spec;
}

ScenarioConfig parse_scenario(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) fail("configuration must be a JSON object");

    if (j.contains("preset")) {
        if (!j.at("preset").is_string()) fail("$.preset must be a string");
        const std::string name = j.at("preset").get<std::string>();
        const auto& lib = preset_library();
        const auto it = lib.find(name);
        if (it == lib.end()) fail("unknown scenario preset '" + name + "'");
        json base = json::parse(it->second);
        j.erase("preset");
        j = deep_merge(std::move(base), j);
    }
    return parse_object(j);
}

std::string scenario_json(const ScenarioConfig& cfg) { return scenario_json_object(cfg).dump(); }

const std::map<std::string, std::string>& preset_library() {
    static const std::map<std::string, std::string> lib = {
        {"vacuum-decoupled", R"({
            "mode": "simulate",
            "potential": {"preset": "quadratic", "params": {"alpha": 1, "classical_quadratic": 1}, "bilinear": 0},
            "initial": {},
            "integrator": {"dt": 0.001, "steps": 10000, "order_cap": 4, "sample_stride": 10}
        })"},
        {"example2-violation", R"({
            "mode": "simulate",
            "potential": {"preset": "example2", "params": {"alpha": 1, "classical_quadratic": 1, "beta1": -1, "beta2": 2}},
            "initial": {"z1": 0.1, "z2": 0.1, "y1": 0.1, "y2": 0.1, "qp0": 0.1, "qx0": 0.1, "means": [-1, -3, 1, -1]},
            "integrator": {"dt": 0.0001, "steps": 13000, "order_cap": 8, "sample_stride": 20}
        })"},
        {"quadratic-squeezed-violation", R"({
            "mode": "simulate",
            "potential": {"preset": "quadratic", "params": {"alpha": 1, "classical_quadratic": 1}, "bilinear": -5},
            "initial": {"z1": 0.05, "z2": 0.05, "y1": 0, "y2": -0.4, "qp0": 0.1, "qx0": 0.2},
            "integrator": {"dt": 0.0001, "steps": 10000, "order_cap": 6, "sample_stride": 10},
            "allow_invalid_state": true
        })"},
        {"ghup-linear-taylor", R"({
            "mode": "taylor",
            "potential": {"preset": "quadratic", "params": {"alpha": 1, "classical_quadratic": 1}, "bilinear": 0.8},
            "initial": {"z1": 0.15, "z2": 0.1, "y1": 0.05, "y2": 0.2, "qp0": 0.12, "qx0": 0.15, "means": [0.4, -0.3, 0.6, 0.2]},
            "integrator": {"dt": 0.0001},
            "taylor_order": 2
        })"},
        {"example1-taylor", R"({
            "mode": "taylor",
            "potential": {"preset": "example1", "params": {"alpha": 1, "classical_quadratic": 1, "beta1": 1, "beta2": 0.5, "gamma1": 1, "gamma2": 0.4}},
            "initial": {"z1": 0.1, "z2": 0.2, "y1": 0.05, "y2": 0.15, "means": [0.3, -0.2, 0.5, 0.4]},
            "integrator": {"dt": 0.0001},
            "taylor_order": 3
        })"},
        {"example2-taylor", R"({
            "mode": "taylor",
            "potential": {"preset": "example2", "params": {"alpha": 3, "classical_quadratic": 0.9, "beta1": 0.7, "beta2": 0.6}},
            "initial": {"z1": 0.1, "z2": 0.05, "y1": 0.2, "y2": 0.1, "means": [0.4, 0.3, -0.3, 0.5]},
            "integrator": {"dt": 0.0001},
            "taylor_order": 3
        })"},
        {"example2-correlated-taylor", R"({
            "mode": "taylor",
            "potential": {"preset": "example2", "params": {"alpha": 1, "classical_quadratic": 1, "beta1": -1, "beta2": 2}},
            "initial": {"z1": 0.1, "z2": 0.1, "y1": 0.1, "y2": 0.1, "qp0": 0.1, "qx0": 0.1, "means": [-1, -3, 1, -1]},
            "integrator": {"dt": 0.0001},
            "taylor_order": 2
        })"},
        {"koopman-resonance", R"({
            "mode": "koopman",
            "koopman": {"omega_q": 1, "omega_c": 1, "coupling": {"a1x": 0.1}, "constrained": true,
                        "initial": {"xbar": 1}, "dt": 0.001, "steps": 100000, "sample_stride": 100}
        })"},
        {"koopman-detuned", R"({
            "mode": "koopman",
            "koopman": {"omega_q": 1, "omega_c": 2, "coupling": {"a1x": 0.1}, "constrained": true,
                        "initial": {"xbar": 1}, "dt": 0.001, "steps": 100000, "sample_stride": 100}
        })"},
        {"example2-oracle", R"({
            "mode": "oracle",
            "potential": {"preset": "example2", "params": {"alpha": 1, "classical_quadratic": 1, "beta1": -1, "beta2": 2}},
            "initial": {"z1": 0.1, "z2": 0.1, "y1": 0.1, "y2": 0.1, "qp0": 0.1, "qx0": 0.1, "means": [-1, -3, 1, -1]},
            "integrator": {"dt": 0.001, "steps": 1000, "order_cap": 8, "sample_stride": 100},
            "samples": 200000,
            "seed": 20260810
        })"},
    };
    return lib;
}

int run(const ScenarioConfig& cfg, std::ostream& out, std::ostream& diag) {
    try {
        switch (cfg.mode) {
            case Mode::simulate: return run_simulate(cfg, out);
            case Mode::taylor: return run_taylor(cfg, out);
            case Mode::koopman: return run_koopman(cfg, out);
            case Mode::oracle: return run_oracle(cfg, out);
            case Mode::check_state: return run_check_state(cfg, out);
            case Mode::sweep: return run_sweep(cfg, out);
        }
        return 1;
    } catch (const config_error& e) {
        diag << "error: config: " << e.what() << "\n";
        return 1;
    } catch (const invalid_state_error& e) {
        diag << "error: invalid-state: " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        diag << "error: numerical: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        diag << "error: config: " << e.what() << "\n";
        return 1;
    }
}

int run_json(const std::string& json_text, std::ostream& out, std::ostream& diag) {
    try {
        return run(parse_scenario(json_text), out, diag);
    } catch (const config_error& e) {
        diag << "error: config: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        diag << "error: config: " << e.what() << "\n";
        return 1;
    }
}

} // namespace hybridsim::cli
