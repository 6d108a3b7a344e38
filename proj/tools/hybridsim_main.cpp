#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hybridsim/scenario.hpp"

namespace {

struct CommonOptions {
    std::string config_path;
    std::string preset;
    std::string out_path;
    std::int64_t seed = -1;
    bool allow_invalid = false;
    int order_cap = 0;
    double dt = 0.0;
    std::int64_t steps = -1;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "JSON scenario configuration file");
    cmd->add_option("--preset", opts.preset, "named scenario preset (see 'presets')");
    cmd->add_option("--out", opts.out_path, "output path for CSV data");
    cmd->add_option("--seed", opts.seed, "random seed for sampling");
    cmd->add_flag("--allow-invalid-state", opts.allow_invalid,
                  "integrate even if the initial state fails the positivity check");
    cmd->add_option("--order-cap", opts.order_cap, "moment hierarchy order cap");
    cmd->add_option("--dt", opts.dt, "integrator step size");
    cmd->add_option("--steps", opts.steps, "integrator step count");
}

int dispatch(const std::string& mode, const CommonOptions& opts) {
    nlohmann::json j = nlohmann::json::object();
    if (!opts.config_path.empty()) {
        std::ifstream f(opts.config_path);
        if (!f) {
            std::cerr << "error: config: cannot open '" << opts.config_path << "'\n";
            return 1;
        }
        std::stringstream buf;
        buf << f.rdbuf();
        try {
            j = nlohmann::json::parse(buf.str());
        } catch (const nlohmann::json::parse_error& e) {
            std::cerr << "error: config: invalid JSON: " << e.what() << "\n";
            return 1;
        }
        if (!j.is_object()) {
            std::cerr << "error: config: configuration must be a JSON object\n";
            return 1;
        }
    }
    if (!opts.preset.empty()) j["preset"] = opts.preset;
    j["mode"] = mode;
    if (!opts.out_path.empty()) j["output"] = opts.out_path;
    if (opts.seed >= 0) j["seed"] = opts.seed;
    if (opts.allow_invalid) j["allow_invalid_state"] = true;
    if (opts.order_cap > 0) j["integrator"]["order_cap"] = opts.order_cap;
    if (opts.dt > 0.0) j["integrator"]["dt"] = opts.dt;
    if (opts.steps >= 0) j["integrator"]["steps"] = opts.steps;

    return hybridsim::cli::run_json(j.dump(), std::cout, std::cerr);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid classical-quantum oscillator simulator"};
    app.require_subcommand(1);

    const char* modes[] = {"simulate", "taylor", "koopman", "oracle", "check-state", "sweep"};
    const char* help[] = {
        "integrate the moment hierarchy and write a trajectory CSV",
        "compare closed-form short-time coefficients against numeric extraction",
        "integrate the Hilbert-space (Koopman) oscillator pair",
        "validate the hierarchy against a Monte Carlo characteristics ensemble",
        "run the positivity checks on the configured initial state",
        "run a scenario over a 1- or 2-parameter grid",
    };

    CommonOptions opts[6];
    CLI::App* cmds[6];
    for (int i = 0; i < 6; ++i) {
        cmds[i] = app.add_subcommand(modes[i], help[i]);
        add_common(cmds[i], opts[i]);
    }

    auto* presets = app.add_subcommand("presets", "list built-in scenario presets");

    CLI11_PARSE(app, argc, argv);

    if (presets->parsed()) {
        for (const auto& [name, text] : hybridsim::cli::preset_library()) std::cout << name << "\n";
        return 0;
    }
    for (int i = 0; i < 6; ++i)
        if (cmds[i]->parsed()) return dispatch(modes[i], opts[i]);
    return 1;
}
