#ifndef HYBRIDSIM_SCENARIO_HPP
#define HYBRIDSIM_SCENARIO_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hybridsim/dynamics.hpp"
#include "hybridsim/expansions.hpp"
#include "hybridsim/koopman.hpp"
#include "hybridsim/potentials.hpp"

namespace hybridsim::cli {

/// Configuration problems: unknown keys, out-of-range parameters, malformed
/// JSON. Mapped to exit code 1.
class config_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class Mode { simulate, taylor, koopman, oracle, check_state, sweep };

const char* mode_name(Mode m);

struct PotentialConfig {
    std::string preset = "quadratic"; // example1 | example2 | quadratic | custom
    ScenarioParams params;            // example1 / example2 coefficients
    double bilinear = 0.0;            // qx coefficient of the quadratic preset
    std::vector<PolynomialPotential::Term> coeffs; // custom terms

    PolynomialPotential build() const;
};

struct InitialConfig {
    bool shorthand = true;
    CorrelatedInitialData data;      // offset parametrization (shorthand form)
    GaussianStateSpec explicit_spec; // means + full covariance (explicit form)

    GaussianStateSpec build() const;
};

struct KoopmanConfig {
    koopman::KoopmanState initial; // carries omega_q / omega_c
    koopman::Coupling coupling;
    bool constrained = true;
    double dt = 1e-3;
    std::int64_t steps = 100000;
    std::int64_t sample_stride = 100;
};

struct SweepParameter {
    std::string name;
    std::vector<double> values;
};

struct ScenarioConfig {
    Mode mode = Mode::simulate;
    PotentialConfig potential;
    InitialConfig initial;
    IntegratorConfig integrator;
    KoopmanConfig koopman;
    std::vector<SweepParameter> sweep; // at most two scalar parameters
    std::uint64_t seed = 1;
    std::size_t samples = 100000; // oracle ensemble size
    int taylor_order = 3;
    double taylor_step = 1e-2;
    bool allow_invalid_state = false;
    std::string output_path; // CSV destination; empty = no CSV
};

/// Strict JSON parsing: unknown keys are rejected with their path, parameter
/// domains are enforced (variance offsets in (-1/2, inf), dt > 0, ...).
/// A top-level "preset" key loads a named configuration from preset_library();
/// remaining keys override it.
ScenarioConfig parse_scenario(const std::string& json_text);

/// Canonical JSON echo of a resolved configuration; parse_scenario() accepts
/// its output (round-trip).
std::string scenario_json(const ScenarioConfig& cfg);

/// Built-in scenario presets (full configurations), by name.
const std::map<std::string, std::string>& preset_library();

/// Executes cfg. Exit codes: 0 success, 1 configuration error, 2 initial state
/// failed the positivity check without override, 3 numerical failure.
/// Summary JSON goes to `out`; errors produce one machine-readable line on
/// `diag`.
int run(const ScenarioConfig& cfg, std::ostream& out, std::ostream& diag);

/// parse + run, mapping config_error to exit code 1.
int run_json(const std::string& json_text, std::ostream& out, std::ostream& diag);

} // namespace hybridsim::cli

#endif
