#ifndef HYBRIDSIM_DYNAMICS_HPP
#define HYBRIDSIM_DYNAMICS_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hybridsim/potentials.hpp"
#include "hybridsim/states.hpp"

namespace hybridsim {

/// Thrown when a trajectory produces a non-finite value; carries the time of
/// the failing step.
class numerical_error : public std::runtime_error {
  public:
    numerical_error(const std::string& what, double t) : std::runtime_error(what), time_(t) {}
    double time() const { return time_; }

  private:
    double time_ = 0.0;
};

/// Thrown when an initial state fails the positivity check and no override
/// was requested.
class invalid_state_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Moments of order > order_cap needed by the right-hand side are either
/// evaluated as Gaussian moments of the instantaneous covariance
/// (cumulant neglect) or set to zero (sensitivity analysis).
enum class Closure { wick, zero };

struct IntegratorConfig {
    double dt = 1e-3;
    std::int64_t steps = 1000;
    int order_cap = 8;
    Closure closure = Closure::wick;
    bool allow_invalid_initial = false;
    std::int64_t sample_stride = 1; // record every N-th step (first and last always kept)
};

/// Dynamical state of the hierarchy: means plus the dense central-moment table.
struct HybridState {
    double t = 0.0;
    MeanVector means;
    MomentTable moments;

    static HybridState from_spec(const GaussianStateSpec& spec, int order_cap);
};

/// Ten independent second moments, named to match the trajectory CSV columns.
struct SecondMoments {
    double var_q = 0, var_p = 0, cov_qp = 0;
    double var_x = 0, var_k = 0, cov_xk = 0;
    double cov_qx = 0, cov_qk = 0, cov_px = 0, cov_pk = 0;

    CovarianceMatrix covariance() const;
    static SecondMoments from_table(const MomentTable& table);
};

struct TrajectorySample {
    double t = 0.0;
    MeanVector means;
    SecondMoments second;
    double f = 0.0; // hur_value of the stored second moments
    bool valid = false;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;

    bool empty() const { return samples.empty(); }
    const TrajectorySample& front() const { return samples.front(); }
    const TrajectorySample& back() const { return samples.back(); }
};

/// Mean equations: dQ/dt = P, dX/dt = K, and the force terms
/// dP/dt = -sum_{l<=6} sum_{j<=l} S[0,0,l-j,j]/((l-j)! j!) d^{l+1}V/dQ^{l-j+1}dX^j
/// (dK/dt with the x-derivative). Returned as (dQ, dP, dX, dK).
std::array<double, 4> mean_rhs(const HybridState& state, const PolynomialPotential& pot,
                               Closure closure = Closure::wick);

/// Time derivative of every moment within the cap: kinetic transport,
/// mean-force subtraction, and the derivative sums, with out-of-cap entries
/// supplied by the closure.
MomentTable moment_rhs(const HybridState& state, const PolynomialPotential& pot,
                       Closure closure = Closure::wick);

/// Fixed-step RK4 advance of means and moments. The initial state must pass
/// symplectic_check unless cfg.allow_invalid_initial is set (classical
/// sub-vacuum squeezing is legitimate input for violation studies).
Trajectory integrate(const GaussianStateSpec& initial, const PolynomialPotential& pot,
                     const IntegratorConfig& cfg);

struct IntegrationOutcome {
    Trajectory trajectory;
    /// First time f crosses from >= -1e-12 to < -1e-12, refined by bisection
    /// of the bracketing step to |f| < 1e-10. Saturation (f == 0) never counts.
    std::optional<double> violation_time;
};

/// integrate() plus in-flight crossing detection and refinement.
IntegrationOutcome integrate_with_violation_search(const GaussianStateSpec& initial,
                                                   const PolynomialPotential& pot,
                                                   const IntegratorConfig& cfg);

/// Crossing detection on a recorded trajectory alone: first sign change of f
/// (strictly below -1e-12), located by secant interpolation between samples.
std::optional<double> detect_zero_crossing(const Trajectory& traj);

/// <H> = (<p^2> + <k^2>)/2 + <V>, the potential expectation evaluated by
/// binomial expansion over the in-cap central moments.
double mean_energy(const HybridState& state, const PolynomialPotential& pot);

} // namespace hybridsim

#endif
