#ifndef HYBRIDSIM_EXPANSIONS_HPP
#define HYBRIDSIM_EXPANSIONS_HPP

#include <optional>
#include <vector>

#include "hybridsim/potentials.hpp"
#include "hybridsim/states.hpp"

namespace hybridsim {

/// Coefficients of f(t) = sum c[n] t^n, n <= 3.
struct ExpansionCoefficients {
    std::vector<double> c;

    double operator[](std::size_t n) const { return n < c.size() ? c[n] : 0.0; }
    std::size_t order() const { return c.empty() ? 0 : c.size() - 1; }
};

/// Initial Gaussian data in the offset parametrization:
///   <dq^2> = 1/2 + z1,  <dp^2> = 1/2 + z2,
///   <dx^2> = 1/2 + y2,  <dk^2> = 1/2 + y1,
/// plus the two admitted correlations <dq dp>_0 and <dq dx>_0.
/// All offsets must lie in (-1/2, inf). y2 is the classical *position*
/// variance offset: it is the knob that squeezes the x-distribution and the
/// one every closed-form coefficient below depends on.
struct CorrelatedInitialData {
    double z1 = 0, z2 = 0, y1 = 0, y2 = 0;
    double qp0 = 0, qx0 = 0;
    MeanVector means;

    /// Throws std::invalid_argument if an offset is <= -1/2.
    void validate() const;

    CovarianceMatrix covariance() const;
    GaussianStateSpec state() const;

    bool uncorrelated() const { return qp0 == 0.0 && qx0 == 0.0; }
};

/// f-expansion for a single-oscillator potential V(q) with uncorrelated
/// initial data: c0 = (z1 + z2 + 2 z1 z2)/2 and the first-order bracket
/// -(1+2z1)/120 [60 <dp dq^2> V'''+ 20 <dp dq^3> V'''' + 5 <dp dq^4> V^(5)
/// + <dp dq^5> V^(6)], the mixed moments evaluated as Gaussian moments of the
/// initial data (hence c1 = 0 here: Gaussian robustness).
/// Rejects x-dependent potentials and correlated data.
ExpansionCoefficients single_dof_expansion(const PolynomialPotential& pot,
                                           const CorrelatedInitialData& init);

/// Leading-order f-expansion for a general interaction with both <dq dp>_0 and
/// <dq dx>_0 present. Returns (c0, c1); all mixed derivatives are taken at the
/// initial means.
ExpansionCoefficients general_linear_expansion(const PolynomialPotential& pot,
                                               const CorrelatedInitialData& init);

/// Closed-form coefficients (c0, 0, c2, c3) for the family
/// U = beta1 q g(x) + beta2 q^2 g(x), g = gamma1 x + gamma2 x^2,
/// with uncorrelated initial data.
ExpansionCoefficients example1_expansion(const ScenarioParams& p, const CorrelatedInitialData& init);

/// Closed-form coefficients (c0, 0, c2, c3) for U = beta1 q x^2 + beta2 q^2 x
/// with uncorrelated initial data.
ExpansionCoefficients example2_expansion(const ScenarioParams& p, const CorrelatedInitialData& init);

/// Closed-form coefficients (c0, c1, c2) for U = beta1 q x^2 + beta2 q^2 x
/// with <dq dp>_0 and <dq dx>_0 correlations.
ExpansionCoefficients example2_correlated_expansion(const ScenarioParams& p,
                                                    const CorrelatedInitialData& init);

/// Upper bound on the violation time for a bilinear coupling g = beta1*gamma1
/// acting on a squeezed correlated state:
/// t* <= |2 / sqrt(4 w^2 - 2 (1+2 z2) w)|, w = <dq dx>_0 g,
/// defined only when the radicand is positive.
std::optional<double> violation_time_bound_quadratic(const CorrelatedInitialData& init,
                                                     double beta1_gamma1);

/// General first-order bound
/// t* <= |-(z1 + z2 + 2 z1 z2 - 2 qp0^2) / (4 qp0 qx0 (beta1 x0 + beta2 q0))|,
/// absent when the denominator vanishes.
std::optional<double> violation_time_bound_general(const CorrelatedInitialData& init,
                                                   const ScenarioParams& p);

struct TaylorOptions {
    double step = 1e-2;  // outermost finite-difference step; levels step, step/2, step/4
    double dt = 1e-4;    // integrator step for the underlying trajectories
    int order_cap = 0;   // 0 = choose 2 + order * max(1, degree - 1) automatically
};

struct TaylorResult {
    ExpansionCoefficients coeffs;
    double max_level_diff = 0.0; // worst relative gap between successive Richardson levels
    bool converged = true;       // max_level_diff <= 1e-4
};

/// Extracts c[0..order] of f(t) from short integrations: central differences
/// over three step levels with two Richardson stages. order <= 3. c[0] is the
/// exact initial value.
TaylorResult numeric_taylor(const GaussianStateSpec& initial, const PolynomialPotential& pot,
                            int order, const TaylorOptions& opts = {});

} // namespace hybridsim

#endif
