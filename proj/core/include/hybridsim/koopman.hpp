#ifndef HYBRIDSIM_KOOPMAN_HPP
#define HYBRIDSIM_KOOPMAN_HPP

#include <array>
#include <cstdint>
#include <vector>

namespace hybridsim::koopman {

/// Real decomposition of the bilinear coupling amplitudes: a* are the real and
/// imaginary parts of the position/momentum channel couplings to observables,
/// b* the counterparts that multiply the unobservable shift and boost
/// operators. The constrained construction removes every unobservable
/// operator from the quantum equations: b2 = a1 and b1 = -a2 per channel.
struct Coupling {
    double a1x = 0, a2x = 0, a1k = 0, a2k = 0;
    double b1x = 0, b2x = 0, b1k = 0, b2k = 0;

    static Coupling constrained(double a1x, double a1k, double a2x, double a2k);
    bool satisfies_constraint(double tol = 0.0) const;
};

/// The six rescaled variables plus the two oscillator frequencies.
struct KoopmanState {
    double qbar = 0, pbar = 0;   // quantum pair
    double xbar = 0, kbar = 0;   // classical pair
    double pxbar = 0, pkbar = 0; // unobservable shift/boost expectations
    double omega_q = 1.0, omega_c = 1.0;
};

using Rhs6 = std::array<double, 6>; // (qbar, pbar, xbar, kbar, pxbar, pkbar) dot

/// Constrained equations of motion: the classical pair drives the quantum one,
/// (xbar, kbar) evolve autonomously, and the shift/boost pair absorbs the
/// back-action. Throws std::invalid_argument if c violates the constraint.
Rhs6 rhs_constrained(const KoopmanState& s, const Coupling& c);

/// Same equations evaluated without the constraint check (the form is defined
/// for any coefficients; used for back-reaction scans over arbitrary input).
Rhs6 rhs_constrained_form(const KoopmanState& s, const Coupling& c);

/// Full unconstrained system, including the shift/boost driving terms
/// (a1 - b2) px, (a1 - b2) pk on the quantum pair and the corresponding
/// qbar, pbar terms in the classical equations. Reduces exactly to
/// rhs_constrained when the constraint holds.
Rhs6 rhs_general(const KoopmanState& s, const Coupling& c);

struct Sample {
    double t = 0;
    KoopmanState state;
    double energy_q = 0; // omega_q (qbar^2 + pbar^2)/2
    double energy_c = 0; // omega_c (xbar^2 + kbar^2)/2
};

struct KoopmanTrajectory {
    std::vector<Sample> samples;
};

/// RK4 trajectory with per-sample sector energies. constrained selects the
/// equation set; sample_stride thins the record (first/last always kept).
KoopmanTrajectory integrate(const KoopmanState& initial, const Coupling& c, double dt,
                            std::int64_t steps, bool constrained, std::int64_t sample_stride = 1);

/// Max distance of the classical (xbar, kbar) trajectory under coupling c from
/// the uncoupled one, over the whole run (constrained-form equations). The
/// classical pair is autonomous there, so the contract is ~0 for any c.
double backreaction_deviation(const KoopmanState& initial, const Coupling& c, double dt,
                              std::int64_t steps);

/// Least-squares slope of log E_q against log t over samples with
/// t_min <= t <= t_max. Resonant driving gives slope ~2.
double fit_energy_growth_exponent(const KoopmanTrajectory& traj, double t_min, double t_max);

} // namespace hybridsim::koopman

#endif
