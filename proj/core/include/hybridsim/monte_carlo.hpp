#ifndef HYBRIDSIM_MONTE_CARLO_HPP
#define HYBRIDSIM_MONTE_CARLO_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "hybridsim/potentials.hpp"
#include "hybridsim/states.hpp"

namespace hybridsim::mc {

/// Phase-space ensemble discretizing the density along characteristics.
/// Particles are (q, p, x, k). Given the seed, construction and evolution are
/// byte-deterministic (fixed generator, fixed Box-Muller transform, fixed
/// reduction blocking), independent of the thread budget.
struct Ensemble {
    std::vector<std::array<double, 4>> particles;
    std::uint64_t seed = 0;

    std::size_t count() const { return particles.size(); }
};

struct MomentEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// count i.i.d. draws from the Gaussian spec via mt19937_64 + Box-Muller and a
/// Cholesky factor of the covariance. Rejects non-positive-definite input.
Ensemble sample_gaussian(const GaussianStateSpec& spec, std::size_t count, std::uint64_t seed);

/// Advances every particle by RK4 under q' = p, p' = -dV/dq, x' = k,
/// k' = -dV/dx. Throws numerical_error (with particle index in the message)
/// if a coordinate leaves the finite range. Runs on up to `threads` threads
/// (0 = library default from HYBRIDSIM_THREADS / hardware).
void evolve_ensemble(Ensemble& e, const PolynomialPotential& pot, double dt, std::int64_t steps,
                     int threads = 0);

/// Ensemble mean of each coordinate.
std::array<double, 4> ensemble_means(const Ensemble& e);

/// Central sample moment <dp^k1 dk^k2 dq^n1 dx^n2> with a delete-one-block
/// jackknife standard error (100 index blocks, means held at the full-sample
/// values). Order-0 returns exactly 1 with zero error.
MomentEstimate estimate_moment(const Ensemble& e, const MultiIndex& idx);

/// All central moments with order <= max_order in one ensemble pass, aligned
/// with shared_layout(max_order).indices().
std::vector<MomentEstimate> estimate_moments_up_to(const Ensemble& e, int max_order);

/// f = <dp^2><dq^2> - <dq dp>^2 - 1/4 of the ensemble, jackknifed as a whole.
MomentEstimate estimate_hur(const Ensemble& e);

/// Mean single-particle energy (p^2 + k^2)/2 + V(q, x), jackknifed.
MomentEstimate estimate_energy(const Ensemble& e, const PolynomialPotential& pot);

} // namespace hybridsim::mc

#endif
