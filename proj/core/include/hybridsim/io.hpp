#ifndef HYBRIDSIM_IO_HPP
#define HYBRIDSIM_IO_HPP

#include <iosfwd>
#include <string>

#include "hybridsim/dynamics.hpp"
#include "hybridsim/koopman.hpp"

namespace hybridsim {

/// Shortest round-trip decimal representation (printf %.17g); all CSV output
/// uses it so that identical runs are byte-identical.
std::string format_double(double v);

/// Header: t,f,var_q,var_p,cov_qp,var_x,var_k,cov_xk,cov_qx,cov_qk,cov_px,cov_pk,Q,P,X,K,valid
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

/// Header: t,qbar,pbar,xbar,kbar,pxbar,pkbar,E_q,E_c
void write_koopman_csv(std::ostream& os, const koopman::KoopmanTrajectory& traj);

/// Number of worker threads to use: min(requested or hardware, HYBRIDSIM_THREADS).
int thread_budget(int requested = 0);

} // namespace hybridsim

#endif
