#include "hybridsim/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <thread>

namespace hybridsim {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "t,f,var_q,var_p,cov_qp,var_x,var_k,cov_xk,cov_qx,cov_qk,cov_px,cov_pk,Q,P,X,K,valid\n";
    for (const auto& s : traj.samples) {
        os << format_double(s.t) << ',' << format_double(s.f) << ',' << format_double(s.second.var_q)
           << ',' << format_double(s.second.var_p) << ',' << format_double(s.second.cov_qp) << ','
           << format_double(s.second.var_x) << ',' << format_double(s.second.var_k) << ','
           << format_double(s.second.cov_xk) << ',' << format_double(s.second.cov_qx) << ','
           << format_double(s.second.cov_qk) << ',' << format_double(s.second.cov_px) << ','
           << format_double(s.second.cov_pk) << ',' << format_double(s.means.q) << ','
           << format_double(s.means.p) << ',' << format_double(s.means.x) << ','
           << format_double(s.means.k) << ',' << (s.valid ? 1 : 0) << '\n';
    }
}

void write_koopman_csv(std::ostream& os, const koopman::KoopmanTrajectory& traj) {
    os << "t,qbar,pbar,xbar,kbar,pxbar,pkbar,E_q,E_c\n";
    for (const auto& s : traj.samples) {
        os << format_double(s.t) << ',' << format_double(s.state.qbar) << ','
           << format_double(s.state.pbar) << ',' << format_double(s.state.xbar) << ','
           << format_double(s.state.kbar) << ',' << format_double(s.state.pxbar) << ','
           << format_double(s.state.pkbar) << ',' << format_double(s.energy_q) << ','
           << format_double(s.energy_c) << '\n';
    }
}

int thread_budget(int requested) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* env = std::getenv("HYBRIDSIM_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0 && cap < n) n = cap;
    }
    return n;
}

} // namespace hybridsim
