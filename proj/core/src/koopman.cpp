#include "hybridsim/koopman.hpp"

#include <cmath>
#include <stdexcept>

namespace hybridsim::koopman {

Coupling Coupling::constrained(double a1x, double a1k, double a2x, double a2k) {
    Coupling c;
    c.a1x = a1x;
    c.a1k = a1k;
    c.a2x = a2x;
    c.a2k = a2k;
    c.b2x = a1x;
    c.b2k = a1k;
    c.b1x = -a2x;
    c.b1k = -a2k;
    return c;
}

bool Coupling::satisfies_constraint(double tol) const {
    return std::abs(b2x - a1x) <= tol && std::abs(b2k - a1k) <= tol &&
           std::abs(b1x + a2x) <= tol && std::abs(b1k + a2k) <= tol;
}

Rhs6 rhs_constrained_form(const KoopmanState& s, const Coupling& c) {
    return {
        s.omega_q * s.pbar + 2.0 * c.a2x * s.xbar + 2.0 * c.a2k * s.kbar,
        -s.omega_q * s.qbar - 2.0 * c.a1x * s.xbar - 2.0 * c.a1k * s.kbar,
        s.omega_c * s.kbar,
        -s.omega_c * s.xbar,
        s.omega_c * s.pkbar - 2.0 * c.b2x * s.qbar + 2.0 * c.b1x * s.pbar,
        -s.omega_c * s.pxbar - 2.0 * c.b2k * s.qbar + 2.0 * c.b1k * s.pbar,
    };
}

Rhs6 rhs_constrained(const KoopmanState& s, const Coupling& c) {
    if (!c.satisfies_constraint(1e-12))
        throw std::invalid_argument("rhs_constrained: coupling violates the no-unobservables constraint");
    return rhs_constrained_form(s, c);
}

Rhs6 rhs_general(const KoopmanState& s, const Coupling& c) {
    return {
        s.omega_q * s.pbar + (c.a2x - c.b1x) * s.xbar + (c.a2k - c.b1k) * s.kbar +
            (c.a1x - c.b2x) * s.pxbar + (c.a1k - c.b2k) * s.pkbar,
        -s.omega_q * s.qbar - (c.b2x + c.a1x) * s.xbar - (c.b2k + c.a1k) * s.kbar +
            (c.b1x + c.a2x) * s.pxbar + (c.b1k + c.a2k) * s.pkbar,
        s.omega_c * s.kbar - (c.b1x + c.a2x) * s.qbar + (c.a1x - c.b2x) * s.pbar,
        -s.omega_c * s.xbar - (c.b1k + c.a2k) * s.qbar + (c.a1k - c.b2k) * s.pbar,
        s.omega_c * s.pkbar + (c.b1x - c.a2x) * s.pbar - (c.b2x + c.a1x) * s.qbar,
        -s.omega_c * s.pxbar + (c.b1k - c.a2k) * s.pbar - (c.b2k + c.a1k) * s.qbar,
    };
}

namespace {

std::array<double, 6> pack(const KoopmanState& s) {
    return {s.qbar, s.pbar, s.xbar, s.kbar, s.pxbar, s.pkbar};
}

KoopmanState unpack(const std::array<double, 6>& v, const KoopmanState& proto) {
    KoopmanState s = proto;
    s.qbar = v[0];
    s.pbar = v[1];
    s.xbar = v[2];
    s.kbar = v[3];
    s.pxbar = v[4];
    s.pkbar = v[5];
    return s;
}

Sample make_sample(double t, const KoopmanState& s) {
    Sample smp;
    smp.t = t;
    smp.state = s;
    smp.energy_q = 0.5 * s.omega_q * (s.qbar * s.qbar + s.pbar * s.pbar);
    smp.energy_c = 0.5 * s.omega_c * (s.xbar * s.xbar + s.kbar * s.kbar);
    return smp;
}

template <typename RhsFn>
KoopmanTrajectory integrate_impl(const KoopmanState& initial, double dt, std::int64_t steps,
                                 std::int64_t stride, RhsFn&& rhs) {
    if (!(dt > 0.0)) throw std::invalid_argument("koopman integrate: dt must be > 0");
    stride = std::max<std::int64_t>(stride, 1);

    KoopmanTrajectory traj;
    traj.samples.reserve(static_cast<std::size_t>(steps / stride) + 2);
    std::array<double, 6> y = pack(initial);
    traj.samples.push_back(make_sample(0.0, initial));

    std::array<double, 6> k1, k2, k3, k4, tmp;
    for (std::int64_t i = 0; i < steps; ++i) {
        k1 = rhs(unpack(y, initial));
        for (int j = 0; j < 6; ++j) tmp[j] = y[j] + 0.5 * dt * k1[j];
        k2 = rhs(unpack(tmp, initial));
        for (int j = 0; j < 6; ++j) tmp[j] = y[j] + 0.5 * dt * k2[j];
        k3 = rhs(unpack(tmp, initial));
        for (int j = 0; j < 6; ++j) tmp[j] = y[j] + dt * k3[j];
        k4 = rhs(unpack(tmp, initial));
        for (int j = 0; j < 6; ++j) y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);

        if ((i + 1) % stride == 0 || i + 1 == steps)
            traj.samples.push_back(make_sample(dt * static_cast<double>(i + 1), unpack(y, initial)));
    }
    return traj;
}

} // namespace

KoopmanTrajectory integrate(const KoopmanState& initial, const Coupling& c, double dt,
                            std::int64_t steps, bool constrained, std::int64_t sample_stride) {
    if (constrained) {
        if (!c.satisfies_constraint(1e-12))
            throw std::invalid_argument("koopman integrate: coupling violates the constraint");
        return integrate_impl(initial, dt, steps, sample_stride,
                              [&](const KoopmanState& s) { return rhs_constrained_form(s, c); });
    }
    return integrate_impl(initial, dt, steps, sample_stride,
                          [&](const KoopmanState& s) { return rhs_general(s, c); });
}

double backreaction_deviation(const KoopmanState& initial, const Coupling& c, double dt,
                              std::int64_t steps) {
    const auto coupled = integrate_impl(initial, dt, steps, 1, [&](const KoopmanState& s) {
        return rhs_constrained_form(s, c);
    });
    const Coupling zero{};
    const auto free = integrate_impl(initial, dt, steps, 1, [&](const KoopmanState& s) {
        return rhs_constrained_form(s, zero);
    });

    double dev = 0.0;
    for (std::size_t i = 0; i < coupled.samples.size(); ++i) {
        const auto& a = coupled.samples[i].state;
        const auto& b = free.samples[i].state;
        dev = std::max(dev, std::hypot(a.xbar - b.xbar, a.kbar - b.kbar));
    }
    return dev;
}

double fit_energy_growth_exponent(const KoopmanTrajectory& traj, double t_min, double t_max) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::int64_t n = 0;
    for (const auto& smp : traj.samples) {
        if (smp.t < t_min || smp.t > t_max || smp.energy_q <= 0.0) continue;
        const double lx = std::log(smp.t);
        const double ly = std::log(smp.energy_q);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n < 2) throw std::invalid_argument("growth fit: not enough samples in the window");
    const double dn = static_cast<double>(n);
    return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

} // namespace hybridsim::koopman
