#include "hybridsim/expansions.hpp"

#include <cmath>
#include <stdexcept>

#include "hybridsim/dynamics.hpp"

namespace hybridsim {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

} // namespace

void CorrelatedInitialData::validate() const {
    require(z1 > -0.5 && z2 > -0.5 && y1 > -0.5 && y2 > -0.5,
            "variance offsets must lie in (-1/2, inf)");
    require(std::isfinite(qp0) && std::isfinite(qx0), "correlations must be finite");
}

CovarianceMatrix CorrelatedInitialData::covariance() const {
    validate();
    CovarianceMatrix cov = CovarianceMatrix::diagonal(0.5 + z1, 0.5 + z2, 0.5 + y2, 0.5 + y1);
    cov.set(kQ, kP, qp0);
    cov.set(kQ, kX, qx0);
    return cov;
}

GaussianStateSpec CorrelatedInitialData::state() const { return {means, covariance()}; }

ExpansionCoefficients single_dof_expansion(const PolynomialPotential& pot,
                                           const CorrelatedInitialData& init) {
    init.validate();
    require(init.uncorrelated(), "single_dof_expansion: initial data must be uncorrelated");
    for (const auto& t : pot.terms())
        require(t.n == 0, "single_dof_expansion: potential must depend on q only");

    const double z1 = init.z1, z2 = init.z2;
    const double sqq = 0.5 + z1;
    const double qp0 = init.qp0; // zero by precondition; kept for the moment structure

    // Gaussian mixed moments <dp dq^k> of the initial data
    const double m_pq2 = 0.0;
    const double m_pq3 = 3.0 * qp0 * sqq;
    const double m_pq4 = 0.0;
    const double m_pq5 = 15.0 * qp0 * sqq * sqq;

    const double q0 = init.means.q, x0 = init.means.x;
    const double v3 = pot.derivative(3, 0, q0, x0);
    const double v4 = pot.derivative(4, 0, q0, x0);
    const double v5 = pot.derivative(5, 0, q0, x0);
    const double v6 = pot.derivative(6, 0, q0, x0);

    const double c0 = 0.5 * (z1 + z2 + 2.0 * z1 * z2);
    const double c1 = -(1.0 + 2.0 * z1) / 120.0 *
                      (60.0 * m_pq2 * v3 + 20.0 * m_pq3 * v4 + 5.0 * m_pq4 * v5 + m_pq5 * v6);
    return {{c0, c1}};
}

ExpansionCoefficients general_linear_expansion(const PolynomialPotential& pot,
                                               const CorrelatedInitialData& init) {
    init.validate();
    const double z1 = init.z1, z2 = init.z2, y2 = init.y2;
    const double qp0 = init.qp0, qx0 = init.qx0;
    const double q0 = init.means.q, x0 = init.means.x;

    auto u = [&](int i, int j) { return pot.derivative(i, j, q0, x0); };

    const double c0 = 0.5 * (z1 + z2 + 2.0 * z1 * z2 - 2.0 * qp0 * qp0);
    const double bracket =
        32.0 * u(1, 1) + 8.0 * (1.0 + 2.0 * y2) * u(1, 3) +
        (1.0 + 4.0 * y2 + 4.0 * y2 * y2) * u(1, 5) + 32.0 * qx0 * u(2, 2) +
        8.0 * qx0 * (1.0 + 2.0 * y2) * u(2, 4) + (8.0 + 16.0 * z1) * u(3, 1) +
        (2.0 + 16.0 * qx0 * qx0 + 4.0 * y2 + 4.0 * z1 + 8.0 * y2 * z1) * u(3, 3) +
        8.0 * qx0 * (1.0 + 2.0 * z1) * u(4, 2) + (1.0 + 4.0 * z1 + 4.0 * z1 * z1) * u(5, 1);
    const double c1 = qp0 * qx0 * bracket / 16.0;
    return {{c0, c1}};
}

ExpansionCoefficients example1_expansion(const ScenarioParams& p, const CorrelatedInitialData& init) {
    init.validate();
    require(init.uncorrelated(), "example1_expansion: initial data must be uncorrelated");
    const double z1 = init.z1, z2 = init.z2, y2 = init.y2;
    const double q0 = init.means.q, x0 = init.means.x, k0 = init.means.k;
    const double b1 = p.beta1, b2 = p.beta2, g1 = p.gamma1, g2 = p.gamma2;

    const double c0 = 0.5 * (z1 + z2 + 2.0 * z1 * z2);

    const double coupling_factor =
        b1 * b1 + 4.0 * q0 * b1 * b2 + 2.0 * b2 * b2 * (1.0 + 2.0 * q0 * q0 + 2.0 * z1);
    const double profile_factor =
        g1 * g1 + 4.0 * x0 * g1 * g2 + (1.0 + 4.0 * x0 * x0 + 2.0 * y2) * g2 * g2;
    const double c2 =
        0.25 * (1.0 + 2.0 * y2) * (1.0 + 2.0 * z1) * coupling_factor * profile_factor;

    // third order: half the drift of the quadratic coefficient under the mean
    // motion (Q' = p0, X' = k0), with gp = g'(x0), gpp = g''
    const double p0 = init.means.p;
    const double sqq = 0.5 + z1;
    const double sxx = 0.5 + y2;
    const double gp = g1 + 2.0 * x0 * g2;
    const double gpp = 2.0 * g2;
    const double bq = b1 + 2.0 * b2 * q0;
    const double c3 = sqq * sxx *
                      (coupling_factor * gp * gpp * k0 +
                       2.0 * b2 * bq * profile_factor * p0);

    return {{c0, 0.0, c2, c3}};
}

ExpansionCoefficients example2_expansion(const ScenarioParams& p, const CorrelatedInitialData& init) {
    init.validate();
    require(init.uncorrelated(), "example2_expansion: initial data must be uncorrelated");
    const double z1 = init.z1, z2 = init.z2, y2 = init.y2;
    const double q0 = init.means.q, p0 = init.means.p, x0 = init.means.x, k0 = init.means.k;
    const double b1 = p.beta1, b2 = p.beta2;

    const double c0 = 0.5 * (z1 + z2 + 2.0 * z1 * z2);
    const double c2 = 0.25 * (1.0 + 2.0 * y2) * (1.0 + 2.0 * z1) *
                      ((1.0 + 4.0 * x0 * x0 + 2.0 * y2) * b1 * b1 + 8.0 * q0 * x0 * b1 * b2 +
                       2.0 * b2 * b2 * (1.0 + 2.0 * q0 * q0 + 2.0 * z1));
    // mean-drift derivative of the mixed curvature: d/dt (b1 x + b2 q)^2 at t=0
    const double c3 =
        (1.0 + 2.0 * y2) * (1.0 + 2.0 * z1) * (b1 * k0 + b2 * p0) * (b1 * x0 + b2 * q0);
    return {{c0, 0.0, c2, c3}};
}

ExpansionCoefficients example2_correlated_expansion(const ScenarioParams& p,
                                                    const CorrelatedInitialData& init) {
    init.validate();
    const double z1 = init.z1, z2 = init.z2, y2 = init.y2;
    const double qp0 = init.qp0, qx0 = init.qx0;
    const double q0 = init.means.q, p0 = init.means.p, x0 = init.means.x, k0 = init.means.k;
    const double b1 = p.beta1, b2 = p.beta2;

    const double c0 = 0.5 * (z1 + z2 + 2.0 * z1 * z2 - 2.0 * qp0 * qp0);
    // 2 qp0 qx0 U^{(1,1)}(q0, x0) with U^{(1,1)} = 2 (b1 x0 + b2 q0)
    const double c1 = 4.0 * qp0 * qx0 * (b1 * x0 + b2 * q0);

    const double yz = (1.0 + 2.0 * y2) * (1.0 + 2.0 * z1);
    const double bracket =
        b1 * (8.0 * k0 * qx0 * qp0 + 4.0 * x0 * (qx0 + 2.0 * qx0 * z2) + yz * (1.0 + 2.0 * y2) * b1 +
              4.0 * x0 * x0 * b1 *
                  (1.0 - 4.0 * qx0 * qx0 + 2.0 * y2 + 2.0 * z1 + 4.0 * y2 * z1)) +
        4.0 * b2 *
            (2.0 * p0 * qp0 * qx0 + 2.0 * b1 * qx0 * yz +
             q0 * (qx0 + 2.0 * z2 * qx0 - 8.0 * x0 * b1 * qx0 * qx0 + 2.0 * x0 * b1 * yz)) +
        2.0 * b2 * b2 *
            (q0 * q0 * (2.0 - 8.0 * qx0 * qx0 + 4.0 * y2 + 4.0 * z1 + 8.0 * y2 * z1) +
             (1.0 + 2.0 * z1) * (4.0 * qx0 * qx0 + yz));
    const double c2 = 0.25 * bracket;

    return {{c0, c1, c2}};
}

std::optional<double> violation_time_bound_quadratic(const CorrelatedInitialData& init,
                                                     double beta1_gamma1) {
    const double w = init.qx0 * beta1_gamma1;
    const double radicand = 4.0 * w * w - 2.0 * (1.0 + 2.0 * init.z2) * w;
    if (!(radicand > 0.0)) return std::nullopt;
    return std::abs(2.0 / std::sqrt(radicand));
}

std::optional<double> violation_time_bound_general(const CorrelatedInitialData& init,
                                                   const ScenarioParams& p) {
    const double denom =
        4.0 * init.qp0 * init.qx0 * (p.beta1 * init.means.x + p.beta2 * init.means.q);
    if (denom == 0.0) return std::nullopt;
    const double num = init.z1 + init.z2 + 2.0 * init.z1 * init.z2 - 2.0 * init.qp0 * init.qp0;
    return std::abs(-num / denom);
}

TaylorResult numeric_taylor(const GaussianStateSpec& initial, const PolynomialPotential& pot,
                            int order, const TaylorOptions& opts) {
    if (order < 0 || order > 3) throw std::invalid_argument("numeric_taylor: order must be 0..3");
    if (!(opts.step > 0.0) || !(opts.dt > 0.0))
        throw std::invalid_argument("numeric_taylor: step and dt must be > 0");

    const int needed_cap = 2 + order * std::max(1, pot.max_degree() - 1);
    int cap = opts.order_cap > 0 ? opts.order_cap : needed_cap;
    if (cap < needed_cap)
        throw std::invalid_argument("numeric_taylor: order cap below 2 + order*(degree-1)");

    const double f0 = hur_value(build_moment_table(initial, 2).covariance());

    TaylorResult result;
    result.coeffs.c.assign(static_cast<std::size_t>(order) + 1, 0.0);
    result.coeffs.c[0] = f0;
    if (order == 0) return result;

    auto f_at = [&](double t) -> double {
        if (t == 0.0) return f0;
        const auto steps = static_cast<std::int64_t>(std::ceil(std::abs(t) / opts.dt - 1e-9));
        IntegratorConfig cfg;
        cfg.dt = std::abs(t) / static_cast<double>(steps);
        if (t < 0.0) cfg.dt = -cfg.dt; // short backward runs are legitimate here
        cfg.steps = steps;
        cfg.order_cap = cap;
        cfg.closure = Closure::wick;
        cfg.allow_invalid_initial = true;
        cfg.sample_stride = steps;
        // run_integration validates dt > 0; drive the signed step directly
        IntegratorConfig fwd = cfg;
        fwd.dt = std::abs(cfg.dt);
        Trajectory traj;
        if (t > 0.0) {
            traj = integrate(initial, pot, fwd);
        } else {
            // integrate the time-reversed system: (q,p,x,k) -> (q,-p,x,-k) flips the flow
            GaussianStateSpec reflected = initial;
            reflected.means.p = -reflected.means.p;
            reflected.means.k = -reflected.means.k;
            CovarianceMatrix cov = reflected.cov;
            for (int i = 0; i < 4; ++i)
                for (int j = i; j < 4; ++j) {
                    const bool flip = ((i == kP) + (i == kK) + (j == kP) + (j == kK)) % 2 == 1;
                    if (flip) cov.set(i, j, -cov(i, j));
                }
            reflected.cov = cov;
            traj = integrate(reflected, pot, fwd);
        }
        return traj.back().f;
    };

    // f at +-h, +-h/2, +-h/4, +-h/8 serves three stencil levels
    const double h = opts.step;
    double fp[4], fm[4]; // fp[i] = f(h / 2^i)
    for (int i = 0; i < 4; ++i) {
        const double hi = h / static_cast<double>(1 << i);
        fp[i] = f_at(hi);
        fm[i] = f_at(-hi);
    }

    auto richardson = [&](const double d[3], int n) {
        const double r10 = (4.0 * d[1] - d[0]) / 3.0;
        const double r11 = (4.0 * d[2] - d[1]) / 3.0;
        const double r2 = (16.0 * r11 - r10) / 15.0;
        const double rel = std::abs(r11 - r10) / std::max(std::abs(r2), 1e-6);
        result.max_level_diff = std::max(result.max_level_diff, rel);
        result.coeffs.c[static_cast<std::size_t>(n)] = r2;
    };

    {
        double d[3];
        for (int i = 0; i < 3; ++i) {
            const double hi = h / static_cast<double>(2 << i); // stencil uses hi = h/2^(i+1)
            d[i] = (fp[i + 1] - fm[i + 1]) / (2.0 * hi);
        }
        richardson(d, 1);
    }
    if (order >= 2) {
        double d[3];
        for (int i = 0; i < 3; ++i) {
            const double hi = h / static_cast<double>(2 << i);
            d[i] = (fp[i + 1] - 2.0 * f0 + fm[i + 1]) / (hi * hi) / 2.0;
        }
        richardson(d, 2);
    }
    if (order >= 3) {
        double d[3];
        for (int i = 0; i < 3; ++i) {
            const double hi = h / static_cast<double>(2 << i);
            d[i] = (fp[i] - 2.0 * fp[i + 1] + 2.0 * fm[i + 1] - fm[i]) / (2.0 * hi * hi * hi) / 6.0;
        }
        richardson(d, 3);
    }

    result.converged = result.max_level_diff <= 1e-4;
    return result;
}

} // namespace hybridsim
