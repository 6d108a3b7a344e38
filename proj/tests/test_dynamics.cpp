#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "hybridsim/dynamics.hpp"
#include "hybridsim/expansions.hpp"
#include "hybridsim/monte_carlo.hpp"
#include "hybridsim/potentials.hpp"
#include "test_support.hpp"

using namespace hybridsim;
using test_support::random_valid_covariance;

namespace {

// exact second-moment flow for quadratic potentials: sigma' = A sigma + sigma A^T,
// mu' = A mu, solved by eigendecomposition of A (test oracle)
struct QuadraticExact {
    Eigen::Matrix4cd v, vinv;
    Eigen::Vector4cd lambda;
    Eigen::Matrix4d sigma0;
    Eigen::Vector4d mu0;

    QuadraticExact(const PolynomialPotential& pot, const GaussianStateSpec& spec) {
        Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
        a(0, 1) = 1.0;
        a(2, 3) = 1.0;
        a(1, 0) = -pot.derivative(2, 0, 0, 0);
        a(1, 2) = -pot.derivative(1, 1, 0, 0);
        a(3, 0) = -pot.derivative(1, 1, 0, 0);
        a(3, 2) = -pot.derivative(0, 2, 0, 0);
        Eigen::EigenSolver<Eigen::Matrix4d> es(a);
        v = es.eigenvectors();
        lambda = es.eigenvalues();
        vinv = v.inverse();
        for (int i = 0; i < 4; ++i) {
            mu0(i) = spec.means.to_array()[static_cast<std::size_t>(i)];
            for (int j = 0; j < 4; ++j) sigma0(i, j) = spec.cov(i, j);
        }
    }

    Eigen::Matrix4d propagator(double t) const {
        Eigen::Vector4cd e;
        for (int i = 0; i < 4; ++i) e(i) = std::exp(lambda(i) * t);
        return (v * e.asDiagonal() * vinv).real();
    }

    double f_at(double t) const {
        const Eigen::Matrix4d u = propagator(t);
        const Eigen::Matrix4d s = u * sigma0 * u.transpose();
        return s(1, 1) * s(0, 0) - s(0, 1) * s(0, 1) - 0.25;
    }
};

GaussianStateSpec vacuum_spec() { return {{}, CovarianceMatrix::vacuum()}; }

} // namespace

TEST_CASE("mean_rhs pinned cases") {
    // harmonic force with odd moments vanishing
    auto pot = quadratic_potential(1.0, 1.0, 0.0);
    HybridState state = HybridState::from_spec({{1, 0, 0, 0}, CovarianceMatrix::vacuum()}, 4);
    auto d = mean_rhs(state, pot);
    CHECK(d[0] == doctest::Approx(0.0));
    CHECK(d[1] == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(d[2] == doctest::Approx(0.0));
    CHECK(d[3] == doctest::Approx(0.0));

    // free motion
    PolynomialPotential zero;
    HybridState s2 = HybridState::from_spec({{0.3, 0.7, -0.5, 0.2}, CovarianceMatrix::vacuum()}, 4);
    auto d2 = mean_rhs(s2, zero);
    CHECK(d2[0] == doctest::Approx(0.7));
    CHECK(d2[1] == 0.0);
    CHECK(d2[2] == doctest::Approx(0.2));
    CHECK(d2[3] == 0.0);

    // fluctuation-induced force: V = b q x^2, dP/dt = -b (X^2 + var_x)
    PolynomialPotential vb;
    vb.add_term(1, 2, 0.8);
    HybridState s3 = HybridState::from_spec(vacuum_spec(), 4);
    auto d3 = mean_rhs(s3, vb);
    CHECK(d3[1] == doctest::Approx(-0.8 * 0.5).epsilon(1e-14));
}

TEST_CASE("moment_rhs pinned cases") {
    std::mt19937_64 rng(51);
    const CovarianceMatrix cov = random_valid_covariance(rng);
    HybridState state = HybridState::from_spec({{0.2, -0.1, 0.4, 0.3}, cov}, 4);

    // d var_q / dt = 2 cov_qp for any potential
    ScenarioParams p;
    p.alpha = 1.3;
    p.beta1 = 0.7;
    p.beta2 = -0.4;
    p.gamma1 = 1.0;
    p.gamma2 = 0.5;
    const auto dm = moment_rhs(state, example1_potential(p));
    CHECK(dm.at({0, 0, 2, 0}) == doctest::Approx(2.0 * cov(kQ, kP)).epsilon(1e-13));

    // free particle: d cov_qp / dt = var_p
    PolynomialPotential zero;
    const auto dfree = moment_rhs(state, zero);
    CHECK(dfree.at({1, 0, 1, 0}) == doctest::Approx(cov(kP, kP)).epsilon(1e-13));

    // V = alpha q^2/2 + b q x: d var_p/dt = -2 alpha cov_qp - 2 b cov_px
    const double alpha = 0.9, b = 0.35;
    const auto dquad = moment_rhs(state, quadratic_potential(alpha, 0.0, b));
    CHECK(dquad.at({2, 0, 0, 0}) ==
          doctest::Approx(-2.0 * alpha * cov(kQ, kP) - 2.0 * b * cov(kP, kX)).epsilon(1e-13));

    // normalization and first moments never move
    CHECK(dquad.at({0, 0, 0, 0}) == 0.0);
    CHECK(dquad.at({1, 0, 0, 0}) == 0.0);
    CHECK(dquad.at({0, 0, 1, 0}) == 0.0);
}

TEST_CASE("free-particle second moments follow the exact law") {
    std::mt19937_64 rng(53);
    const CovarianceMatrix cov = random_valid_covariance(rng);
    GaussianStateSpec spec{{0.1, 0.2, 0.3, -0.4}, cov};
    PolynomialPotential zero;
    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 2000;
    cfg.order_cap = 4;
    cfg.sample_stride = 200;
    const Trajectory traj = integrate(spec, zero, cfg);
    for (const auto& s : traj.samples) {
        const double expected = cov(kQ, kQ) + 2.0 * cov(kQ, kP) * s.t + cov(kP, kP) * s.t * s.t;
        CHECK(s.second.var_q == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("quadratic dynamics: closure exactness and agreement with the exact flow") {
    auto pot = quadratic_potential(1.0, 1.0, 0.1);
    std::mt19937_64 rng(55);
    GaussianStateSpec spec{{0.4, -0.3, 0.6, 0.1}, random_valid_covariance(rng)};

    IntegratorConfig c2;
    c2.dt = 1e-3;
    c2.steps = 3000;
    c2.order_cap = 2;
    c2.sample_stride = 300;
    IntegratorConfig c6 = c2;
    c6.order_cap = 6;

    const Trajectory t2 = integrate(spec, pot, c2);
    const Trajectory t6 = integrate(spec, pot, c6);
    REQUIRE(t2.samples.size() == t6.samples.size());
    for (std::size_t i = 0; i < t2.samples.size(); ++i)
        CHECK(t2.samples[i].f == doctest::Approx(t6.samples[i].f).epsilon(1e-12).scale(1.0));

    const QuadraticExact exact(pot, spec);
    for (const auto& s : t2.samples)
        CHECK(s.f == doctest::Approx(exact.f_at(s.t)).epsilon(1e-10).scale(1.0));
}

TEST_CASE("energy conservation") {
    // quadratic: conserved to 1e-6 relative
    auto pot = quadratic_potential(1.0, 1.0, 0.1);
    GaussianStateSpec spec{{1.0, 0.0, -0.5, 0.3}, CovarianceMatrix::vacuum()};
    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 5000;
    cfg.order_cap = 4;
    cfg.sample_stride = 500;

    const HybridState initial = HybridState::from_spec(spec, cfg.order_cap);
    const double e0 = mean_energy(initial, pot);
    const Trajectory traj = integrate(spec, pot, cfg);
    for (const auto& s : traj.samples) {
        MomentTable table(cfg.order_cap);
        fill_gaussian_moments(s.second.covariance(), table.layout(), table.values());
        // quadratic flow preserves Gaussianity, so the Wick rebuild is exact here
        const HybridState st{s.t, s.means, table};
        CHECK(mean_energy(st, pot) == doctest::Approx(e0).epsilon(1e-6));
    }

    // cubic interaction: hierarchy energy tracks the particle-ensemble energy
    ScenarioParams p;
    p.alpha = 1.0;
    p.classical_quadratic = 1.0;
    p.beta1 = -1.0;
    p.beta2 = 2.0;
    auto pot2 = example2_potential(p);
    CorrelatedInitialData d;
    d.z1 = d.z2 = d.y1 = d.y2 = 0.1;
    d.qp0 = d.qx0 = 0.1;
    d.means = {-1, -3, 1, -1};

    IntegratorConfig c8;
    c8.dt = 1e-3;
    c8.steps = 300;
    c8.order_cap = 8;
    c8.sample_stride = 100;
    const Trajectory htraj = integrate(d.state(), pot2, c8);

    auto ens = mc::sample_gaussian(d.state(), 200000, 99);
    const auto e_start = mc::estimate_energy(ens, pot2);
    double closure_envelope = 0.0; // measured |E_hier - E_mc| + sampling error
    double max_drift = 0.0;        // hierarchy energy drift
    double e_h0 = 0.0;
    double prev = 0.0;
    for (const auto& s : htraj.samples) {
        if (s.t > prev) {
            mc::evolve_ensemble(ens, pot2, c8.dt,
                                static_cast<std::int64_t>(std::llround((s.t - prev) / c8.dt)));
            prev = s.t;
        }
        const auto e_mc = mc::estimate_energy(ens, pot2);
        // per-particle conservation: ensemble mean energy stays put
        CHECK(e_mc.value == doctest::Approx(e_start.value).epsilon(1e-5));

        MomentTable table(c8.order_cap);
        fill_gaussian_moments(s.second.covariance(), table.layout(), table.values());
        const HybridState st{s.t, s.means, table};
        const double e_h = mean_energy(st, pot2);
        if (s.t == 0.0) e_h0 = e_h;
        closure_envelope =
            std::max(closure_envelope, std::abs(e_h - e_mc.value) + 3.0 * e_mc.std_error);
        max_drift = std::max(max_drift, std::abs(e_h - e_h0));
    }
    // the hierarchy's apparent non-conservation is explained by closure error
    CHECK(max_drift <= closure_envelope + 1e-6 * std::abs(e_h0));
    // and that error stays moderate on this horizon (measured ~2.8% at t = 0.3)
    CHECK(closure_envelope <= 4e-2 * std::abs(e_h0));
}

TEST_CASE("swap symmetry: (q,p) <-> (x,k) with transposed coefficients") {
    PolynomialPotential pot;
    pot.add_term(2, 0, 0.5);
    pot.add_term(0, 2, 0.4);
    pot.add_term(1, 2, -0.3);
    pot.add_term(2, 1, 0.6);
    PolynomialPotential swapped;
    for (const auto& t : pot.terms()) swapped.add_term(t.n, t.m, t.c);

    std::mt19937_64 rng(57);
    const CovarianceMatrix cov = random_valid_covariance(rng);
    GaussianStateSpec spec{{0.2, -0.3, 0.5, 0.4}, cov};

    // swap the state: exchange (q,p) with (x,k)
    auto swap_index = [](int i) { return i == kQ ? kX : i == kP ? kK : i == kX ? kQ : kP; };
    GaussianStateSpec sspec;
    sspec.means = {spec.means.x, spec.means.k, spec.means.q, spec.means.p};
    CovarianceMatrix scov;
    for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) scov.set(i, j, cov(swap_index(i), swap_index(j)));
    sspec.cov = scov;

    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 400;
    cfg.order_cap = 6;
    cfg.sample_stride = 100;
    const Trajectory a = integrate(spec, pot, cfg);
    const Trajectory b = integrate(sspec, swapped, cfg);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].means.q == doctest::Approx(b.samples[i].means.x).epsilon(1e-12));
        CHECK(a.samples[i].means.p == doctest::Approx(b.samples[i].means.k).epsilon(1e-12));
        CHECK(a.samples[i].second.var_q ==
              doctest::Approx(b.samples[i].second.var_x).epsilon(1e-12));
        CHECK(a.samples[i].second.cov_qx ==
              doctest::Approx(b.samples[i].second.cov_qx).epsilon(1e-12));
    }
}

TEST_CASE("RK4 convergence is fourth order on quadratic flows") {
    auto pot = quadratic_potential(1.0, 1.0, 0.1);
    std::mt19937_64 rng(59);
    GaussianStateSpec spec{{0.5, -0.2, 0.1, 0.7}, random_valid_covariance(rng)};
    const QuadraticExact exact(pot, spec);
    const double horizon = 2.0;

    auto endpoint_error = [&](double dt) {
        IntegratorConfig cfg;
        cfg.dt = dt;
        cfg.steps = static_cast<std::int64_t>(horizon / dt);
        cfg.order_cap = 2;
        cfg.sample_stride = cfg.steps;
        const Trajectory traj = integrate(spec, pot, cfg);
        return std::abs(traj.back().f - exact.f_at(horizon));
    };

    const double e1 = endpoint_error(0.02);
    const double e2 = endpoint_error(0.01);
    const double ratio = e1 / e2;
    CHECK(ratio > 11.0);
    CHECK(ratio < 21.0);
}

TEST_CASE("centering invariants hold along trajectories") {
    ScenarioParams p;
    p.alpha = 1.0;
    p.classical_quadratic = 1.0;
    p.beta1 = 0.5;
    p.beta2 = 0.3;
    auto pot = example2_potential(p);
    GaussianStateSpec spec{{0.3, -0.2, 0.4, 0.5}, CovarianceMatrix::vacuum()};
    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 1000;
    cfg.order_cap = 6;
    cfg.sample_stride = 1000;
    const Trajectory traj = integrate(spec, pot, cfg);
    CHECK(traj.back().t == doctest::Approx(1.0));

    HybridState state = HybridState::from_spec(spec, cfg.order_cap);
    const auto dm = moment_rhs(state, pot);
    for (std::size_t pos = 0; pos < dm.layout().size(); ++pos) {
        const int order = dm.layout().index(pos).order();
        if (order == 0) CHECK(dm.value(pos) == 0.0);
        if (order == 1) CHECK(dm.value(pos) == 0.0);
    }
}

TEST_CASE("integration guards") {
    auto pot = quadratic_potential(1.0, 1.0, 0.0);
    GaussianStateSpec sub{{}, CovarianceMatrix::diagonal(0.1, 0.1, 0.5, 0.5)};
    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 10;
    cfg.order_cap = 2;
    CHECK_THROWS_AS(integrate(sub, pot, cfg), invalid_state_error);
    cfg.allow_invalid_initial = true;
    CHECK_NOTHROW(integrate(sub, pot, cfg));

    // runaway cubic potential aborts with the failing time
    PolynomialPotential runaway;
    runaway.add_term(3, 0, -5.0);
    GaussianStateSpec spec{{2.0, 2.0, 0, 0}, CovarianceMatrix::vacuum()};
    IntegratorConfig rcfg;
    rcfg.dt = 1e-2;
    rcfg.steps = 100000;
    rcfg.order_cap = 4;
    try {
        integrate(spec, runaway, rcfg);
        FAIL("expected numerical_error");
    } catch (const numerical_error& e) {
        CHECK(e.time() > 0.0);
        CHECK(e.time() < 1000.0);
    }
}

TEST_CASE("zero crossing detection") {
    // saturated f = 0 never triggers
    Trajectory flat;
    for (int i = 0; i <= 10; ++i) flat.samples.push_back({0.1 * i, {}, {}, 0.0, true});
    CHECK_FALSE(detect_zero_crossing(flat).has_value());

    // linear signal f = 0.2 - 0.1 t sampled at dt = 0.5: crossing at 2.0
    Trajectory lin;
    for (int i = 0; i <= 10; ++i) {
        const double t = 0.5 * i;
        lin.samples.push_back({t, {}, {}, 0.2 - 0.1 * t, true});
    }
    auto t0 = detect_zero_crossing(lin);
    REQUIRE(t0.has_value());
    CHECK(*t0 == doctest::Approx(2.0).epsilon(1e-9));

    // refined in-flight detection: squeezed bilinear scenario (exact dynamics)
    CorrelatedInitialData d;
    d.z1 = d.z2 = 0.05;
    d.y2 = -0.4;
    d.qp0 = 0.1;
    d.qx0 = 0.2;
    auto pot2 = quadratic_potential(1.0, 1.0, -5.0);
    IntegratorConfig vcfg;
    vcfg.dt = 1e-4;
    vcfg.steps = 4000;
    vcfg.order_cap = 4;
    vcfg.allow_invalid_initial = true;
    vcfg.sample_stride = 100;
    const auto outcome = integrate_with_violation_search(d.state(), pot2, vcfg);
    REQUIRE(outcome.violation_time.has_value());
    const double tstar = *outcome.violation_time;
    CHECK(tstar > 0.0);

    // the coarse sample-based detector brackets the same crossing
    const auto coarse = detect_zero_crossing(outcome.trajectory);
    REQUIRE(coarse.has_value());
    CHECK(*coarse == doctest::Approx(tstar).epsilon(1e-2));

    // re-integration to the refined time lands on |f| ~ 0
    IntegratorConfig probe = vcfg;
    probe.steps = 1000;
    probe.dt = tstar / 1000.0;
    probe.sample_stride = probe.steps;
    const Trajectory at = integrate(d.state(), pot2, probe);
    CHECK(std::abs(at.back().f) < 1e-8);
}

TEST_CASE("wick and zero closures differ only above the cap") {
    // quadratic potential: closure never consulted, identical results
    auto pot = quadratic_potential(1.0, 1.0, 0.1);
    std::mt19937_64 rng(61);
    GaussianStateSpec spec{{0.1, 0.2, 0.3, 0.4}, random_valid_covariance(rng)};
    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 500;
    cfg.order_cap = 4;
    cfg.sample_stride = 500;
    IntegratorConfig zcfg = cfg;
    zcfg.closure = Closure::zero;
    CHECK(integrate(spec, pot, cfg).back().f ==
          doctest::Approx(integrate(spec, pot, zcfg).back().f).epsilon(1e-15));

    // cubic potential at low cap: closures disagree (truncation sensitivity)
    ScenarioParams p;
    p.beta1 = 1.0;
    p.beta2 = 1.0;
    auto pot2 = example2_potential(p);
    GaussianStateSpec s2{{0.5, 0, -0.5, 0}, CovarianceMatrix::vacuum()};
    IntegratorConfig w2;
    w2.dt = 1e-3;
    w2.steps = 800;
    w2.order_cap = 3;
    w2.sample_stride = 800;
    IntegratorConfig z2 = w2;
    z2.closure = Closure::zero;
    const double fw = integrate(s2, pot2, w2).back().f;
    const double fz = integrate(s2, pot2, z2).back().f;
    CHECK(std::abs(fw - fz) > 1e-8);
}
