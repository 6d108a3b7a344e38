#include "hybridsim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace hybridsim {

namespace {

constexpr double kViolationThreshold = -1e-12; // f = 0 exactly is saturation, not violation
constexpr double kRefineTarget = 1e-10;

double factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= static_cast<double>(i);
    return r;
}

// Right-hand side of the truncated hierarchy. The moment state is packed as
// y = [Q, P, X, K, S...] with S in the graded layout order.
class Engine {
  public:
    Engine(const PolynomialPotential& pot, Closure closure, int order_cap)
        : pot_(&pot), closure_(closure), lay_(&shared_layout(order_cap)), cap_(order_cap) {
        lmax_ = std::min(6, std::max(0, pot.max_degree() - 1));
        ext_cap_ = std::max(cap_, cap_ - 1 + lmax_);
        ext_ = &shared_layout(ext_cap_);
        gauss_.resize(ext_->size());

        bool mask[8][8] = {};
        for (const auto& t : pot.terms())
            for (int a = 0; a <= t.m; ++a)
                for (int b = 0; b <= t.n; ++b) mask[a][b] = true;

        auto push_entries = [&](MultiIndex base, int dq_extra, int dx_extra, std::uint32_t& beg,
                                std::uint32_t& end) {
            beg = static_cast<std::uint32_t>(entries_.size());
            for (int l = 0; l <= lmax_; ++l)
                for (int j = 0; j <= l; ++j) {
                    const int a = l - j + dq_extra;
                    const int b = j + dx_extra;
                    if (a > PolynomialPotential::kMaxDegree || b > PolynomialPotential::kMaxDegree ||
                        a + b > PolynomialPotential::kMaxDegree || !mask[a][b])
                        continue;
                    MultiIndex target = base;
                    target.e[2] += l - j;
                    target.e[3] += j;
                    Entry e;
                    e.vslot = 8 * a + b;
                    e.w = 1.0 / (factorial(l - j) * factorial(j));
                    const auto pos = lay_->position(target);
                    if (pos >= 0) {
                        e.code = pos;
                    } else {
                        e.code = -ext_->position(target) - 1;
                        needs_closure_ = true;
                    }
                    entries_.push_back(e);
                }
            end = static_cast<std::uint32_t>(entries_.size());
        };

        push_entries({0, 0, 0, 0}, 1, 0, mean_p_beg_, mean_p_end_);
        push_entries({0, 0, 0, 0}, 0, 1, mean_k_beg_, mean_k_end_);

        plans_.resize(lay_->size());
        for (std::size_t i = 0; i < lay_->size(); ++i) {
            const MultiIndex idx = lay_->index(i);
            IndexPlan& pl = plans_[i];
            pl.k1 = idx.k1();
            pl.k2 = idx.k2();
            pl.n1 = idx.n1();
            pl.n2 = idx.n2();
            if (pl.n1 > 0) pl.kin1 = lay_->position({idx.k1() + 1, idx.k2(), idx.n1() - 1, idx.n2()});
            if (pl.n2 > 0) pl.kin2 = lay_->position({idx.k1(), idx.k2() + 1, idx.n1(), idx.n2() - 1});
            if (pl.k1 > 0) {
                pl.low1 = lay_->position(idx.lowered(0));
                push_entries(idx.lowered(0), 1, 0, pl.beg1, pl.end1);
            }
            if (pl.k2 > 0) {
                pl.low2 = lay_->position(idx.lowered(1));
                push_entries(idx.lowered(1), 0, 1, pl.beg2, pl.end2);
            }
        }

        cov_slots_ = {lay_->position({0, 0, 2, 0}), lay_->position({2, 0, 0, 0}),
                      lay_->position({0, 0, 0, 2}), lay_->position({0, 2, 0, 0}),
                      lay_->position({1, 0, 1, 0}), lay_->position({0, 0, 1, 1}),
                      lay_->position({0, 1, 1, 0}), lay_->position({1, 0, 0, 1}),
                      lay_->position({1, 1, 0, 0}), lay_->position({0, 1, 0, 1})};

        state_size_ = 4 + lay_->size();
        k1_.resize(state_size_);
        k2_.resize(state_size_);
        k3_.resize(state_size_);
        k4_.resize(state_size_);
        tmp_.resize(state_size_);
    }

    std::size_t state_size() const { return state_size_; }
    const MomentLayout& layout() const { return *lay_; }

    CovarianceMatrix covariance_of(const double* y) const {
        const double* s = y + 4;
        CovarianceMatrix cov;
        cov.set(kQ, kQ, s[cov_slots_[0]]);
        cov.set(kP, kP, s[cov_slots_[1]]);
        cov.set(kX, kX, s[cov_slots_[2]]);
        cov.set(kK, kK, s[cov_slots_[3]]);
        cov.set(kQ, kP, s[cov_slots_[4]]);
        cov.set(kQ, kX, s[cov_slots_[5]]);
        cov.set(kQ, kK, s[cov_slots_[6]]);
        cov.set(kP, kX, s[cov_slots_[7]]);
        cov.set(kP, kK, s[cov_slots_[8]]);
        cov.set(kX, kK, s[cov_slots_[9]]);
        return cov;
    }

    double f_of(const double* y) const {
        const double* s = y + 4;
        const double vq = s[cov_slots_[0]];
        const double vp = s[cov_slots_[1]];
        const double cqp = s[cov_slots_[4]];
        return vp * vq - cqp * cqp - 0.25;
    }

    void rhs(const double* y, double* dy) {
        const auto table = pot_->derivative_table(y[0], y[2]);
        double vd[64];
        for (int a = 0; a < 8; ++a)
            for (int b = 0; b < 8; ++b)
                vd[8 * a + b] = table[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];

        if (needs_closure_ && closure_ == Closure::wick)
            fill_gaussian_moments(covariance_of(y), *ext_, gauss_);

        const double* s = y + 4;
        auto fetch = [&](std::int32_t code) {
            if (code >= 0) return s[code];
            return closure_ == Closure::wick ? gauss_[static_cast<std::size_t>(-code - 1)] : 0.0;
        };
        auto sum_range = [&](std::uint32_t beg, std::uint32_t end) {
            double acc = 0.0;
            for (std::uint32_t i = beg; i < end; ++i) {
                const Entry& e = entries_[i];
                acc += e.w * vd[e.vslot] * fetch(e.code);
            }
            return acc;
        };

        const double dPdt = -sum_range(mean_p_beg_, mean_p_end_);
        const double dKdt = -sum_range(mean_k_beg_, mean_k_end_);
        dy[0] = y[1];
        dy[1] = dPdt;
        dy[2] = y[3];
        dy[3] = dKdt;

        double* ds = dy + 4;
        for (std::size_t i = 0; i < plans_.size(); ++i) {
            const IndexPlan& pl = plans_[i];
            double acc = 0.0;
            if (pl.n1 > 0) acc += pl.n1 * s[pl.kin1];
            if (pl.n2 > 0) acc += pl.n2 * s[pl.kin2];
            if (pl.k1 > 0) acc -= pl.k1 * (dPdt * s[pl.low1] + sum_range(pl.beg1, pl.end1));
            if (pl.k2 > 0) acc -= pl.k2 * (dKdt * s[pl.low2] + sum_range(pl.beg2, pl.end2));
            ds[i] = acc;
        }
    }

    void step(std::vector<double>& y, double dt) {
        const std::size_t n = state_size_;
        rhs(y.data(), k1_.data());
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + 0.5 * dt * k1_[i];
        rhs(tmp_.data(), k2_.data());
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + 0.5 * dt * k2_[i];
        rhs(tmp_.data(), k3_.data());
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + dt * k3_[i];
        rhs(tmp_.data(), k4_.data());
        for (std::size_t i = 0; i < n; ++i)
            y[i] += dt / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }

  private:
    struct Entry {
        std::int32_t code; // >= 0: moment position; < 0: ~code into the closure table
        std::int32_t vslot;
        double w;
    };
    struct IndexPlan {
        std::int32_t kin1 = -1, kin2 = -1, low1 = -1, low2 = -1;
        int k1 = 0, k2 = 0, n1 = 0, n2 = 0;
        std::uint32_t beg1 = 0, end1 = 0, beg2 = 0, end2 = 0;
    };

    const PolynomialPotential* pot_;
    Closure closure_;
    const MomentLayout* lay_;
    const MomentLayout* ext_ = nullptr;
    int cap_;
    int ext_cap_ = 0;
    int lmax_ = 0;
    bool needs_closure_ = false;
    std::vector<Entry> entries_;
    std::vector<IndexPlan> plans_;
    std::uint32_t mean_p_beg_ = 0, mean_p_end_ = 0, mean_k_beg_ = 0, mean_k_end_ = 0;
    std::array<std::int32_t, 10> cov_slots_{};
    std::vector<double> gauss_;
    std::size_t state_size_ = 0;
    std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

std::vector<double> pack_state(const HybridState& state) {
    std::vector<double> y(4 + state.moments.size());
    y[0] = state.means.q;
    y[1] = state.means.p;
    y[2] = state.means.x;
    y[3] = state.means.k;
    std::copy(state.moments.values().begin(), state.moments.values().end(), y.begin() + 4);
    return y;
}

bool all_finite(const std::vector<double>& y) {
    for (double v : y)
        if (!std::isfinite(v)) return false;
    return true;
}

TrajectorySample make_sample(const Engine& engine, const std::vector<double>& y, double t) {
    TrajectorySample sample;
    sample.t = t;
    sample.means = {y[0], y[1], y[2], y[3]};
    const CovarianceMatrix cov = engine.covariance_of(y.data());
    sample.second.var_q = cov(kQ, kQ);
    sample.second.var_p = cov(kP, kP);
    sample.second.cov_qp = cov(kQ, kP);
    sample.second.var_x = cov(kX, kX);
    sample.second.var_k = cov(kK, kK);
    sample.second.cov_xk = cov(kX, kK);
    sample.second.cov_qx = cov(kQ, kX);
    sample.second.cov_qk = cov(kQ, kK);
    sample.second.cov_px = cov(kP, kX);
    sample.second.cov_pk = cov(kP, kK);
    sample.f = hur_value(cov);
    sample.valid = symplectic_check(cov).valid;
    return sample;
}

IntegrationOutcome run_integration(const GaussianStateSpec& initial, const PolynomialPotential& pot,
                                   const IntegratorConfig& cfg, bool search_violation) {
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("integrate: dt must be > 0");
    if (cfg.steps < 0) throw std::invalid_argument("integrate: steps must be >= 0");
    if (cfg.order_cap < 2) throw std::invalid_argument("integrate: order cap must be >= 2");
    if (!cfg.allow_invalid_initial && !symplectic_check(initial.cov).valid)
        throw invalid_state_error(
            "initial covariance fails the positivity check (pass the override to integrate anyway)");

    Engine engine(pot, cfg.closure, cfg.order_cap);
    std::vector<double> y = pack_state(HybridState::from_spec(initial, cfg.order_cap));
    std::vector<double> y_prev(y.size());

    IntegrationOutcome outcome;
    outcome.trajectory.samples.reserve(
        static_cast<std::size_t>(cfg.steps / std::max<std::int64_t>(cfg.sample_stride, 1)) + 2);
    outcome.trajectory.samples.push_back(make_sample(engine, y, 0.0));

    double f_prev = engine.f_of(y.data());
    const std::int64_t stride = std::max<std::int64_t>(cfg.sample_stride, 1);

    for (std::int64_t i = 0; i < cfg.steps; ++i) {
        y_prev = y;
        engine.step(y, cfg.dt);
        const double t = cfg.dt * static_cast<double>(i + 1);
        if (!all_finite(y))
            throw numerical_error("non-finite value at t = " + std::to_string(t), t);

        const double f = engine.f_of(y.data());
        if (search_violation && !outcome.violation_time && f < kViolationThreshold &&
            f_prev >= kViolationThreshold) {
            // bracket the crossing inside this step and bisect on sub-steps
            const double t_prev = cfg.dt * static_cast<double>(i);
            if (std::abs(f_prev) < kRefineTarget) {
                outcome.violation_time = t_prev;
            } else {
                double lo = 0.0, hi = cfg.dt;
                double best = hi;
                std::vector<double> probe(y.size());
                for (int iter = 0; iter < 200; ++iter) {
                    const double mid = 0.5 * (lo + hi);
                    probe = y_prev;
                    engine.step(probe, mid);
                    const double fm = engine.f_of(probe.data());
                    best = mid;
                    if (std::abs(fm) < kRefineTarget) break;
                    (fm < 0.0 ? hi : lo) = mid;
                }
                outcome.violation_time = t_prev + best;
            }
        }
        f_prev = f;

        if ((i + 1) % stride == 0 || i + 1 == cfg.steps)
            outcome.trajectory.samples.push_back(make_sample(engine, y, t));
    }
    return outcome;
}

} // namespace

HybridState HybridState::from_spec(const GaussianStateSpec& spec, int order_cap) {
    return {0.0, spec.means, build_moment_table(spec, order_cap)};
}

CovarianceMatrix SecondMoments::covariance() const {
    CovarianceMatrix cov;
    cov.set(kQ, kQ, var_q);
    cov.set(kP, kP, var_p);
    cov.set(kX, kX, var_x);
    cov.set(kK, kK, var_k);
    cov.set(kQ, kP, cov_qp);
    cov.set(kQ, kX, cov_qx);
    cov.set(kQ, kK, cov_qk);
    cov.set(kP, kX, cov_px);
    cov.set(kP, kK, cov_pk);
    cov.set(kX, kK, cov_xk);
    return cov;
}

SecondMoments SecondMoments::from_table(const MomentTable& table) {
    SecondMoments s;
    s.var_q = table.at({0, 0, 2, 0});
    s.var_p = table.at({2, 0, 0, 0});
    s.cov_qp = table.at({1, 0, 1, 0});
    s.var_x = table.at({0, 0, 0, 2});
    s.var_k = table.at({0, 2, 0, 0});
    s.cov_xk = table.at({0, 1, 0, 1});
    s.cov_qx = table.at({0, 0, 1, 1});
    s.cov_qk = table.at({0, 1, 1, 0});
    s.cov_px = table.at({1, 0, 0, 1});
    s.cov_pk = table.at({1, 1, 0, 0});
    return s;
}

std::array<double, 4> mean_rhs(const HybridState& state, const PolynomialPotential& pot,
                               Closure closure) {
    Engine engine(pot, closure, state.moments.order_cap());
    std::vector<double> y = pack_state(state);
    std::vector<double> dy(y.size());
    engine.rhs(y.data(), dy.data());
    return {dy[0], dy[1], dy[2], dy[3]};
}

MomentTable moment_rhs(const HybridState& state, const PolynomialPotential& pot, Closure closure) {
    Engine engine(pot, closure, state.moments.order_cap());
    std::vector<double> y = pack_state(state);
    std::vector<double> dy(y.size());
    engine.rhs(y.data(), dy.data());
    MomentTable out(state.moments.order_cap());
    std::copy(dy.begin() + 4, dy.end(), out.values().begin());
    return out;
}

Trajectory integrate(const GaussianStateSpec& initial, const PolynomialPotential& pot,
                     const IntegratorConfig& cfg) {
    return run_integration(initial, pot, cfg, /*search_violation=*/false).trajectory;
}

IntegrationOutcome integrate_with_violation_search(const GaussianStateSpec& initial,
                                                   const PolynomialPotential& pot,
                                                   const IntegratorConfig& cfg) {
    return run_integration(initial, pot, cfg, /*search_violation=*/true);
}

std::optional<double> detect_zero_crossing(const Trajectory& traj) {
    for (std::size_t i = 0; i + 1 < traj.samples.size(); ++i) {
        const double f0 = traj.samples[i].f;
        const double f1 = traj.samples[i + 1].f;
        if (f0 >= kViolationThreshold && f1 < kViolationThreshold) {
            const double t0 = traj.samples[i].t;
            const double t1 = traj.samples[i + 1].t;
            if (f0 == f1) return t0;
            return t0 + (t1 - t0) * f0 / (f0 - f1);
        }
    }
    return std::nullopt;
}

double mean_energy(const HybridState& state, const PolynomialPotential& pot) {
    const MomentTable& table = state.moments;
    const MeanVector& mu = state.means;
    const double kinetic = 0.5 * (mu.p * mu.p + table.at({2, 0, 0, 0}) + mu.k * mu.k +
                                  table.at({0, 2, 0, 0}));

    const CovarianceMatrix cov = table.covariance();
    double binom[8][8];
    for (int n = 0; n < 8; ++n) {
        binom[n][0] = 1.0;
        for (int r = 1; r <= n; ++r)
            binom[n][r] = binom[n - 1][r - 1] + (r <= n - 1 ? binom[n - 1][r] : 0.0);
    }
    double qp[8], xp[8];
    qp[0] = xp[0] = 1.0;
    for (int i = 1; i < 8; ++i) {
        qp[i] = qp[i - 1] * mu.q;
        xp[i] = xp[i - 1] * mu.x;
    }

    double potential = 0.0;
    for (const auto& t : pot.terms()) {
        double acc = 0.0;
        for (int i = 0; i <= t.m; ++i)
            for (int j = 0; j <= t.n; ++j) {
                const MultiIndex idx{0, 0, i, j};
                const double central =
                    (i + j <= table.order_cap()) ? table.at(idx) : wick_moment(cov, idx);
                acc += binom[t.m][i] * binom[t.n][j] * qp[t.m - i] * xp[t.n - j] * central;
            }
        potential += t.c * acc;
    }
    return kinetic + potential;
}

} // namespace hybridsim
