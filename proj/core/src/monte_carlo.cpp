#include "hybridsim/monte_carlo.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "hybridsim/dynamics.hpp"
#include "hybridsim/io.hpp"

namespace hybridsim::mc {

namespace {

constexpr std::size_t kBlock = 4096; // fixed work/reduction granularity
constexpr int kJackknifeGroups = 100;

// Fixed normal generator: mt19937_64 + Box-Muller. Unlike
// std::normal_distribution the output is pinned across implementations.
class NormalSource {
  public:
    explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

    double next() {
        if (have_) {
            have_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_ = true;
        return r * std::cos(a);
    }

  private:
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; } // [0, 1)
    double uniform_open() { return 1.0 - uniform(); }                          // (0, 1]

    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool have_ = false;
};

void run_blocks(std::size_t count, int threads, const std::function<void(std::size_t, std::size_t)>& fn) {
    const std::size_t blocks = (count + kBlock - 1) / kBlock;
    if (threads <= 1 || blocks <= 1) {
        for (std::size_t b = 0; b < blocks; ++b)
            fn(b * kBlock, std::min(count, (b + 1) * kBlock));
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= blocks) return;
            fn(b * kBlock, std::min(count, (b + 1) * kBlock));
        }
    };
    std::vector<std::thread> pool;
    const int n = std::min<int>(threads, static_cast<int>(blocks));
    pool.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

// delete-one-group jackknife over per-group sums of a mean statistic
double jackknife_error(const std::array<double, kJackknifeGroups>& group_sums,
                       const std::array<std::size_t, kJackknifeGroups>& group_counts,
                       std::size_t total_count, double total_sum) {
    std::array<double, kJackknifeGroups> theta{};
    int groups = 0;
    for (int g = 0; g < kJackknifeGroups; ++g) {
        if (group_counts[static_cast<std::size_t>(g)] == 0) continue;
        theta[static_cast<std::size_t>(groups++)] =
            (total_sum - group_sums[static_cast<std::size_t>(g)]) /
            static_cast<double>(total_count - group_counts[static_cast<std::size_t>(g)]);
    }
    if (groups < 2) return 0.0;
    double mean = 0.0;
    for (int g = 0; g < groups; ++g) mean += theta[static_cast<std::size_t>(g)];
    mean /= groups;
    double ss = 0.0;
    for (int g = 0; g < groups; ++g) {
        const double d = theta[static_cast<std::size_t>(g)] - mean;
        ss += d * d;
    }
    const double dg = static_cast<double>(groups);
    return std::sqrt((dg - 1.0) / dg * ss);
}

std::size_t group_of(std::size_t i, std::size_t n) {
    return i * static_cast<std::size_t>(kJackknifeGroups) / n;
}

} // namespace

Ensemble sample_gaussian(const GaussianStateSpec& spec, std::size_t count, std::uint64_t seed) {
    if (count == 0) throw std::invalid_argument("sample_gaussian: count must be > 0");

    Eigen::Matrix4d sigma;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) sigma(i, j) = spec.cov(i, j);
    Eigen::LLT<Eigen::Matrix4d> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("sample_gaussian: covariance is not positive definite");
    const Eigen::Matrix4d l = llt.matrixL();

    Ensemble e;
    e.seed = seed;
    e.particles.resize(count);
    NormalSource normals(seed);
    const auto mu = spec.means.to_array();
    for (auto& part : e.particles) {
        double z[4];
        for (double& v : z) v = normals.next();
        for (int i = 0; i < 4; ++i) {
            double acc = mu[static_cast<std::size_t>(i)];
            for (int j = 0; j <= i; ++j) acc += l(i, j) * z[j];
            part[static_cast<std::size_t>(i)] = acc;
        }
    }
    return e;
}

void evolve_ensemble(Ensemble& e, const PolynomialPotential& pot, double dt, std::int64_t steps,
                     int threads) {
    if (!(dt > 0.0)) throw std::invalid_argument("evolve_ensemble: dt must be > 0");
    const int budget = thread_budget(threads);

    std::atomic<bool> failed{false};
    std::atomic<std::size_t> failed_index{0};
    std::atomic<std::int64_t> failed_step{0};

    // differentiate once; the force loop evaluates plain term lists
    struct DTerm {
        int m, n;
        double c;
    };
    std::vector<DTerm> dq_terms, dx_terms;
    for (const auto& t : pot.terms()) {
        if (t.m >= 1) dq_terms.push_back({t.m - 1, t.n, t.c * static_cast<double>(t.m)});
        if (t.n >= 1) dx_terms.push_back({t.m, t.n - 1, t.c * static_cast<double>(t.n)});
    }
    auto eval_terms = [](const std::vector<DTerm>& terms, double q, double x) {
        double acc = 0.0;
        for (const auto& t : terms) {
            double v = t.c;
            for (int r = 0; r < t.m; ++r) v *= q;
            for (int r = 0; r < t.n; ++r) v *= x;
            acc += v;
        }
        return acc;
    };

    run_blocks(e.count(), budget, [&](std::size_t lo, std::size_t hi) {
        auto force = [&](const std::array<double, 4>& s, std::array<double, 4>& d) {
            d[0] = s[1];
            d[1] = -eval_terms(dq_terms, s[0], s[2]);
            d[2] = s[3];
            d[3] = -eval_terms(dx_terms, s[0], s[2]);
        };
        std::array<double, 4> k1, k2, k3, k4, tmp;
        for (std::size_t i = lo; i < hi && !failed.load(std::memory_order_relaxed); ++i) {
            auto& s = e.particles[i];
            for (std::int64_t n = 0; n < steps; ++n) {
                force(s, k1);
                for (int j = 0; j < 4; ++j) tmp[static_cast<std::size_t>(j)] = s[static_cast<std::size_t>(j)] + 0.5 * dt * k1[static_cast<std::size_t>(j)];
                force(tmp, k2);
                for (int j = 0; j < 4; ++j) tmp[static_cast<std::size_t>(j)] = s[static_cast<std::size_t>(j)] + 0.5 * dt * k2[static_cast<std::size_t>(j)];
                force(tmp, k3);
                for (int j = 0; j < 4; ++j) tmp[static_cast<std::size_t>(j)] = s[static_cast<std::size_t>(j)] + dt * k3[static_cast<std::size_t>(j)];
                force(tmp, k4);
                bool finite = true;
                for (int j = 0; j < 4; ++j) {
                    s[static_cast<std::size_t>(j)] +=
                        dt / 6.0 * (k1[static_cast<std::size_t>(j)] + 2.0 * k2[static_cast<std::size_t>(j)] +
                                    2.0 * k3[static_cast<std::size_t>(j)] + k4[static_cast<std::size_t>(j)]);
                    finite = finite && std::isfinite(s[static_cast<std::size_t>(j)]);
                }
                if (!finite) {
                    bool expected = false;
                    if (failed.compare_exchange_strong(expected, true)) {
                        failed_index = i;
                        failed_step = n + 1;
                    }
                    return;
                }
            }
        }
    });

    if (failed) {
        const double t = dt * static_cast<double>(failed_step.load());
        throw numerical_error("ensemble particle " + std::to_string(failed_index.load()) +
                                  " became non-finite at t = " + std::to_string(t),
                              t);
    }
}

std::array<double, 4> ensemble_means(const Ensemble& e) {
    // block-wise accumulation in index order: deterministic
    std::array<double, 4> total{};
    const std::size_t n = e.count();
    for (std::size_t lo = 0; lo < n; lo += kBlock) {
        const std::size_t hi = std::min(n, lo + kBlock);
        std::array<double, 4> part{};
        for (std::size_t i = lo; i < hi; ++i)
            for (int j = 0; j < 4; ++j) part[static_cast<std::size_t>(j)] += e.particles[i][static_cast<std::size_t>(j)];
        for (int j = 0; j < 4; ++j) total[static_cast<std::size_t>(j)] += part[static_cast<std::size_t>(j)];
    }
    for (double& v : total) v /= static_cast<double>(n);
    return total;
}

MomentEstimate estimate_moment(const Ensemble& e, const MultiIndex& idx) {
    if (idx.order() == 0) return {1.0, 0.0};
    const std::size_t n = e.count();
    const auto mu = ensemble_means(e);

    std::array<double, kJackknifeGroups> gsum{};
    std::array<std::size_t, kJackknifeGroups> gcount{};
    double total = 0.0;
    for (std::size_t lo = 0; lo < n; lo += kBlock) {
        const std::size_t hi = std::min(n, lo + kBlock);
        double part = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& s = e.particles[i];
            const double dq = s[0] - mu[0], dp = s[1] - mu[1], dx = s[2] - mu[2], dk = s[3] - mu[3];
            double w = 1.0;
            for (int r = 0; r < idx.k1(); ++r) w *= dp;
            for (int r = 0; r < idx.k2(); ++r) w *= dk;
            for (int r = 0; r < idx.n1(); ++r) w *= dq;
            for (int r = 0; r < idx.n2(); ++r) w *= dx;
            part += w;
            const std::size_t g = group_of(i, n);
            gsum[g] += w;
            ++gcount[g];
        }
        total += part;
    }
    MomentEstimate est;
    est.value = total / static_cast<double>(n);
    est.std_error = jackknife_error(gsum, gcount, n, total);
    return est;
}

std::vector<MomentEstimate> estimate_moments_up_to(const Ensemble& e, int max_order) {
    const MomentLayout& layout = shared_layout(max_order);
    const std::size_t m = layout.size();
    const std::size_t n = e.count();
    const auto mu = ensemble_means(e);

    std::vector<std::array<double, kJackknifeGroups>> gsum(m);
    std::array<std::size_t, kJackknifeGroups> gcount{};
    std::vector<double> total(m, 0.0);

    const int cap = max_order;
    std::vector<double> pw(4 * static_cast<std::size_t>(cap + 1));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = e.particles[i];
        const double dev[4] = {s[1] - mu[1], s[3] - mu[3], s[0] - mu[0], s[2] - mu[2]};
        for (int v = 0; v < 4; ++v) {
            pw[static_cast<std::size_t>(v * (cap + 1))] = 1.0;
            for (int r = 1; r <= cap; ++r)
                pw[static_cast<std::size_t>(v * (cap + 1) + r)] =
                    pw[static_cast<std::size_t>(v * (cap + 1) + r - 1)] * dev[v];
        }
        const std::size_t g = group_of(i, n);
        ++gcount[g];
        for (std::size_t j = 0; j < m; ++j) {
            const MultiIndex& idx = layout.index(j);
            const double w = pw[static_cast<std::size_t>(idx.k1())] *
                             pw[static_cast<std::size_t>((cap + 1) + idx.k2())] *
                             pw[static_cast<std::size_t>(2 * (cap + 1) + idx.n1())] *
                             pw[static_cast<std::size_t>(3 * (cap + 1) + idx.n2())];
            gsum[j][g] += w;
            total[j] += w;
        }
    }

    std::vector<MomentEstimate> out(m);
    for (std::size_t j = 0; j < m; ++j) {
        if (layout.index(j).order() == 0) {
            out[j] = {1.0, 0.0};
            continue;
        }
        out[j].value = total[j] / static_cast<double>(n);
        out[j].std_error = jackknife_error(gsum[j], gcount, n, total[j]);
    }
    return out;
}

namespace {

template <typename PerParticle, typename Statistic>
MomentEstimate jackknife_statistic(const Ensemble& e, int dims, PerParticle&& per_particle,
                                   Statistic&& statistic) {
    const std::size_t n = e.count();
    std::vector<std::array<double, kJackknifeGroups>> gsum(static_cast<std::size_t>(dims));
    std::array<std::size_t, kJackknifeGroups> gcount{};
    std::vector<double> total(static_cast<std::size_t>(dims), 0.0);
    std::vector<double> w(static_cast<std::size_t>(dims));

    for (std::size_t i = 0; i < n; ++i) {
        per_particle(e.particles[i], w.data());
        const std::size_t g = group_of(i, n);
        ++gcount[g];
        for (int d = 0; d < dims; ++d) {
            gsum[static_cast<std::size_t>(d)][g] += w[static_cast<std::size_t>(d)];
            total[static_cast<std::size_t>(d)] += w[static_cast<std::size_t>(d)];
        }
    }

    std::vector<double> means(static_cast<std::size_t>(dims));
    for (int d = 0; d < dims; ++d)
        means[static_cast<std::size_t>(d)] = total[static_cast<std::size_t>(d)] / static_cast<double>(n);
    MomentEstimate est;
    est.value = statistic(means.data());

    std::vector<double> theta;
    theta.reserve(kJackknifeGroups);
    std::vector<double> del(static_cast<std::size_t>(dims));
    for (int g = 0; g < kJackknifeGroups; ++g) {
        if (gcount[static_cast<std::size_t>(g)] == 0) continue;
        const double rest = static_cast<double>(n - gcount[static_cast<std::size_t>(g)]);
        for (int d = 0; d < dims; ++d)
            del[static_cast<std::size_t>(d)] =
                (total[static_cast<std::size_t>(d)] - gsum[static_cast<std::size_t>(d)][static_cast<std::size_t>(g)]) / rest;
        theta.push_back(statistic(del.data()));
    }
    if (theta.size() < 2) return est;
    double mean = 0.0;
    for (double v : theta) mean += v;
    mean /= static_cast<double>(theta.size());
    double ss = 0.0;
    for (double v : theta) ss += (v - mean) * (v - mean);
    const double dg = static_cast<double>(theta.size());
    est.std_error = std::sqrt((dg - 1.0) / dg * ss);
    return est;
}

} // namespace

MomentEstimate estimate_hur(const Ensemble& e) {
    const auto mu = ensemble_means(e);
    return jackknife_statistic(
        e, 3,
        [&](const std::array<double, 4>& s, double* w) {
            const double dq = s[0] - mu[0];
            const double dp = s[1] - mu[1];
            w[0] = dq * dq;
            w[1] = dp * dp;
            w[2] = dq * dp;
        },
        [](const double* m) { return m[1] * m[0] - m[2] * m[2] - 0.25; });
}

MomentEstimate estimate_energy(const Ensemble& e, const PolynomialPotential& pot) {
    return jackknife_statistic(
        e, 1,
        [&](const std::array<double, 4>& s, double* w) {
            w[0] = 0.5 * (s[1] * s[1] + s[3] * s[3]) + pot.value(s[0], s[2]);
        },
        [](const double* m) { return m[0]; });
}

} // namespace hybridsim::mc
