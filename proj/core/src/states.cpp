#include "hybridsim/states.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <nlohmann/json.hpp>

namespace hybridsim {

namespace {

constexpr double kValidityTol = 1e-9; // saturated states sit exactly on the boundary

// Multi-index components are powers of (dp, dk, dq, dx); map each component
// to its row in the (q, p, x, k) covariance.
constexpr int kComponentBasis[4] = {kP, kK, kQ, kX};

Eigen::Matrix4d to_eigen(const CovarianceMatrix& cov) {
    Eigen::Matrix4d m;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m(i, j) = cov(i, j);
    return m;
}

Eigen::Matrix4d omega_matrix() {
    Eigen::Matrix4d o = Eigen::Matrix4d::Zero();
    o(kQ, kP) = 1.0;
    o(kP, kQ) = -1.0;
    o(kX, kK) = 1.0;
    o(kK, kX) = -1.0;
    return o;
}

std::array<double, 2> symplectic_spectrum(const CovarianceMatrix& cov) {
    const Eigen::Matrix4d m = omega_matrix() * to_eigen(cov);
    Eigen::EigenSolver<Eigen::Matrix4d> solver(m, /*computeEigenvectors=*/false);
    std::array<double, 4> mod{};
    for (int i = 0; i < 4; ++i) mod[static_cast<std::size_t>(i)] = std::abs(solver.eigenvalues()(i));
    std::sort(mod.begin(), mod.end());
    // eigenvalues come in +-i nu pairs; collapse them
    return {0.5 * (mod[0] + mod[1]), 0.5 * (mod[2] + mod[3])};
}

} // namespace

CovarianceMatrix::CovarianceMatrix() = default;

CovarianceMatrix CovarianceMatrix::vacuum() { return diagonal(0.5, 0.5, 0.5, 0.5); }

CovarianceMatrix CovarianceMatrix::diagonal(double vq, double vp, double vx, double vk) {
    CovarianceMatrix c;
    c.set(kQ, kQ, vq);
    c.set(kP, kP, vp);
    c.set(kX, kX, vx);
    c.set(kK, kK, vk);
    return c;
}

CovarianceMatrix CovarianceMatrix::from_row_major(const std::array<double, 16>& m) {
    CovarianceMatrix c;
    c.m_ = m;
    if (!c.is_symmetric()) throw std::invalid_argument("covariance matrix is not symmetric");
    return c;
}

void CovarianceMatrix::set(int i, int j, double value) {
    m_[static_cast<std::size_t>(4 * i + j)] = value;
    m_[static_cast<std::size_t>(4 * j + i)] = value;
}

std::array<double, 4> CovarianceMatrix::block_q() const {
    return {(*this)(kQ, kQ), (*this)(kQ, kP), (*this)(kP, kQ), (*this)(kP, kP)};
}

std::array<double, 4> CovarianceMatrix::block_c() const {
    return {(*this)(kX, kX), (*this)(kX, kK), (*this)(kK, kX), (*this)(kK, kK)};
}

std::array<double, 4> CovarianceMatrix::block_qc() const {
    return {(*this)(kQ, kX), (*this)(kQ, kK), (*this)(kP, kX), (*this)(kP, kK)};
}

bool CovarianceMatrix::is_symmetric(double tol) const {
    double scale = 0.0;
    for (double v : m_) scale = std::max(scale, std::abs(v));
    const double bound = tol * std::max(scale, 1.0);
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            if (std::abs((*this)(i, j) - (*this)(j, i)) > bound) return false;
    return true;
}

bool CovarianceMatrix::has_positive_diagonal() const {
    for (int i = 0; i < 4; ++i)
        if ((*this)(i, i) <= 0.0) return false;
    return true;
}

const std::array<double, 16>& SymplecticForm::row_major() {
    static const std::array<double, 16> omega = [] {
        std::array<double, 16> o{};
        const Eigen::Matrix4d m = omega_matrix();
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) o[static_cast<std::size_t>(4 * i + j)] = m(i, j);
        return o;
    }();
    return omega;
}

std::string GaussianStateSpec::to_json() const {
    nlohmann::json j;
    j["means"] = {{"q", means.q}, {"p", means.p}, {"x", means.x}, {"k", means.k}};
    auto rows = nlohmann::json::array();
    for (int i = 0; i < 4; ++i) {
        auto row = nlohmann::json::array();
        for (int jj = 0; jj < 4; ++jj) row.push_back(cov(i, jj));
        rows.push_back(row);
    }
    j["cov"] = rows;
    return j.dump();
}

GaussianStateSpec GaussianStateSpec::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    GaussianStateSpec spec;
    spec.means.q = j.at("means").at("q").get<double>();
    spec.means.p = j.at("means").at("p").get<double>();
    spec.means.x = j.at("means").at("x").get<double>();
    spec.means.k = j.at("means").at("k").get<double>();
    std::array<double, 16> m{};
    const auto& rows = j.at("cov");
    if (!rows.is_array() || rows.size() != 4) throw std::invalid_argument("cov must be 4x4");
    for (int i = 0; i < 4; ++i) {
        if (rows[static_cast<std::size_t>(i)].size() != 4)
            throw std::invalid_argument("cov must be 4x4");
        for (int jj = 0; jj < 4; ++jj)
            m[static_cast<std::size_t>(4 * i + jj)] =
                rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(jj)].get<double>();
    }
    spec.cov = CovarianceMatrix::from_row_major(m);
    return spec;
}

MomentTable::MomentTable(int order_cap)
    : layout_(&shared_layout(order_cap), [](const MomentLayout*) {}),
      values_(shared_layout(order_cap).size(), 0.0) {
    values_[0] = 1.0; // normalization entry
}

CovarianceMatrix MomentTable::covariance() const {
    CovarianceMatrix c;
    c.set(kQ, kQ, at({0, 0, 2, 0}));
    c.set(kP, kP, at({2, 0, 0, 0}));
    c.set(kX, kX, at({0, 0, 0, 2}));
    c.set(kK, kK, at({0, 2, 0, 0}));
    c.set(kQ, kP, at({1, 0, 1, 0}));
    c.set(kQ, kX, at({0, 0, 1, 1}));
    c.set(kQ, kK, at({0, 1, 1, 0}));
    c.set(kP, kX, at({1, 0, 0, 1}));
    c.set(kP, kK, at({1, 1, 0, 0}));
    c.set(kX, kK, at({0, 1, 0, 1}));
    return c;
}

void fill_gaussian_moments(const CovarianceMatrix& cov, const MomentLayout& layout,
                           std::vector<double>& out) {
    out.assign(layout.size(), 0.0);
    double sig[4][4];
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) sig[a][b] = cov(kComponentBasis[a], kComponentBasis[b]);

    for (std::size_t pos = 0; pos < layout.size(); ++pos) {
        const MultiIndex& idx = layout.index(pos);
        const int order = idx.order();
        if (order == 0) {
            out[pos] = 1.0;
            continue;
        }
        if (order == 1 || (order & 1)) {
            out[pos] = 0.0;
            continue;
        }
        int a = 0;
        while (idx[a] == 0) ++a;
        const MultiIndex rest = idx.lowered(a);
        // <d_a prod> = sum_b sigma(a,b) * rest_b * <prod without d_a d_b>
        double acc = 0.0;
        for (int b = 0; b < 4; ++b) {
            if (rest[b] == 0) continue;
            const auto sub = layout.position(rest.lowered(b));
            acc += sig[a][b] * rest[b] * out[static_cast<std::size_t>(sub)];
        }
        out[pos] = acc;
    }
}

double wick_moment(const CovarianceMatrix& cov, const MultiIndex& idx) {
    for (int i = 0; i < 4; ++i)
        if (idx[i] < 0) throw std::invalid_argument("wick_moment: negative exponent");
    if (idx.order() % 2 == 1) return 0.0;
    if (idx.order() == 0) return 1.0;

    double sig[4][4];
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) sig[a][b] = cov(kComponentBasis[a], kComponentBasis[b]);

    std::map<std::array<int, 4>, double> memo;
    auto eval = [&](auto&& self, const MultiIndex& m) -> double {
        const int order = m.order();
        if (order == 0) return 1.0;
        if (order & 1) return 0.0;
        auto it = memo.find(m.e);
        if (it != memo.end()) return it->second;
        int a = 0;
        while (m[a] == 0) ++a;
        const MultiIndex rest = m.lowered(a);
        double acc = 0.0;
        for (int b = 0; b < 4; ++b) {
            if (rest[b] == 0) continue;
            acc += sig[a][b] * rest[b] * self(self, rest.lowered(b));
        }
        memo.emplace(m.e, acc);
        return acc;
    };
    return eval(eval, idx);
}

MomentTable build_moment_table(const GaussianStateSpec& spec, int order_cap) {
    if (order_cap < 2) throw std::invalid_argument("build_moment_table: order cap must be >= 2");
    MomentTable table(order_cap);
    fill_gaussian_moments(spec.cov, table.layout(), table.values());
    return table;
}

SymplecticCheck symplectic_check(const CovarianceMatrix& cov) {
    if (!cov.is_symmetric()) throw std::invalid_argument("symplectic_check: matrix not symmetric");

    SymplecticCheck result;
    result.eigenvalues = symplectic_spectrum(cov);
    result.valid =
        result.eigenvalues[0] >= 0.5 - kValidityTol && result.eigenvalues[1] >= 0.5 - kValidityTol;

    // redundant diagnostic: leading principal minors of sigma + i Omega / 2
    Eigen::Matrix4cd h = to_eigen(cov).cast<std::complex<double>>();
    const Eigen::Matrix4d omega = omega_matrix();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) h(i, j) += std::complex<double>(0.0, 0.5 * omega(i, j));
    double min_minor = h(0, 0).real();
    for (int k = 2; k <= 4; ++k)
        min_minor = std::min(min_minor, h.topLeftCorner(k, k).determinant().real());
    result.min_principal_minor = min_minor;
    return result;
}

bool cup_check(const CovarianceMatrix& cov, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("cup_check: epsilon must be > 0");
    if (!cov.is_symmetric()) throw std::invalid_argument("cup_check: matrix not symmetric");
    const auto nu = symplectic_spectrum(cov);
    return nu[0] >= 0.5 * epsilon - kValidityTol && nu[1] >= 0.5 * epsilon - kValidityTol;
}

double hur_value(const MomentTable& table) {
    const double vq = table.at({0, 0, 2, 0});
    const double vp = table.at({2, 0, 0, 0});
    const double cqp = table.at({1, 0, 1, 0});
    return vp * vq - cqp * cqp - 0.25;
}

double hur_value(const CovarianceMatrix& cov) {
    return cov(kP, kP) * cov(kQ, kQ) - cov(kQ, kP) * cov(kQ, kP) - 0.25;
}

double wigner_density(const GaussianStateSpec& spec, const std::array<double, 4>& point) {
    const Eigen::Matrix4d sigma = to_eigen(spec.cov);
    Eigen::LLT<Eigen::Matrix4d> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("wigner_density: covariance is not positive definite");

    Eigen::Vector4d d;
    const auto mu = spec.means.to_array();
    for (int i = 0; i < 4; ++i) d(i) = point[static_cast<std::size_t>(i)] - mu[static_cast<std::size_t>(i)];

    const double quad = d.dot(llt.solve(d));
    const Eigen::Matrix4d l = llt.matrixL();
    double sqrt_det = 1.0;
    for (int i = 0; i < 4; ++i) sqrt_det *= l(i, i);

    const double two_pi = 2.0 * std::numbers::pi;
    return std::exp(-0.5 * quad) / (two_pi * two_pi * sqrt_det);
}

} // namespace hybridsim
