#include "hybridsim/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace hybridsim {

namespace {

// falling factorial m (m-1) ... (m-d+1)
double falling(int m, int d) {
    double r = 1.0;
    for (int i = 0; i < d; ++i) r *= static_cast<double>(m - i);
    return r;
}

double ipow(double v, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= v;
    return r;
}

} // namespace

void PolynomialPotential::add_term(int m, int n, double c) {
    if (m < 0 || n < 0) throw std::invalid_argument("potential term: negative exponent");
    if (m + n > kMaxDegree)
        throw std::invalid_argument("potential term: total degree exceeds " +
                                    std::to_string(kMaxDegree));
    if (c == 0.0) return;
    auto it = std::find_if(terms_.begin(), terms_.end(),
                           [&](const Term& t) { return t.m == m && t.n == n; });
    if (it != terms_.end()) {
        it->c += c;
        if (it->c == 0.0) terms_.erase(it);
    } else {
        terms_.push_back({m, n, c});
        std::sort(terms_.begin(), terms_.end(), [](const Term& a, const Term& b) {
            return a.m != b.m ? a.m < b.m : a.n < b.n;
        });
    }
    max_degree_ = 0;
    max_q_degree_ = 0;
    for (const Term& t : terms_) {
        max_degree_ = std::max(max_degree_, t.m + t.n);
        max_q_degree_ = std::max(max_q_degree_, t.m);
    }
}

double PolynomialPotential::coefficient(int m, int n) const {
    for (const Term& t : terms_)
        if (t.m == m && t.n == n) return t.c;
    return 0.0;
}

double PolynomialPotential::value(double q, double x) const {
    double acc = 0.0;
    for (const Term& t : terms_) acc += t.c * ipow(q, t.m) * ipow(x, t.n);
    return acc;
}

double PolynomialPotential::derivative(int dq, int dx, double q, double x) const {
    if (dq < 0 || dx < 0) throw std::invalid_argument("derivative: negative order");
    double acc = 0.0;
    for (const Term& t : terms_) {
        if (t.m < dq || t.n < dx) continue;
        acc += t.c * falling(t.m, dq) * falling(t.n, dx) * ipow(q, t.m - dq) * ipow(x, t.n - dx);
    }
    return acc;
}

PolynomialPotential::DerivativeTable PolynomialPotential::derivative_table(double q, double x) const {
    DerivativeTable out{};
    double qp[kMaxDegree + 1];
    double xp[kMaxDegree + 1];
    qp[0] = xp[0] = 1.0;
    for (int i = 1; i <= kMaxDegree; ++i) {
        qp[i] = qp[i - 1] * q;
        xp[i] = xp[i - 1] * x;
    }
    for (const Term& t : terms_) {
        for (int a = 0; a <= t.m; ++a) {
            const double fa = falling(t.m, a) * qp[t.m - a];
            for (int b = 0; b <= t.n; ++b)
                out[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] +=
                    t.c * fa * falling(t.n, b) * xp[t.n - b];
        }
    }
    return out;
}

std::string PolynomialPotential::to_json() const {
    nlohmann::json coeffs = nlohmann::json::array();
    for (const Term& t : terms_) coeffs.push_back({{"m", t.m}, {"n", t.n}, {"c", t.c}});
    return nlohmann::json{{"coeffs", coeffs}}.dump();
}

PolynomialPotential PolynomialPotential::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    PolynomialPotential pot;
    for (const auto& t : j.at("coeffs"))
        pot.add_term(t.at("m").get<int>(), t.at("n").get<int>(), t.at("c").get<double>());
    return pot;
}

PolynomialPotential example1_potential(const ScenarioParams& p) {
    PolynomialPotential pot;
    pot.add_term(2, 0, 0.5 * p.alpha);
    pot.add_term(0, 2, 0.5 * p.classical_quadratic);
    // beta1 q g(x) + beta2 q^2 g(x), g = gamma1 x + gamma2 x^2
    pot.add_term(1, 1, p.beta1 * p.gamma1);
    pot.add_term(1, 2, p.beta1 * p.gamma2);
    pot.add_term(2, 1, p.beta2 * p.gamma1);
    pot.add_term(2, 2, p.beta2 * p.gamma2);
    return pot;
}

PolynomialPotential example2_potential(const ScenarioParams& p) {
    PolynomialPotential pot;
    pot.add_term(2, 0, 0.5 * p.alpha);
    pot.add_term(0, 2, 0.5 * p.classical_quadratic);
    pot.add_term(1, 2, p.beta1);
    pot.add_term(2, 1, p.beta2);
    return pot;
}

PolynomialPotential quadratic_potential(double alpha, double classical_quadratic, double bilinear) {
    PolynomialPotential pot;
    pot.add_term(2, 0, 0.5 * alpha);
    pot.add_term(0, 2, 0.5 * classical_quadratic);
    pot.add_term(1, 1, bilinear);
    return pot;
}

} // namespace hybridsim
