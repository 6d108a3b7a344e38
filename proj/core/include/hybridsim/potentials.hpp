#ifndef HYBRIDSIM_POTENTIALS_HPP
#define HYBRIDSIM_POTENTIALS_HPP

#include <array>
#include <string>
#include <vector>

namespace hybridsim {

/// Bivariate polynomial potential V(q, x) = sum c_mn q^m x^n with total
/// degree capped at 7, so that every partial derivative is exact and the
/// hierarchy's derivative sums terminate instead of being truncated.
class PolynomialPotential {
  public:
    static constexpr int kMaxDegree = 7;

    PolynomialPotential() = default;

    /// Adds c * q^m x^n. Throws std::invalid_argument if m + n > 7 or m, n < 0.
    void add_term(int m, int n, double c);

    double coefficient(int m, int n) const;
    double value(double q, double x) const;

    /// Exact d^(dq+dx) V / dq^dq dx^dx evaluated at (q, x); identically zero
    /// once dq + dx exceeds the degree.
    double derivative(int dq, int dx, double q, double x) const;

    /// All derivatives with dq + dx <= kMaxDegree at one point, indexed
    /// out[dq][dx]. One pass over the coefficient list.
    using DerivativeTable = std::array<std::array<double, kMaxDegree + 1>, kMaxDegree + 1>;
    DerivativeTable derivative_table(double q, double x) const;

    int max_degree() const { return max_degree_; }           // total degree of stored terms
    int max_q_degree() const { return max_q_degree_; }       // highest power of q
    bool is_zero() const { return terms_.empty(); }

    struct Term {
        int m, n;
        double c;
    };
    const std::vector<Term>& terms() const { return terms_; }

    /// JSON: {"coeffs":[{"m":2,"n":1,"c":2.0}, ...]}
    std::string to_json() const;
    static PolynomialPotential from_json(const std::string& text);

    friend bool operator==(const PolynomialPotential& a, const PolynomialPotential& b) {
        return a.terms_ == b.terms_;
    }
    friend bool operator==(const Term& a, const Term& b) {
        return a.m == b.m && a.n == b.n && a.c == b.c;
    }

  private:
    std::vector<Term> terms_; // sorted by (m, n), unique, nonzero c
    int max_degree_ = 0;
    int max_q_degree_ = 0;
};

/// Coefficients of the two interaction families studied in the library.
struct ScenarioParams {
    double alpha = 1.0;               // quantum quadratic coefficient, U1 = alpha q^2 / 2
    double beta1 = 0.0;               // strength of the q-linear coupling
    double beta2 = 0.0;               // strength of the q-quadratic coupling
    double gamma1 = 0.0;              // linear term of the classical profile g(x)
    double gamma2 = 0.0;              // quadratic term of g(x)
    double classical_quadratic = 1.0; // U2 = classical_quadratic x^2 / 2
};

/// V = alpha q^2/2 + cc x^2/2 + beta1 q g(x) + beta2 q^2 g(x),
/// g(x) = gamma1 x + gamma2 x^2 (total degree <= 4).
PolynomialPotential example1_potential(const ScenarioParams& p);

/// V = alpha q^2/2 + cc x^2/2 + beta1 q x^2 + beta2 q^2 x (total degree 3).
PolynomialPotential example2_potential(const ScenarioParams& p);

/// V = alpha q^2/2 + cc x^2/2 + bilinear q x.
PolynomialPotential quadratic_potential(double alpha, double classical_quadratic, double bilinear);

/// Classical evolution of the full phase-space density coincides with the
/// quantum one exactly when V is at most quadratic in q (the bracket
/// corrections carry third and higher q-derivatives). Gate for oracle runs.
inline bool classical_evolution_exact(const PolynomialPotential& pot) {
    return pot.max_q_degree() <= 2;
}

} // namespace hybridsim

#endif
