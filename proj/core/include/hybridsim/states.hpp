#ifndef HYBRIDSIM_STATES_HPP
#define HYBRIDSIM_STATES_HPP

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "hybridsim/multi_index.hpp"

namespace hybridsim {

/// Basis ordering shared by every module: (q, p, x, k).
/// (q, p) is the quantum pair, (x, k) the classical pair; hbar = 1 and all
/// variables dimensionless.
enum Basis : int { kQ = 0, kP = 1, kX = 2, kK = 3 };

/// First moments <q>, <p>, <x>, <k>.
struct MeanVector {
    double q = 0.0;
    double p = 0.0;
    double x = 0.0;
    double k = 0.0;

    std::array<double, 4> to_array() const { return {q, p, x, k}; }
    static MeanVector from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }
    friend bool operator==(const MeanVector&, const MeanVector&) = default;
};

/// Symmetric 4x4 second-moment matrix in (q, p, x, k) ordering.
class CovarianceMatrix {
  public:
    CovarianceMatrix(); // zero matrix

    static CovarianceMatrix vacuum(); // diag(1/2, 1/2, 1/2, 1/2)
    static CovarianceMatrix diagonal(double vq, double vp, double vx, double vk);
    /// Row-major 16 entries; asymmetry beyond 1e-12 * scale is rejected.
    static CovarianceMatrix from_row_major(const std::array<double, 16>& m);

    double operator()(int i, int j) const { return m_[static_cast<std::size_t>(4 * i + j)]; }
    /// Sets sigma_ij and sigma_ji.
    void set(int i, int j, double value);

    const std::array<double, 16>& row_major() const { return m_; }

    std::array<double, 4> block_q() const;  // sigma_Q, rows/cols (q, p)
    std::array<double, 4> block_c() const;  // sigma_C, rows/cols (x, k)
    std::array<double, 4> block_qc() const; // gamma_QC, rows (q, p) x cols (x, k)

    bool is_symmetric(double tol = 1e-12) const;
    bool has_positive_diagonal() const;

  private:
    std::array<double, 16> m_{};
};

/// The 4x4 symplectic form Omega for (q, p, x, k): block-diagonal with
/// [[0, 1], [-1, 0]] per oscillator. Omega^2 = -I.
struct SymplecticForm {
    static const std::array<double, 16>& row_major();
};

/// Gaussian state: first and second moments.
struct GaussianStateSpec {
    MeanVector means;
    CovarianceMatrix cov;

    /// JSON: {"means":{"q":..,"p":..,"x":..,"k":..},"cov":[[..4x4 row-major..]]}
    std::string to_json() const;
    static GaussianStateSpec from_json(const std::string& text);
};

/// Dense table of central moments S[k1,k2,n1,n2] for all orders <= order_cap.
/// S[0,0,0,0] = 1 and every order-1 entry is 0.
class MomentTable {
  public:
    explicit MomentTable(int order_cap);

    int order_cap() const { return layout_->order_cap(); }
    std::size_t size() const { return values_.size(); }
    const MomentLayout& layout() const { return *layout_; }

    double at(const MultiIndex& idx) const {
        const auto pos = layout_->position(idx);
        return pos < 0 ? 0.0 : values_[static_cast<std::size_t>(pos)];
    }
    double& value(std::size_t pos) { return values_[pos]; }
    double value(std::size_t pos) const { return values_[pos]; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    /// Order-2 entries repackaged as a covariance matrix.
    CovarianceMatrix covariance() const;

  private:
    std::shared_ptr<const MomentLayout> layout_;
    std::vector<double> values_;
};

/// Gaussian central moment of cov for an arbitrary exponent tuple, by the
/// pairing theorem: 0 for odd total order, sum over pair partitions of
/// covariance products for even order (1 for order 0).
double wick_moment(const CovarianceMatrix& cov, const MultiIndex& idx);

/// Fills every entry of total order <= order_cap (>= 2 required) with the
/// Gaussian moments of spec.cov.
MomentTable build_moment_table(const GaussianStateSpec& spec, int order_cap);

/// Evaluates all Gaussian moments of cov up to order_cap in one pass
/// (recursion over the graded enumeration; much cheaper than per-entry calls).
void fill_gaussian_moments(const CovarianceMatrix& cov, const MomentLayout& layout,
                           std::vector<double>& out);

struct SymplecticCheck {
    bool valid = false;
    std::array<double, 2> eigenvalues{0.0, 0.0}; // symplectic spectrum, ascending
    double min_principal_minor = 0.0;            // min leading principal minor of sigma + i Omega/2
};

/// Quantum positivity: both symplectic eigenvalues (moduli of the spectrum of
/// i Omega sigma, paired) >= 1/2 - 1e-9. The principal-minor value is a
/// redundant diagnostic. Throws std::invalid_argument on asymmetric input.
SymplecticCheck symplectic_check(const CovarianceMatrix& cov);

/// Classical (epistemically restricted) positivity: chi + i epsilon Omega/2 >= 0,
/// i.e. symplectic eigenvalues >= epsilon/2. epsilon must be > 0; with
/// epsilon = 1 this coincides with symplectic_check.
bool cup_check(const CovarianceMatrix& cov, double epsilon);

/// Uncertainty functional of the quantum block:
/// f = <dp^2><dq^2> - <dq dp>^2 - 1/4. Negative values flag invalid states.
double hur_value(const MomentTable& table);
double hur_value(const CovarianceMatrix& cov);

/// Gaussian phase-space density
/// W(X) = exp(-1/2 (X-mu)^T sigma^-1 (X-mu)) / ((2 pi)^2 sqrt(det sigma)).
/// Requires positive-definite covariance.
double wigner_density(const GaussianStateSpec& spec, const std::array<double, 4>& point);

} // namespace hybridsim

#endif
