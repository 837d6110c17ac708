#pragma once

#include <limits>
#include <optional>

#include "mapexit/spectral.hpp"

namespace mapexit {

namespace detail {
// Residue expansion split into the roots feeding Lambda ("plus") and the rest:
// W(x) = P+ e^{D+ x} V+ + P- e^{D- x} V-, with R_k = h_k w_k^T.
struct SpectralFactors {
    CMatrix P_plus, V_plus, P_minus, V_minus;
    CVector d_plus, d_minus;
    CMatrix T;  // P+^{-1} P-
};
}  // namespace detail

/// Closed-form evaluators for the scale matrices W and Z and the occupation
/// objects built on them. All matrices live on the original phases.
///
/// Two interchangeable evaluation routes:
///  - Spectral: residue expansion W(x) = sum_k e^{rho_k x} R_k, used whenever
///    every root is simple. Large-argument quantities (L(x), hitting
///    probabilities, W(b) W(a+b)^{-1}) are evaluated in a factored form that
///    never forms e^{rho x} for growing exponentials on their own.
///  - Realization: W(x) = C e^{Mx} B from the companion realization. Needed
///    for the recurrent case where 0 is a double root; exact but limited to
///    moderate arguments.
class ScaleEvaluator {
public:
    enum class Backend { Auto, Spectral, Realization };

    static constexpr double kInfinity = std::numeric_limits<double>::infinity();

    explicit ScaleEvaluator(Spectrum spectrum, Backend backend = Backend::Auto);
    explicit ScaleEvaluator(const MapModel& model, Backend backend = Backend::Auto);

    [[nodiscard]] const Spectrum& spectrum() const { return spectrum_; }
    [[nodiscard]] const MapModel& model() const { return spectrum_.original; }
    [[nodiscard]] std::size_t size() const { return spectrum_.size(); }
    [[nodiscard]] Backend backend() const { return backend_; }

    /// F(alpha) of the original model.
    [[nodiscard]] Matrix exponent(double alpha) const;

    [[nodiscard]] Matrix scale_W(double x) const;
    [[nodiscard]] Matrix scale_W_deriv(double x) const;
    /// W'(x) W(x)^{-1} for x > 0, stable for large x.
    [[nodiscard]] Matrix log_derivative(double x) const;
    /// int_0^x e^{-alpha y} W(y) dy.
    [[nodiscard]] Matrix int_exp_W(double alpha, double x) const;
    [[nodiscard]] CMatrix int_exp_W(Complex alpha, double x) const;
    /// Z(alpha, x) = e^{alpha x} (I - int_0^x e^{-alpha y} W(y) dy F(alpha)).
    [[nodiscard]] Matrix z_matrix(double alpha, double x) const;
    [[nodiscard]] CMatrix z_matrix(Complex alpha, double x) const;

    /// Expected occupation density at 0 up to the first passage over x;
    /// x = kInfinity gives the limit matrix.
    [[nodiscard]] Matrix occupation_matrix(double x) const;
    [[nodiscard]] Matrix occupation_limit() const;

    /// P[J(T_{-x})] for x > 0, T the first hitting time.
    [[nodiscard]] Matrix hitting_below(double x) const;

    /// Max-norm defect of  int e^{alpha x} P[J(T_x)] dx L + F(alpha)^{-1}  for
    /// alpha >= 0 with k(alpha) < 0.
    [[nodiscard]] double transform_identity_residual(double alpha) const;

    /// W(b) W(a+b)^{-1}, stable for large b.
    [[nodiscard]] Matrix upward_exit(double a, double b) const;

    /// F*(alpha) = W(a) F(alpha) Z(alpha, a)^{-1} - alpha I, stable for large alpha.
    [[nodiscard]] Matrix reflection_exponent(double alpha, double a) const;

    /// True when alpha is close enough to a root of det F that resolvent
    /// forms are avoided.
    [[nodiscard]] bool near_root(Complex alpha) const;

private:
    [[nodiscard]] CMatrix k_matrix(double x) const;
    [[nodiscard]] CMatrix resolvent_z(Complex alpha, double x) const;
    [[nodiscard]] Matrix propagator(double x) const;  // e^{Mx}
    void require_finite_occupation(const char* what) const;

    Spectrum spectrum_;
    Backend backend_;
    std::optional<detail::SpectralFactors> factors_;
    std::optional<Matrix> occupation_limit_;
    Matrix C_orig_, B_orig_;
};

}  // namespace mapexit
