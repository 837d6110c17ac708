#include "mapexit/exit.hpp"

#include <cmath>
#include <sstream>

#include "mapexit/errors.hpp"

namespace mapexit {

namespace {

constexpr double kRichardsonStep = 1e-5;
constexpr double kAlphaLarge = 1e8;
constexpr double kAlphaCheck = 1e7;

Matrix identity(const ScaleEvaluator& ev) {
    const auto n = static_cast<Eigen::Index>(ev.size());
    return Matrix::Identity(n, n);
}

// X B^{-1}, refusing numerically singular B.
Matrix right_divide(const Matrix& X, const Matrix& B, const char* what) {
    Eigen::PartialPivLU<Matrix> lu(B.transpose());
    if (!(lu.rcond() > 1e-14)) {
        std::ostringstream msg;
        msg << what << " is numerically singular (rcond " << lu.rcond() << ")";
        throw NumericalError(msg.str());
    }
    return lu.solve(X.transpose()).transpose();
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw DomainError(msg);
}

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace

ExitResult two_sided_up(const ScaleEvaluator& ev, double a, double b) {
    return {"two_sided_up", {{"a", a}, {"b", b}}, ev.upward_exit(a, b)};
}

ExitResult first_passage_up(const ScaleEvaluator& ev, double a) {
    require(finite_nonneg(a), "first_passage_up: a must be finite and >= 0");
    return {"first_passage_up", {{"a", a}}, first_passage_matrix(ev.spectrum(), a)};
}

ExitResult reflected_up_regulator(const ScaleEvaluator& ev, double alpha, double x, double a) {
    require(finite_nonneg(alpha), "reflected_up_regulator: alpha must be finite and >= 0");
    require(std::isfinite(a) && a > 0.0, "reflected_up_regulator: a must be finite and > 0");
    require(x >= 0.0 && x <= a, "reflected_up_regulator: need 0 <= x <= a");
    Matrix value = x == a ? identity(ev) : right_divide(ev.z_matrix(alpha, x), ev.z_matrix(alpha, a), "Z(alpha, a)");
    return {"reflected_up_regulator", {{"alpha", alpha}, {"x", x}, {"a", a}}, std::move(value)};
}

ExitResult two_sided_down(const ScaleEvaluator& ev, double alpha, double x, double a) {
    require(finite_nonneg(alpha), "two_sided_down: alpha must be finite and >= 0");
    require(std::isfinite(a) && a > 0.0, "two_sided_down: a must be finite and > 0");
    require(x >= 0.0 && x <= a, "two_sided_down: need 0 <= x <= a");
    const Matrix WxWa = right_divide(ev.scale_W(x), ev.scale_W(a), "W(a)");
    Matrix value = ev.z_matrix(alpha, x) - WxWa * ev.z_matrix(alpha, a);
    return {"two_sided_down", {{"alpha", alpha}, {"x", x}, {"a", a}}, std::move(value)};
}

namespace {

Matrix cor2_formula(const ScaleEvaluator& ev, const Matrix& L, Eigen::PartialPivLU<Matrix>& luLT, double alpha, double x) {
    const auto n = L.rows();
    const Matrix inner = (alpha * Matrix::Identity(n, n) + ev.spectrum().Lambda).partialPivLu().solve(L * ev.exponent(alpha));
    // W(x) L^{-1} inner
    const Matrix WL = luLT.solve(ev.scale_W(x).transpose()).transpose();
    return ev.z_matrix(alpha, x) - WL * inner;
}

}  // namespace

ExitResult first_passage_down(const ScaleEvaluator& ev, double alpha, double x, Side side) {
    require(finite_nonneg(alpha), "first_passage_down: alpha must be finite and >= 0");
    require(finite_nonneg(x), "first_passage_down: x must be finite and >= 0");
    const Matrix L = ev.occupation_limit();
    Eigen::PartialPivLU<Matrix> luLT(L.transpose());
    const bool at_root = ev.spectrum().distance_to_roots(alpha) < 1e-6 * std::max(1.0, alpha);
    Matrix value;
    if (at_root) {
        const double h = side == Side::Right ? kRichardsonStep : -kRichardsonStep;
        value = 2.0 * cor2_formula(ev, L, luLT, alpha + 0.5 * h, x) - cor2_formula(ev, L, luLT, alpha + h, x);
    } else {
        value = cor2_formula(ev, L, luLT, alpha, x);
    }
    return {"first_passage_down", {{"alpha", alpha}, {"x", x}}, std::move(value)};
}

Matrix excursion_generator(const ScaleEvaluator& ev, double a, Side /*side*/) {
    require(std::isfinite(a) && a > 0.0, "excursion_generator: a must be finite and > 0");
    // W is analytic on (0, inf) for every model handled here, so W'_+ = W'_-.
    const Matrix G = -ev.log_derivative(a);
    const double tol = 1e-9 * std::max(1.0, G.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < G.rows(); ++i) {
        for (Eigen::Index j = 0; j < G.cols(); ++j) {
            if (i != j && G(i, j) < -tol) {
                std::ostringstream msg;
                msg << "excursion generator at a = " << a << " has negative off-diagonal entry (" << i << "," << j
                    << ") = " << G(i, j);
                throw NumericalError(msg.str());
            }
        }
        if (G.row(i).sum() > tol) {
            std::ostringstream msg;
            msg << "excursion generator at a = " << a << " has positive row sum " << G.row(i).sum() << " in row " << i;
            throw NumericalError(msg.str());
        }
    }
    return G;
}

ExitResult reflected_down_joint(const ScaleEvaluator& ev, double theta, double alpha, double x, double a) {
    require(finite_nonneg(theta), "reflected_down_joint: theta must be finite and >= 0");
    require(finite_nonneg(alpha), "reflected_down_joint: alpha must be finite and >= 0");
    require(std::isfinite(a) && a > 0.0, "reflected_down_joint: a must be finite and > 0");
    require(x >= 0.0 && x <= a, "reflected_down_joint: need 0 <= x <= a");
    const Matrix Wa = ev.scale_W(a);
    const Matrix bracket = ev.scale_W_deriv(a) + theta * Wa;
    const Matrix rhs = Wa * ev.exponent(alpha) - (alpha + theta) * ev.z_matrix(alpha, a);
    Eigen::PartialPivLU<Matrix> lu(bracket);
    if (!(lu.rcond() > 1e-14)) throw NumericalError("W'(a) + theta W(a) is numerically singular");
    Matrix value = ev.z_matrix(alpha, a - x) + ev.scale_W(a - x) * lu.solve(rhs);
    return {"reflected_down_joint", {{"theta", theta}, {"alpha", alpha}, {"x", x}, {"a", a}}, std::move(value)};
}

TwoSidedReflection two_sided_reflection(const ScaleEvaluator& ev, double alpha, double a, double x) {
    require(finite_nonneg(alpha), "two_sided_reflection: alpha must be finite and >= 0");
    require(std::isfinite(a) && a > 0.0, "two_sided_reflection: a must be finite and > 0");
    require(x >= -a && x <= 0.0, "two_sided_reflection: need -a <= x <= 0");
    TwoSidedReflection out;
    out.Fstar = ev.reflection_exponent(alpha, a);
    Matrix init = x == 0.0 ? identity(ev) : right_divide(ev.z_matrix(alpha, a + x), ev.z_matrix(alpha, a), "Z(alpha, a)");
    out.initial = {"two_sided_reflection", {{"alpha", alpha}, {"a", a}, {"x", x}}, std::move(init)};
    return out;
}

Matrix limit_at_infinity(const MatrixFunction& F) {
    // F(alpha) = F(inf) + C/alpha + O(alpha^-2); one Richardson step removes the 1/alpha term.
    auto extrapolate = [&F](double at) { return Matrix(2.0 * F(2.0 * at) - F(at)); };
    const Matrix hi = extrapolate(kAlphaLarge);
    const Matrix lo = extrapolate(kAlphaCheck);
    const double scale = std::max(hi.cwiseAbs().maxCoeff(), 1e-300);
    const double rel = (hi - lo).cwiseAbs().maxCoeff() / scale;
    if (!(rel <= 1e-4)) {
        std::ostringstream msg;
        msg << "F(inf) did not converge: relative change " << rel << " between alpha = 1e7 and 1e8";
        throw NumericalError(msg.str());
    }
    return hi;
}

Matrix mmcpp_first_jump(const MatrixFunction& F, double q, double alpha) {
    require(finite_nonneg(q), "mmcpp_first_jump: q must be finite and >= 0");
    require(finite_nonneg(alpha), "mmcpp_first_jump: alpha must be finite and >= 0");
    const Matrix Finf = limit_at_infinity(F);
    const auto n = Finf.rows();
    const Matrix I = Matrix::Identity(n, n);
    Eigen::PartialPivLU<Matrix> lu(Finf - q * I);
    if (!(lu.rcond() > 1e-14)) throw NumericalError("F(inf) - qI is numerically singular");
    return I - lu.solve(F(alpha) - q * I);
}

ExitResult first_excursion(const ScaleEvaluator& ev, double theta, double alpha, double a) {
    require(std::isfinite(a) && a > 0.0, "first_excursion: a must be finite and > 0");
    const MatrixFunction Fstar = [&ev, a](double al) { return ev.reflection_exponent(al, a); };
    return {"first_excursion", {{"theta", theta}, {"alpha", alpha}, {"a", a}}, mmcpp_first_jump(Fstar, theta, alpha)};
}

}  // namespace mapexit
