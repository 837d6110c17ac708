#include "mapexit/scale.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "mapexit/errors.hpp"

namespace mapexit {

namespace {

constexpr double kLimitTol = 1e-9;

// e^w - 1 without cancellation for small |w|.
Complex cexpm1(Complex w) {
    const double a = w.real(), b = w.imag();
    const double s = std::sin(0.5 * b);
    return {std::expm1(a) * std::cos(b) - 2.0 * s * s, std::exp(a) * std::sin(b)};
}

// int_0^x e^{z y} dy
Complex phi(Complex z, double x) {
    if (std::abs(z) < kLimitTol) return x;
    return cexpm1(z * x) / z;
}

template <class F>
CMatrix sum_over_roots(const detail::SpectralFactors& f, F coeff) {
    CVector cp(f.d_plus.size()), cm(f.d_minus.size());
    for (Eigen::Index k = 0; k < cp.size(); ++k) cp(k) = coeff(f.d_plus(k));
    for (Eigen::Index k = 0; k < cm.size(); ++k) cm(k) = coeff(f.d_minus(k));
    CMatrix out = f.P_plus * cp.asDiagonal() * f.V_plus;
    if (cm.size() > 0) out += f.P_minus * cm.asDiagonal() * f.V_minus;
    return out;
}

CVector exp_of(const CVector& d, double x) {
    CVector e(d.size());
    for (Eigen::Index k = 0; k < d.size(); ++k) e(k) = std::exp(d(k) * x);
    return e;
}

Matrix real_part(const CMatrix& m) { return m.real(); }

void require_nonneg(double x, const char* what) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError(std::string(what) + ": x must be finite and >= 0");
}

}  // namespace

ScaleEvaluator::ScaleEvaluator(const MapModel& model, Backend backend)
    : ScaleEvaluator(solve_spectrum(model), backend) {}

ScaleEvaluator::ScaleEvaluator(Spectrum spectrum, Backend backend)
    : spectrum_(std::move(spectrum)), backend_(backend) {
    const bool simple = spectrum_.simple();
    if (backend_ == Backend::Auto) backend_ = simple ? Backend::Spectral : Backend::Realization;
    if (backend_ == Backend::Spectral && !simple) {
        throw DomainError("spectral backend needs simple roots; the recurrent double root at 0 requires the realization backend");
    }
    const auto n = static_cast<Eigen::Index>(size());
    C_orig_ = spectrum_.realization.C.topRows(n);
    B_orig_ = spectrum_.realization.B.leftCols(n);

    if (!simple) return;
    std::vector<const RootData*> plus, minus;
    for (const auto& r : spectrum_.roots) (r.in_lambda ? plus : minus).push_back(&r);
    detail::SpectralFactors f;
    auto fill = [n](const std::vector<const RootData*>& rs, CMatrix& P, CMatrix& V, CVector& d) {
        const auto k = static_cast<Eigen::Index>(rs.size());
        P.resize(n, k);
        V.resize(k, n);
        d.resize(k);
        for (Eigen::Index j = 0; j < k; ++j) {
            const auto* r = rs[static_cast<std::size_t>(j)];
            P.col(j) = r->h.head(n);
            V.row(j) = r->weight->transpose();
            d(j) = r->rho;
        }
    };
    fill(plus, f.P_plus, f.V_plus, f.d_plus);
    fill(minus, f.P_minus, f.V_minus, f.d_minus);
    Eigen::PartialPivLU<CMatrix> lu(f.P_plus);
    f.T = lu.solve(f.P_minus);
    factors_ = std::move(f);
    occupation_limit_ = real_part(factors_->P_plus * factors_->V_plus);
}

Matrix ScaleEvaluator::exponent(double alpha) const { return matrix_exponent(model(), alpha); }

bool ScaleEvaluator::near_root(Complex alpha) const {
    return spectrum_.distance_to_roots(alpha) < 1e-3 * std::max(1.0, std::abs(alpha));
}

Matrix ScaleEvaluator::propagator(double x) const { return (spectrum_.realization.M * x).exp(); }

Matrix ScaleEvaluator::scale_W(double x) const {
    require_nonneg(x, "scale_W");
    if (backend_ == Backend::Spectral) {
        return real_part(sum_over_roots(*factors_, [x](Complex r) { return std::exp(r * x); }));
    }
    return C_orig_ * propagator(x) * B_orig_;
}

Matrix ScaleEvaluator::scale_W_deriv(double x) const {
    require_nonneg(x, "scale_W_deriv");
    if (backend_ == Backend::Spectral) {
        return real_part(sum_over_roots(*factors_, [x](Complex r) { return r * std::exp(r * x); }));
    }
    return C_orig_ * spectrum_.realization.M * propagator(x) * B_orig_;
}

CMatrix ScaleEvaluator::int_exp_W(Complex alpha, double x) const {
    require_nonneg(x, "int_exp_W");
    const auto n = static_cast<Eigen::Index>(size());
    if (x == 0.0) return CMatrix::Zero(n, n);
    if (backend_ == Backend::Spectral) {
        return sum_over_roots(*factors_, [alpha, x](Complex r) { return phi(r - alpha, x); });
    }
    // Top-right block of exp([[M - alpha, I], [0, 0]] x) is int_0^x e^{(M - alpha) y} dy.
    const auto m = spectrum_.realization.M.rows();
    CMatrix big = CMatrix::Zero(2 * m, 2 * m);
    big.topLeftCorner(m, m) = spectrum_.realization.M.cast<Complex>() - alpha * CMatrix::Identity(m, m);
    big.topRightCorner(m, m) = CMatrix::Identity(m, m);
    const CMatrix e = (big * Complex(x, 0.0)).exp();
    return C_orig_.cast<Complex>() * e.topRightCorner(m, m) * B_orig_.cast<Complex>();
}

Matrix ScaleEvaluator::int_exp_W(double alpha, double x) const { return int_exp_W(Complex(alpha, 0.0), x).real(); }

CMatrix ScaleEvaluator::resolvent_z(Complex alpha, double x) const {
    if (backend_ == Backend::Spectral) {
        return sum_over_roots(*factors_, [alpha, x](Complex r) { return std::exp(r * x) / (alpha - r); });
    }
    const auto m = spectrum_.realization.M.rows();
    const CMatrix shifted = alpha * CMatrix::Identity(m, m) - spectrum_.realization.M.cast<Complex>();
    const CMatrix eB = (propagator(x) * B_orig_).cast<Complex>();
    return C_orig_.cast<Complex>() * shifted.partialPivLu().solve(eB);
}

CMatrix ScaleEvaluator::z_matrix(Complex alpha, double x) const {
    require_nonneg(x, "z_matrix");
    const auto n = static_cast<Eigen::Index>(size());
    if (x == 0.0) return CMatrix::Identity(n, n);
    const CMatrix F = matrix_exponent(model(), alpha);
    if (near_root(alpha)) {
        return std::exp(alpha * x) * (CMatrix::Identity(n, n) - int_exp_W(alpha, x) * F);
    }
    return resolvent_z(alpha, x) * F;
}

Matrix ScaleEvaluator::z_matrix(double alpha, double x) const { return z_matrix(Complex(alpha, 0.0), x).real(); }

void ScaleEvaluator::require_finite_occupation(const char* what) const {
    if (spectrum_.recurrent) throw RecurrentCase(std::string(what) + ": the occupation matrix L is infinite");
}

Matrix ScaleEvaluator::occupation_limit() const {
    require_finite_occupation("occupation_limit");
    return *occupation_limit_;
}

CMatrix ScaleEvaluator::k_matrix(double x) const {
    const auto& f = *factors_;
    CMatrix K = f.V_plus;
    if (f.d_minus.size() > 0) {
        K += exp_of(-f.d_plus, x).asDiagonal() * f.T * exp_of(f.d_minus, x).asDiagonal() * f.V_minus;
    }
    return K;
}

Matrix ScaleEvaluator::occupation_matrix(double x) const {
    if (x == kInfinity) return occupation_limit();
    require_nonneg(x, "occupation_matrix");
    if (backend_ == Backend::Spectral) return real_part(factors_->P_plus * k_matrix(x));
    return first_passage_matrix(spectrum_, x) * scale_W(x);
}

Matrix ScaleEvaluator::hitting_below(double x) const {
    require_finite_occupation("hitting_below");
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("hitting_below: x must be finite and > 0");
    const Matrix& L = *occupation_limit_;
    Eigen::PartialPivLU<Matrix> luT(L.transpose());
    if (backend_ == Backend::Spectral) {
        // e^{-Lambda x} - W(x) L^{-1} collapses to -P- e^{D- x} V- L^{-1}.
        const auto& f = *factors_;
        const Matrix G = real_part(f.P_minus * exp_of(f.d_minus, x).asDiagonal() * f.V_minus);
        return -luT.solve(G.transpose()).transpose();
    }
    const Matrix back = (-spectrum_.Lambda * x).exp();
    return back - luT.solve(scale_W(x).transpose()).transpose();
}

double ScaleEvaluator::transform_identity_residual(double alpha) const {
    require_finite_occupation("transform_identity_residual");
    if (!factors_) throw DomainError("transform_identity_residual needs simple roots");
    if (!(alpha >= 0.0)) throw DomainError("transform_identity_residual: alpha must be >= 0");
    const double k = perron_root(model(), alpha);
    if (!(k < 0.0)) {
        std::ostringstream msg;
        msg << "transform_identity_residual: needs k(alpha) < 0, got k(" << alpha << ") = " << k;
        throw DomainError(msg.str());
    }
    const auto n = static_cast<Eigen::Index>(size());
    const auto& f = *factors_;
    const Matrix& L = *occupation_limit_;
    // Upward part: int_0^inf e^{alpha x} e^{Lambda x} dx L = -(alpha I + Lambda)^{-1} L.
    const Matrix up = -(alpha * Matrix::Identity(n, n) + spectrum_.Lambda).partialPivLu().solve(L);
    // Downward part: int_0^inf e^{-alpha x} P[J(T_{-x})] dx L, with P[J(T_{-x})] = -P- e^{D- x} V- L^{-1}.
    CVector c(f.d_minus.size());
    for (Eigen::Index j = 0; j < c.size(); ++j) c(j) = 1.0 / (alpha - f.d_minus(j));
    const Matrix hit = c.size() > 0 ? Matrix(-real_part(f.P_minus * c.asDiagonal() * f.V_minus)) : Matrix::Zero(n, n);
    const Matrix down = L.transpose().partialPivLu().solve(hit.transpose()).transpose() * L;
    const Matrix Finv = exponent(alpha).partialPivLu().inverse();
    return (up + down + Finv).cwiseAbs().maxCoeff();
}

Matrix ScaleEvaluator::log_derivative(double x) const {
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("log_derivative: x must be finite and > 0");
    if (backend_ == Backend::Spectral) {
        // W = P+ e^{D+ x} K(x), so W' W^{-1} = P+ (D+ + (T D- - D+ T) e^{D- x} V- K^{-1} e^{-D+ x}) P+^{-1}.
        const auto& f = *factors_;
        CMatrix mid = f.d_plus.asDiagonal().toDenseMatrix();
        if (f.d_minus.size() > 0) {
            const CMatrix G = f.T * f.d_minus.asDiagonal() - f.d_plus.asDiagonal() * f.T;
            const CMatrix E = G * exp_of(f.d_minus, x).asDiagonal() * f.V_minus;
            const CMatrix EK = k_matrix(x).transpose().partialPivLu().solve(E.transpose()).transpose();
            mid += EK * exp_of(-f.d_plus, x).asDiagonal();
        }
        const CMatrix R = f.P_plus * mid;
        return f.P_plus.transpose().partialPivLu().solve(R.transpose()).transpose().real();
    }
    return scale_W(x).transpose().partialPivLu().solve(scale_W_deriv(x).transpose()).transpose();
}

Matrix ScaleEvaluator::upward_exit(double a, double b) const {
    if (!(a >= 0.0) || !(b >= 0.0) || !std::isfinite(a) || !std::isfinite(b) || a + b <= 0.0) {
        throw DomainError("two_sided_up: need a >= 0, b >= 0, a + b > 0");
    }
    const auto n = static_cast<Eigen::Index>(size());
    if (a == 0.0) return Matrix::Identity(n, n);
    if (backend_ == Backend::Spectral) {
        const auto& f = *factors_;
        CMatrix E = CMatrix::Zero(n, n);
        if (f.d_minus.size() > 0) {
            E = f.T * exp_of(f.d_minus, b).asDiagonal() * f.V_minus -
                exp_of(-f.d_plus, a).asDiagonal() * f.T * exp_of(f.d_minus, a + b).asDiagonal() * f.V_minus;
        }
        const CMatrix Kab = k_matrix(a + b);
        // Y = E K(a+b)^{-1} e^{-D+ b}
        const CMatrix EK = Kab.transpose().partialPivLu().solve(E.transpose()).transpose();
        const CMatrix Y = EK * exp_of(-f.d_plus, b).asDiagonal();
        const CMatrix mid = (CMatrix::Identity(n, n) + Y) * exp_of(-f.d_plus, a).asDiagonal();
        const CMatrix R = f.P_plus * mid;
        const CMatrix out = f.P_plus.transpose().partialPivLu().solve(R.transpose()).transpose();
        return out.real();
    }
    const Matrix Wb = scale_W(b), Wab = scale_W(a + b);
    return Wab.transpose().partialPivLu().solve(Wb.transpose()).transpose();
}

Matrix ScaleEvaluator::reflection_exponent(double alpha, double a) const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw DomainError("reflection_exponent: alpha must be finite and >= 0");
    if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("reflection_exponent: a must be finite and > 0");
    const auto n = static_cast<Eigen::Index>(size());
    const Complex al(alpha, 0.0);
    if (!near_root(al)) {
        // W(a) F Z^{-1} - alpha = -A S^{-1} with S = sum e^{rho a} R/(alpha - rho), A = sum rho e^{rho a} R/(alpha - rho).
        CMatrix S, A;
        if (backend_ == Backend::Spectral) {
            S = sum_over_roots(*factors_, [al, a](Complex r) { return std::exp(r * a) / (al - r); });
            A = sum_over_roots(*factors_, [al, a](Complex r) { return r * std::exp(r * a) / (al - r); });
        } else {
            const auto& M = spectrum_.realization.M;
            const auto m = M.rows();
            const Matrix res = (alpha * Matrix::Identity(m, m) - M).partialPivLu().solve(propagator(a) * B_orig_);
            S = (C_orig_ * res).cast<Complex>();
            A = (C_orig_ * M * res).cast<Complex>();
        }
        const CMatrix out = -S.transpose().partialPivLu().solve(A.transpose()).transpose();
        return out.real();
    }
    const Matrix Z = z_matrix(alpha, a);
    const Matrix WF = scale_W(a) * exponent(alpha);
    return Matrix(Z.transpose().partialPivLu().solve(WF.transpose()).transpose()) - alpha * Matrix::Identity(n, n);
}

}  // namespace mapexit
