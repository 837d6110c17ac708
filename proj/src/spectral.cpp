#include "mapexit/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include "mapexit/errors.hpp"

namespace mapexit {

namespace {

constexpr double kResidualTol = 1e-9;
constexpr double kPairTol = 1e-7;
constexpr double kSimpleTol = 1e-10;

// Unit norm, first entry with non-negligible modulus rotated to the positive real axis.
CVector normalized(CVector x) {
    x /= x.norm();
    const double cutoff = 1e-8;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (std::abs(x(i)) > cutoff) {
            x *= std::conj(x(i)) / std::abs(x(i));
            x(i) = Complex(x(i).real(), 0.0);
            break;
        }
    }
    return x;
}

struct NullPair {
    CVector h;
    CVector v;
    double relative_residual;
};

// Right and left null vectors of F(rho) from the SVD of the row-equilibrated
// matrix. Rows are scaled by the magnitude of F and of rho F'(rho) so the
// smallest singular value is a residual relative to the size of the entries.
NullPair null_vectors(const MapModel& emb, Complex rho) {
    const CMatrix F = matrix_exponent(emb, rho);
    const CMatrix D = matrix_exponent_deriv(emb, rho) * std::max(1.0, std::abs(rho));
    const auto n = F.rows();
    Vector scale(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = std::max(F.row(i).cwiseAbs().maxCoeff(), D.row(i).cwiseAbs().maxCoeff());
        scale(i) = m > 0.0 ? 1.0 / m : 1.0;
    }
    const CMatrix Fs = scale.asDiagonal() * F;
    Eigen::BDCSVD<CMatrix> svd(Fs, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const CVector h = svd.matrixV().col(n - 1);
    // u^* Fs = s v^*  =>  (conj(u) .* scale)^T F = s v^*
    const CVector u = svd.matrixU().col(n - 1).conjugate();
    const CVector v = scale.cast<Complex>().cwiseProduct(u);
    return {normalized(h), normalized(v), s(n - 1)};
}

// Newton refinement of a simple root of det F using its null vectors.
Complex polish(const MapModel& emb, Complex rho, bool keep_real) {
    NullPair best = null_vectors(emb, rho);
    for (int iter = 0; iter < 3 && best.relative_residual > 1e-15; ++iter) {
        const CMatrix F = matrix_exponent(emb, rho);
        const CMatrix D = matrix_exponent_deriv(emb, rho);
        const Complex num = best.v.transpose() * F * best.h;
        const Complex den = best.v.transpose() * D * best.h;
        if (std::abs(den) < kSimpleTol) break;
        Complex next = rho - num / den;
        if (keep_real) next = Complex(next.real(), 0.0);
        const NullPair trial = null_vectors(emb, next);
        if (!(trial.relative_residual < best.relative_residual)) break;
        rho = next;
        best = trial;
    }
    return rho;
}

RootData simple_root(const Spectrum& sp, Complex rho) {
    const NullPair np = null_vectors(sp.embedded, rho);
    if (np.relative_residual > kResidualTol) {
        std::ostringstream msg;
        msg << "root " << rho << " has relative residual " << np.relative_residual << " > " << kResidualTol;
        throw NumericalError(msg.str());
    }
    RootData r;
    r.rho = rho;
    r.h = np.h;
    r.v = np.v;
    const Complex c = np.v.transpose() * matrix_exponent_deriv(sp.embedded, rho) * np.h;
    if (std::abs(c) <= kSimpleTol) {
        std::ostringstream msg;
        msg << "root " << rho << " is not simple (|v F'(rho) h| = " << std::abs(c) << ")";
        throw RepeatedRoot(msg.str());
    }
    const auto n = static_cast<Eigen::Index>(sp.size());
    const CVector w = np.v.head(n) / c;
    r.weight = w;
    r.residue = np.h.head(n) * w.transpose();
    return r;
}

double drift_scale(const MapModel& m) {
    double s = 0.0;
    for (const auto& p : m.phases) {
        s = std::max(s, std::abs(p.drift) + p.sigma * p.sigma);
        for (const auto& js : p.jumps) s = std::max(s, js.intensity * js.law.mean());
    }
    return std::max(s, 1.0);
}

}  // namespace

Realization companion_realization(const MapModel& model) {
    if (model.has_jumps()) throw DomainError("companion_realization needs a jump-free model (embed first)");
    const auto n = static_cast<Eigen::Index>(model.size());
    std::vector<Eigen::Index> diffusive;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (model.phases[static_cast<std::size_t>(i)].sigma > 0.0) diffusive.push_back(i);
    }
    const auto m = n + static_cast<Eigen::Index>(diffusive.size());
    const Matrix Qk = model.Q - model.kill_rate * Matrix::Identity(n, n);
    Realization r{Matrix::Zero(m, m), Matrix::Zero(m, n), Matrix::Zero(n, m)};
    r.C.leftCols(n).setIdentity();
    std::vector<Eigen::Index> slot(static_cast<std::size_t>(n), -1);
    for (std::size_t k = 0; k < diffusive.size(); ++k) slot[static_cast<std::size_t>(diffusive[k])] = n + static_cast<Eigen::Index>(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = model.phases[static_cast<std::size_t>(i)];
        const Eigen::Index g = slot[static_cast<std::size_t>(i)];
        if (g >= 0) {
            const double c = 2.0 / (p.sigma * p.sigma);
            r.M(i, g) = 1.0;
            r.M(g, g) = -c * p.drift;
            r.M.block(g, 0, 1, n) = -c * Qk.row(i);
            r.B(g, i) = c;
        } else {
            if (p.drift == 0.0) throw DomainError("phase with sigma = 0 and drift = 0 has no realization");
            r.M.block(i, 0, 1, n) = -Qk.row(i) / p.drift;
            r.B(i, i) = 1.0 / p.drift;
        }
    }
    return r;
}

bool Spectrum::simple() const {
    return std::all_of(roots.begin(), roots.end(), [](const RootData& r) { return r.multiplicity == 1; });
}

double Spectrum::distance_to_roots(Complex alpha) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& r : roots) d = std::min(d, std::abs(alpha - r.rho));
    return d;
}

Spectrum solve_spectrum(const MapModel& model) {
    require_valid(model);
    Spectrum sp;
    sp.original = model;
    std::tie(sp.embedded, sp.embedding) = embed_fluid(model);
    sp.realization = companion_realization(sp.embedded);
    const std::size_t n_orig = model.size();

    Eigen::EigenSolver<Matrix> es(sp.realization.M, false);
    if (es.info() != Eigen::Success) throw NumericalError("eigenvalue solver failed on the companion matrix");
    std::vector<Complex> eig(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());

    sp.conservative = model.conservative();
    if (sp.conservative) {
        sp.drift = asymptotic_drift(model);
        sp.recurrent = std::abs(*sp.drift) <= 1e-9 * drift_scale(model);
        std::sort(eig.begin(), eig.end(), [](Complex a, Complex b) { return std::abs(a) < std::abs(b); });
        const std::size_t zeros = sp.recurrent ? 2 : 1;
        if (eig.size() < zeros || std::abs(eig[zeros - 1]) > 1e-5 * std::max(1.0, sp.realization.M.norm())) {
            throw NumericalError("expected root at 0 for a conservative model was not found");
        }
        eig.erase(eig.begin(), eig.begin() + static_cast<std::ptrdiff_t>(zeros));
        if (sp.recurrent) {
            RootData zero;
            zero.rho = 0.0;
            zero.multiplicity = 2;
            const auto ne = static_cast<Eigen::Index>(sp.embedded.size());
            zero.h = normalized(CVector::Ones(ne));
            zero.v = normalized(stationary_distribution(sp.embedded.Q).cast<Complex>());
            sp.roots.push_back(std::move(zero));
        } else {
            sp.roots.push_back(simple_root(sp, 0.0));
        }
    }

    for (const Complex lam : eig) {
        if (lam.imag() < 0.0) continue;  // handled with its conjugate partner
        const bool real = lam.imag() == 0.0;
        const Complex rho = polish(sp.embedded, lam, real);
        sp.roots.push_back(simple_root(sp, rho));
        if (!real) {
            RootData partner = sp.roots.back();
            partner.rho = std::conj(rho);
            partner.h = partner.h.conjugate();
            partner.v = partner.v.conjugate();
            partner.residue = partner.residue->conjugate();
            partner.weight = partner.weight->conjugate();
            sp.roots.push_back(std::move(partner));
        }
    }
    std::sort(sp.roots.begin(), sp.roots.end(), [](const RootData& a, const RootData& b) {
        if (a.rho.real() != b.rho.real()) return a.rho.real() > b.rho.real();
        return a.rho.imag() > b.rho.imag();
    });
    for (std::size_t i = 0; i < sp.roots.size(); ++i) {
        for (std::size_t j = i + 1; j < sp.roots.size(); ++j) {
            if (std::abs(sp.roots[i].rho - sp.roots[j].rho) < kPairTol) {
                std::ostringstream msg;
                msg << "roots " << sp.roots[i].rho << " and " << sp.roots[j].rho
                    << " coincide within 1e-7; perturb the parameters";
                throw RepeatedRoot(msg.str());
            }
        }
    }

    sp.eta = -std::numeric_limits<double>::infinity();
    std::vector<const RootData*> lambda_roots;
    for (auto& r : sp.roots) {
        sp.eta = std::max(sp.eta, r.rho.real());
        const bool zero = r.rho == Complex(0.0, 0.0);
        if (zero) {
            r.in_lambda = sp.conservative && *sp.drift >= 0.0 - 1e-9 * drift_scale(model);
        } else {
            r.in_lambda = r.rho.real() > kResidualTol * std::max(1.0, std::abs(r.rho));
        }
        if (r.in_lambda) lambda_roots.push_back(&r);
    }
    if (lambda_roots.size() != n_orig) {
        std::ostringstream msg;
        msg << "found " << lambda_roots.size() << " roots in the right half-plane (with the zero-root rule), expected "
            << n_orig;
        throw CountMismatch(msg.str());
    }

    const auto n = static_cast<Eigen::Index>(n_orig);
    CMatrix H(n, n);
    CVector rho(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto* r = lambda_roots[static_cast<std::size_t>(k)];
        H.col(k) = r->h.head(n);
        rho(k) = r->rho;
    }
    Eigen::PartialPivLU<CMatrix> lu(H.transpose());
    if (!(lu.rcond() > 1e-13)) throw NumericalError("null vectors of the right half-plane roots are linearly dependent");
    // Lambda = -H diag(rho) H^{-1}, solved as H^T Lambda^T = (H D)^T
    const CMatrix HD = H * (-rho).asDiagonal();
    const CMatrix Lam = lu.solve(HD.transpose()).transpose();
    const double scale = std::max(1.0, Lam.cwiseAbs().maxCoeff());
    if (Lam.imag().cwiseAbs().maxCoeff() > 1e-9 * scale) {
        throw NumericalError("Lambda has a non-negligible imaginary part; conjugate roots were not paired");
    }
    sp.Lambda = Lam.real();
    return sp;
}

Matrix first_passage_matrix(const Spectrum& spectrum, double x) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("first_passage_matrix needs a finite x >= 0");
    if (x == 0.0) return Matrix::Identity(spectrum.Lambda.rows(), spectrum.Lambda.cols());
    return Matrix((spectrum.Lambda * x).exp());
}

}  // namespace mapexit
