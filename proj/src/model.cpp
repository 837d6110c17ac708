#include "mapexit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mapexit/errors.hpp"

namespace mapexit {

namespace {

constexpr double kPoleTolerance = 1e-10;

void check_law(const JumpLaw& law, const std::string& where, std::vector<Violation>& out) {
    if (law.components.empty()) {
        out.push_back({where, "mixture must have at least one component"});
        return;
    }
    double total = 0.0;
    for (std::size_t m = 0; m < law.components.size(); ++m) {
        const auto& c = law.components[m];
        const std::string field = where + ".mixture[" + std::to_string(m) + "]";
        if (!(c.weight > 0.0) || !std::isfinite(c.weight)) out.push_back({field + ".weight", "weight must be > 0"});
        if (!(c.rate > 0.0) || !std::isfinite(c.rate)) out.push_back({field + ".mu", "rate must be > 0"});
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        out.push_back({where + ".mixture", "weights must sum to 1 (got " + std::to_string(total) + ")"});
    }
}

bool irreducible(const Matrix& Q) {
    const auto n = static_cast<std::size_t>(Q.rows());
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<bool> seen(n, false);
        std::vector<std::size_t> stack{s};
        seen[s] = true;
        while (!stack.empty()) {
            const auto i = stack.back();
            stack.pop_back();
            for (std::size_t j = 0; j < n; ++j) {
                if (!seen[j] && j != i && Q(i, j) > 0.0) {
                    seen[j] = true;
                    stack.push_back(j);
                }
            }
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end()) return false;
    }
    return true;
}

void check_pole(const JumpLaw& law, Complex alpha) {
    for (const auto& c : law.components) {
        if (std::abs(alpha + c.rate) < kPoleTolerance) {
            std::ostringstream msg;
            msg << "matrix exponent evaluated at alpha=" << alpha << ", within 1e-10 of the pole -" << c.rate;
            throw PoleError(msg.str());
        }
    }
}

}  // namespace

Complex JumpLaw::transform(Complex alpha) const {
    Complex sum = 0.0;
    for (const auto& c : components) sum += c.weight * c.rate / (c.rate + alpha);
    return sum;
}

Complex JumpLaw::transform_deriv(Complex alpha) const {
    Complex sum = 0.0;
    for (const auto& c : components) sum -= c.weight * c.rate / ((c.rate + alpha) * (c.rate + alpha));
    return sum;
}

double JumpLaw::mean() const {
    double m = 0.0;
    for (const auto& c : components) m += c.weight / c.rate;
    return m;
}

double JumpLaw::min_rate() const {
    double r = std::numeric_limits<double>::infinity();
    for (const auto& c : components) r = std::min(r, c.rate);
    return r;
}

bool MapModel::has_jumps() const {
    for (const auto& p : phases) {
        for (const auto& s : p.jumps) {
            if (s.intensity > 0.0) return true;
        }
    }
    for (const auto& [key, law] : transition_jumps) {
        if (Q(key.first, key.second) > 0.0) return true;
    }
    return false;
}

bool MapModel::conservative(double tol) const {
    if (kill_rate != 0.0) return false;
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
        const double scale = std::max(1.0, std::abs(Q(i, i)));
        if (std::abs(Q.row(i).sum()) > tol * scale) return false;
    }
    return true;
}

std::vector<Violation> validate(const MapModel& model) {
    std::vector<Violation> out;
    const std::size_t n = model.phases.size();
    if (n == 0) {
        out.push_back({"states", "model must have at least one phase"});
        return out;
    }
    if (static_cast<std::size_t>(model.Q.rows()) != n || static_cast<std::size_t>(model.Q.cols()) != n) {
        out.push_back({"Q", "must be " + std::to_string(n) + "x" + std::to_string(n)});
        return out;
    }
    bool q_finite = true;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = model.Q(i, j);
            if (!std::isfinite(v)) {
                out.push_back({"Q[" + std::to_string(i) + "][" + std::to_string(j) + "]", "entries must be finite"});
                q_finite = false;
                continue;
            }
            if (i != j && v < 0.0) {
                out.push_back({"Q[" + std::to_string(i) + "][" + std::to_string(j) + "]",
                               "off-diagonal rates must be >= 0"});
            }
            row += v;
        }
        const double scale = std::max(1.0, std::abs(model.Q(i, i)));
        if (row > 1e-12 * scale) {
            out.push_back({"Q[" + std::to_string(i) + "]", "row sum must be <= 0 (got " + std::to_string(row) + ")"});
        }
    }
    if (q_finite && n > 1 && !irreducible(model.Q)) out.push_back({"Q", "generator must be irreducible"});
    if (!(model.kill_rate >= 0.0) || !std::isfinite(model.kill_rate)) {
        out.push_back({"kill_rate", "must be finite and >= 0"});
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = model.phases[i];
        const std::string where = "phases[" + std::to_string(i) + "]";
        if (!std::isfinite(p.drift)) out.push_back({where + ".drift", "must be finite"});
        if (!(p.sigma >= 0.0) || !std::isfinite(p.sigma)) out.push_back({where + ".sigma", "must be finite and >= 0"});
        if (p.auxiliary) {
            if (p.sigma != 0.0 || p.drift != -1.0 || !p.jumps.empty()) {
                out.push_back({where, "auxiliary phase must have sigma=0, drift=-1 and no jumps"});
            }
        } else if (!(p.sigma > 0.0) && !(p.drift > 0.0)) {
            out.push_back({where, "non-increasing phase: need sigma > 0 or drift > 0"});
        }
        for (std::size_t s = 0; s < p.jumps.size(); ++s) {
            const auto& js = p.jumps[s];
            const std::string sw = where + ".jumps[" + std::to_string(s) + "]";
            if (!(js.intensity >= 0.0) || !std::isfinite(js.intensity)) {
                out.push_back({sw + ".rate", "intensity must be finite and >= 0"});
            }
            check_law(js.law, sw, out);
        }
    }
    for (const auto& [key, law] : model.transition_jumps) {
        const std::string where = "transition_jumps[" + std::to_string(key.first) + "," + std::to_string(key.second) + "]";
        if (key.first >= n || key.second >= n) {
            out.push_back({where, "phase index out of range"});
            continue;
        }
        if (key.first == key.second) out.push_back({where, "transition jumps need i != j"});
        check_law(law, where, out);
    }
    return out;
}

void require_valid(const MapModel& model) {
    const auto violations = validate(model);
    if (violations.empty()) return;
    std::ostringstream msg;
    msg << "invalid model:";
    for (const auto& v : violations) msg << "\n  " << v.field << ": " << v.rule;
    throw ValidationError(msg.str());
}

CMatrix matrix_exponent(const MapModel& model, Complex alpha) {
    const auto n = static_cast<Eigen::Index>(model.size());
    CMatrix F = model.Q.cast<Complex>();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = model.phases[static_cast<std::size_t>(i)];
        Complex psi = p.drift * alpha + 0.5 * p.sigma * p.sigma * alpha * alpha;
        for (const auto& s : p.jumps) {
            if (s.intensity == 0.0) continue;
            check_pole(s.law, alpha);
            psi += s.intensity * (s.law.transform(alpha) - 1.0);
        }
        F(i, i) += psi - model.kill_rate;
    }
    for (const auto& [key, law] : model.transition_jumps) {
        const auto i = static_cast<Eigen::Index>(key.first);
        const auto j = static_cast<Eigen::Index>(key.second);
        if (model.Q(i, j) == 0.0) continue;
        check_pole(law, alpha);
        F(i, j) *= law.transform(alpha);
    }
    return F;
}

Matrix matrix_exponent(const MapModel& model, double alpha) {
    return matrix_exponent(model, Complex(alpha, 0.0)).real();
}

CMatrix matrix_exponent_deriv(const MapModel& model, Complex alpha) {
    const auto n = static_cast<Eigen::Index>(model.size());
    CMatrix D = CMatrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = model.phases[static_cast<std::size_t>(i)];
        Complex d = p.drift + p.sigma * p.sigma * alpha;
        for (const auto& s : p.jumps) {
            if (s.intensity == 0.0) continue;
            check_pole(s.law, alpha);
            d += s.intensity * s.law.transform_deriv(alpha);
        }
        D(i, i) = d;
    }
    for (const auto& [key, law] : model.transition_jumps) {
        const auto i = static_cast<Eigen::Index>(key.first);
        const auto j = static_cast<Eigen::Index>(key.second);
        if (model.Q(i, j) == 0.0) continue;
        check_pole(law, alpha);
        D(i, j) = model.Q(i, j) * law.transform_deriv(alpha);
    }
    return D;
}

Matrix matrix_exponent_deriv(const MapModel& model, double alpha) {
    return matrix_exponent_deriv(model, Complex(alpha, 0.0)).real();
}

double perron_root(const MapModel& model, double alpha) {
    if (!(alpha >= 0.0)) throw DomainError("perron_root requires alpha >= 0");
    const Matrix F = matrix_exponent(model, alpha);
    Eigen::EigenSolver<Matrix> es(F, false);
    if (es.info() != Eigen::Success) throw NumericalError("eigenvalue solver failed in perron_root");
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) best = std::max(best, es.eigenvalues()(k).real());
    return best;
}

Vector stationary_distribution(const Matrix& Q) {
    const auto n = Q.rows();
    Matrix A = Q.transpose();
    A.row(n - 1).setOnes();
    Vector b = Vector::Zero(n);
    b(n - 1) = 1.0;
    return A.fullPivLu().solve(b);
}

double asymptotic_drift(const MapModel& model) {
    if (!model.conservative()) {
        throw DomainError("asymptotic drift is defined only without killing (kill_rate = 0, Q rows summing to 0)");
    }
    const Vector pi = stationary_distribution(model.Q);
    const Matrix D = matrix_exponent_deriv(model, 0.0);
    return pi.dot(D * Vector::Ones(D.cols()));
}

MapModel with_killing(const MapModel& model, double q) {
    if (!(q >= 0.0) || !std::isfinite(q)) throw DomainError("killing rate must be finite and >= 0");
    MapModel out = model;
    out.kill_rate += q;
    return out;
}

std::pair<MapModel, EmbeddingMap> embed_fluid(const MapModel& model) {
    const std::size_t n = model.size();
    EmbeddingMap map;
    for (std::size_t i = 0; i < n; ++i) map.original_indices.push_back(i);

    struct Aux {
        AuxDescriptor desc;
        double entry_rate;
        double exit_rate;
    };
    std::vector<Aux> aux;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = model.phases[i];
        for (std::size_t s = 0; s < p.jumps.size(); ++s) {
            const auto& js = p.jumps[s];
            if (js.intensity == 0.0) continue;
            for (std::size_t m = 0; m < js.law.components.size(); ++m) {
                const auto& c = js.law.components[m];
                aux.push_back({{AuxDescriptor::Source::Stream, i, i, s, m}, js.intensity * c.weight, c.rate});
            }
        }
    }
    for (const auto& [key, law] : model.transition_jumps) {
        const double rate = model.Q(key.first, key.second);
        if (rate == 0.0) continue;
        for (std::size_t m = 0; m < law.components.size(); ++m) {
            const auto& c = law.components[m];
            aux.push_back({{AuxDescriptor::Source::Transition, key.first, key.second, 0, m}, rate * c.weight, c.rate});
        }
    }

    const std::size_t total = n + aux.size();
    MapModel out;
    out.kill_rate = 0.0;
    out.Q = Matrix::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total));
    out.Q.topLeftCorner(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) = model.Q;
    for (std::size_t i = 0; i < n; ++i) {
        Phase p;
        p.drift = model.phases[i].drift;
        p.sigma = model.phases[i].sigma;
        out.phases.push_back(p);
        out.Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) -= model.kill_rate;
    }
    for (const auto& [key, law] : model.transition_jumps) {
        if (model.Q(key.first, key.second) == 0.0) continue;
        // switch now routes through the auxiliary stretches
        out.Q(static_cast<Eigen::Index>(key.first), static_cast<Eigen::Index>(key.second)) = 0.0;
    }
    for (std::size_t k = 0; k < aux.size(); ++k) {
        const auto a = static_cast<Eigen::Index>(n + k);
        const auto from = static_cast<Eigen::Index>(aux[k].desc.from);
        const auto to = static_cast<Eigen::Index>(aux[k].desc.to);
        out.Q(from, a) += aux[k].entry_rate;
        if (aux[k].desc.source == AuxDescriptor::Source::Stream) out.Q(from, from) -= aux[k].entry_rate;
        out.Q(a, to) += aux[k].exit_rate;
        out.Q(a, a) -= aux[k].exit_rate;
        Phase p;
        p.drift = -1.0;
        p.sigma = 0.0;
        p.auxiliary = true;
        out.phases.push_back(p);
        map.aux_indices.push_back(n + k);
        map.aux_descriptors.push_back(aux[k].desc);
    }
    return {std::move(out), std::move(map)};
}

}  // namespace mapexit
