#include "mapexit/verify.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "json.hpp"
#include "mapexit/errors.hpp"
#include "mapexit/exit.hpp"

namespace mapexit {

namespace {

using nlohmann::json;

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

Matrix ones_defect(const Matrix& m, double target) {
    return (m.rowwise().sum().array() - target).matrix();
}

class Suite {
public:
    Suite(const MapModel& model, const VerifyOptions& opt) : model_(model), opt_(opt) {}

    VerifyReport& report() { return report_; }

    // Analytic check: `fn` returns (reference value, max defect).
    void analytic(const std::string& id, std::map<std::string, double> params, double tol,
                  const std::function<std::pair<Matrix, double>()>& fn) {
        CheckRecord rec;
        rec.identity = id;
        rec.params = std::move(params);
        rec.tolerance = tol;
        try {
            auto [value, defect] = fn();
            rec.analytic = std::move(value);
            rec.statistic = defect;
            rec.pass = defect <= tol;
        } catch (const DomainError& e) {
            rec.skipped = true;
            rec.note = e.what();
        } catch (const Error& e) {
            rec.pass = false;
            rec.note = e.what();
        }
        push(std::move(rec));
    }

    void monte_carlo(const std::string& id, std::map<std::string, double> params, const Query& q,
                     const std::function<Matrix()>& fn) {
        CheckRecord rec;
        rec.identity = id;
        rec.params = std::move(params);
        rec.monte_carlo = true;
        rec.tolerance = opt_.threshold;
        try {
            rec.analytic = fn();
            SimConfig cfg;
            cfg.n_paths = opt_.paths;
            cfg.seed = opt_.seed;
            cfg.dt = opt_.dt;
            const SimEstimate est = estimate(model_, q, cfg);
            rec.statistic = max_z_score(rec.analytic, est.mean, est.stderr_, est.n_effective);
            rec.mc = est.mean;
            rec.stderr_ = est.stderr_;
            rec.pass = rec.statistic <= opt_.threshold;
            if (est.censored > 0) rec.note = std::to_string(est.censored) + " censored paths";
        } catch (const DomainError& e) {
            rec.skipped = true;
            rec.note = e.what();
        } catch (const Error& e) {
            rec.pass = false;
            rec.note = e.what();
        }
        push(std::move(rec));
    }

    void skip(const std::string& id, const std::string& why) {
        CheckRecord rec;
        rec.identity = id;
        rec.skipped = true;
        rec.note = why;
        push(std::move(rec));
    }

private:
    void push(CheckRecord rec) {
        if (rec.skipped) {
            ++report_.skipped;
        } else if (rec.pass) {
            ++report_.passed;
        } else {
            ++report_.failed;
        }
        report_.checks.push_back(std::move(rec));
    }

    const MapModel& model_;
    const VerifyOptions& opt_;
    VerifyReport report_;
};

// Smallest alpha on a coarse grid with k(alpha) < 0, if any.
std::optional<double> admissible_alpha(const MapModel& model) {
    for (double a : {0.0, 0.05, 0.1, 0.2, 0.5}) {
        if (perron_root(model, a) < 0.0) return a;
    }
    return std::nullopt;
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

double max_z_score(const Matrix& analytic, const Matrix& mc, const Matrix& se, std::size_t n) {
    const double floor = 1.0 / static_cast<double>(std::max<std::size_t>(n, 1));
    double z = 0.0;
    for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
        for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
            const double s = std::sqrt(se(i, j) * se(i, j) + floor * floor);
            z = std::max(z, std::abs(mc(i, j) - analytic(i, j)) / s);
        }
    }
    return z;
}

VerifyReport run_verify(const MapModel& model, const VerifyOptions& opt) {
    require_valid(model);
    const ScaleEvaluator ev(model);
    const Spectrum& sp = ev.spectrum();
    const bool killed = !sp.conservative;
    const double drift = sp.drift.value_or(0.0);
    Suite s(model, opt);

    s.analytic("scale_transform", {{"alpha", sp.eta + 1.0}}, 1e-8, [&] {
        const double alpha = sp.eta + 1.0;
        const double T = 40.0 / (alpha - sp.eta);
        const Matrix Finv = ev.exponent(alpha).inverse();
        return std::pair{Finv, max_abs(ev.int_exp_W(alpha, T) - Finv)};
    });

    s.analytic("markov_consistency", {{"a1", 0.3}, {"a2", 0.7}, {"b", 0.5}}, 1e-10, [&] {
        const Matrix lhs = two_sided_up(ev, 0.3, 0.5).value * two_sided_up(ev, 0.7, 0.8).value;
        const Matrix rhs = two_sided_up(ev, 1.0, 0.5).value;
        return std::pair{rhs, max_abs(lhs - rhs)};
    });

    if (!sp.recurrent) {
        s.analytic("upward_limit", {{"a", 1.0}, {"b", 50.0}}, 1e-6, [&] {
            const Matrix e = first_passage_up(ev, 1.0).value;
            return std::pair{e, max_abs(two_sided_up(ev, 1.0, 50.0).value - e)};
        });
    } else {
        s.skip("upward_limit", "recurrent model: b -> inf convergence is algebraic");
    }

    s.analytic("excursion_limit", {{"a", 1.0}}, 1e-4, [&] {
        const Matrix G = excursion_generator(ev, 1.0);
        const Matrix Finf = limit_at_infinity([&](double al) { return ev.reflection_exponent(al, 1.0); });
        return std::pair{G, max_abs(Finf - G)};
    });

    s.analytic("down_exit_decomposition", {{"alpha", 0.5}, {"x", 0.4}, {"a", 1.0}}, 1e-9, [&] {
        const Matrix up = two_sided_up(ev, 0.6, 0.4).value;
        const Matrix lhs = up + two_sided_down(ev, 0.5, 0.4, 1.0).value * reflected_up_regulator(ev, 0.5, 0.0, 1.0).value;
        const Matrix rhs = reflected_up_regulator(ev, 0.5, 0.4, 1.0).value;
        return std::pair{rhs, max_abs(lhs - rhs)};
    });

    if (!killed) {
        s.analytic("fstar_generator", {{"alpha", 0.0}, {"a", 1.0}}, 1e-8, [&] {
            const Matrix F0 = ev.reflection_exponent(0.0, 1.0);
            return std::pair{F0, max_abs(ones_defect(F0, 0.0))};
        });
        s.analytic("reflected_down_total_probability", {{"theta", 0.0}, {"alpha", 0.0}, {"x", 0.5}, {"a", 1.0}}, 1e-8, [&] {
            const Matrix v = reflected_down_joint(ev, 0.0, 0.0, 0.5, 1.0).value;
            return std::pair{v, max_abs(ones_defect(v, 1.0))};
        });
        if (drift > 0.0) {
            s.analytic("reflected_up_total_probability", {{"alpha", 0.0}, {"x", 0.5}, {"a", 1.0}}, 1e-8, [&] {
                const Matrix v = reflected_up_regulator(ev, 0.0, 0.5, 1.0).value;
                return std::pair{v, max_abs(ones_defect(v, 1.0))};
            });
        }
    }

    if (!sp.recurrent) {
        if (const auto alpha = admissible_alpha(model)) {
            s.analytic("occupation_transform", {{"alpha", *alpha}}, 1e-8, [&] {
                return std::pair{ev.occupation_limit(), ev.transform_identity_residual(*alpha)};
            });
        }
        s.analytic("occupation_monotone", {}, 1e-10, [&] {
            double worst = 0.0;
            Matrix prev = ev.occupation_matrix(0.0);
            worst = std::max(worst, -prev.minCoeff());
            for (double x : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
                const Matrix cur = ev.occupation_matrix(x);
                worst = std::max(worst, (prev - cur).maxCoeff());
                prev = cur;
            }
            return std::pair{prev, worst};
        });
    } else {
        s.skip("occupation_transform", "recurrent model: the occupation matrix is infinite");
    }

    if (opt.simulate) {
        s.monte_carlo("two_sided_up", {{"a", 1.0}, {"b", 1.0}}, query::TwoSidedUp{1.0, 1.0},
                      [&] { return two_sided_up(ev, 1.0, 1.0).value; });
        s.monte_carlo("reflected_up_regulator", {{"alpha", 1.0}, {"x", 0.0}, {"a", 1.0}},
                      query::ReflectedUpRegulator{1.0, 0.0, 1.0}, [&] { return reflected_up_regulator(ev, 1.0, 0.0, 1.0).value; });
        s.monte_carlo("reflected_down_joint", {{"theta", 1.0}, {"alpha", 1.0}, {"x", 0.0}, {"a", 1.0}},
                      query::ReflectedDownJoint{1.0, 1.0, 0.0, 1.0},
                      [&] { return reflected_down_joint(ev, 1.0, 1.0, 0.0, 1.0).value; });
        s.monte_carlo("two_sided_reflection", {{"alpha", 1.0}, {"a", 1.0}, {"x", -0.5}, {"r", 0.5}},
                      query::TwoSidedReflection{1.0, 1.0, -0.5, 0.5}, [&] {
                          const auto t = two_sided_reflection(ev, 1.0, 1.0, -0.5);
                          return Matrix(t.initial.value * (t.Fstar * 0.5).exp());
                      });
        s.monte_carlo("first_excursion", {{"theta", 0.5}, {"alpha", 1.0}, {"a", 1.0}}, query::FirstExcursion{0.5, 1.0, 1.0},
                      [&] { return first_excursion(ev, 0.5, 1.0, 1.0).value; });
    }
    return s.report();
}

std::string report_json(const VerifyReport& report, const VerifyOptions& opt) {
    json checks = json::array();
    for (const auto& c : report.checks) {
        json j;
        j["identity"] = c.identity;
        j["params"] = c.params;
        j["kind"] = c.monte_carlo ? "monte_carlo" : "analytic";
        j["status"] = c.skipped ? "skipped" : (c.pass ? "pass" : "fail");
        if (!c.skipped) {
            if (c.analytic.size()) j["analytic"] = matrix_json(c.analytic);
            if (c.mc) j["mc"] = matrix_json(*c.mc);
            if (c.stderr_) j["stderr"] = matrix_json(*c.stderr_);
            j[c.monte_carlo ? "max_abs_z" : "max_defect"] = c.statistic;
            j["tolerance"] = c.tolerance;
        }
        if (!c.note.empty()) j["note"] = c.note;
        checks.push_back(j);
    }
    json doc;
    doc["checks"] = checks;
    doc["summary"] = {{"passed", report.passed}, {"failed", report.failed}, {"skipped", report.skipped}};
    doc["settings"] = {{"paths", opt.paths}, {"seed", opt.seed}, {"threshold", opt.threshold}, {"dt", opt.dt}};
    return doc.dump(2) + "\n";
}

std::string report_text(const VerifyReport& report) {
    std::ostringstream out;
    char buf[64];
    for (const auto& c : report.checks) {
        const char* status = c.skipped ? "SKIP" : (c.pass ? "PASS" : "FAIL");
        out << status << "  " << c.identity;
        if (!c.skipped) {
            std::snprintf(buf, sizeof buf, "%.3g", c.statistic);
            out << "  " << (c.monte_carlo ? "max|z|=" : "defect=") << buf;
            std::snprintf(buf, sizeof buf, "%.3g", c.tolerance);
            out << " (limit " << buf << ")";
        }
        if (!c.note.empty()) out << "  [" << c.note << "]";
        out << "\n";
    }
    out << report.passed << " passed, " << report.failed << " failed, " << report.skipped << " skipped\n";
    return out.str();
}

}  // namespace mapexit
