#include "mapexit/cli.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mapexit/errors.hpp"
#include "mapexit/exit.hpp"
#include "mapexit/mcsim.hpp"
#include "mapexit/model_io.hpp"
#include "mapexit/verify.hpp"

namespace mapexit {

namespace {

using nlohmann::json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    auto num = [&text](const std::string& s) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::logic_error&) {
            throw UsageError("cannot parse grid '" + text + "'");
        }
    };
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(text);
        for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
        if (parts.size() != 3) throw UsageError("grid range must look like start:stop:count");
        const double lo = num(parts[0]), hi = num(parts[1]);
        const double count = num(parts[2]);
        if (count < 1 || count != std::floor(count)) throw UsageError("grid count must be a positive integer");
        const auto k = static_cast<int>(count);
        for (int i = 0; i < k; ++i) out.push_back(k == 1 ? lo : lo + (hi - lo) * i / (k - 1));
        return out;
    }
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(num(p));
    if (out.empty()) throw UsageError("empty grid");
    return out;
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

void write_csv(std::ostream& out, const Matrix& m, const std::string& prefix = "", const Matrix* se = nullptr) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out << prefix << i << ',' << j << ',' << fmt(m(i, j));
            if (se) out << ',' << fmt((*se)(i, j));
            out << '\n';
        }
    }
}

struct Options {
    std::string model_path;
    std::optional<double> kill;
    std::string format = "csv";
    std::string identity;
    std::optional<double> a, b, x, alpha, theta, r, eps;
    std::string side = "right";
    std::string grid;
    std::string kind = "W";
    std::size_t paths = 20000;
    double dt = 1e-3;
    std::uint64_t seed = 1;
    bool no_bridge = false;
    bool antithetic = false;
    unsigned threads = 0;
    double threshold = 4.0;
    std::string report_path;
    bool no_mc = false;
};

MapModel load(const Options& o) {
    MapModel m = load_model(o.model_path);
    require_valid(m);
    if (o.kill) m = with_killing(m, *o.kill);
    return m;
}

double need(const std::optional<double>& v, const char* flag, const std::string& identity) {
    if (!v) throw UsageError(identity + " needs --" + flag);
    return *v;
}

int cmd_validate(const Options& o, std::ostream& out) {
    const MapModel m = load_model(o.model_path);
    const auto violations = validate(m);
    if (!violations.empty()) {
        std::ostringstream msg;
        for (std::size_t k = 0; k < violations.size(); ++k) {
            msg << (k ? "; " : "") << violations[k].field << ": " << violations[k].rule;
        }
        throw ValidationError(msg.str());
    }
    out << "valid: " << m.size() << " phases, " << (m.has_jumps() ? "with" : "no") << " jumps, "
        << (m.conservative() ? "no killing" : "killed") << '\n';
    return 0;
}

int cmd_spectrum(const Options& o, std::ostream& out) {
    const Spectrum sp = solve_spectrum(load(o));
    if (o.format == "json") {
        json roots = json::array();
        for (const auto& r : sp.roots) {
            roots.push_back({{"re", r.rho.real()}, {"im", r.rho.imag()}, {"multiplicity", r.multiplicity}, {"in_lambda", r.in_lambda}});
        }
        json doc = {{"roots", roots}, {"eta", sp.eta}, {"conservative", sp.conservative}, {"recurrent", sp.recurrent}};
        if (sp.drift) doc["drift"] = *sp.drift;
        out << doc.dump(2) << '\n';
        return 0;
    }
    out << "index,re,im,multiplicity,in_lambda\n";
    for (std::size_t k = 0; k < sp.roots.size(); ++k) {
        const auto& r = sp.roots[k];
        out << k << ',' << fmt(r.rho.real()) << ',' << fmt(r.rho.imag()) << ',' << r.multiplicity << ','
            << (r.in_lambda ? 1 : 0) << '\n';
    }
    return 0;
}

void emit_matrix(const Options& o, std::ostream& out, const Matrix& m) {
    if (o.format == "json") {
        out << json{{"value", matrix_json(m)}}.dump(2) << '\n';
    } else {
        out << "row_phase,col_phase,value\n";
        write_csv(out, m);
    }
}

int cmd_lambda(const Options& o, std::ostream& out) {
    emit_matrix(o, out, solve_spectrum(load(o)).Lambda);
    return 0;
}

int emit_grid(const Options& o, std::ostream& out, const std::vector<double>& xs, const std::function<Matrix(double)>& f) {
    if (o.format == "json") {
        json arr = json::array();
        for (double x : xs) arr.push_back({{"x", x}, {"value", matrix_json(f(x))}});
        out << arr.dump(2) << '\n';
        return 0;
    }
    out << "x,row_phase,col_phase,value\n";
    for (double x : xs) write_csv(out, f(x), fmt(x) + ",");
    return 0;
}

int cmd_scale(const Options& o, std::ostream& out) {
    const ScaleEvaluator ev(load(o));
    const auto xs = parse_grid(o.grid);
    std::function<Matrix(double)> f;
    if (o.kind == "W") {
        f = [&](double x) { return ev.scale_W(x); };
    } else if (o.kind == "Wprime") {
        f = [&](double x) { return ev.scale_W_deriv(x); };
    } else if (o.kind == "L") {
        f = [&](double x) { return ev.occupation_matrix(x); };
    } else if (o.kind == "hitting") {
        f = [&](double x) { return ev.hitting_below(x); };
    } else {
        throw UsageError("unknown --kind '" + o.kind + "' (W, Wprime, L, hitting)");
    }
    return emit_grid(o, out, xs, f);
}

int cmd_zmatrix(const Options& o, std::ostream& out) {
    const ScaleEvaluator ev(load(o));
    const double alpha = need(o.alpha, "alpha", "zmatrix");
    if (!(alpha >= 0.0)) throw DomainError("zmatrix: alpha must be >= 0");
    return emit_grid(o, out, parse_grid(o.grid), [&](double x) { return ev.z_matrix(alpha, x); });
}

Side parse_side(const std::string& s) {
    if (s == "right") return Side::Right;
    if (s == "left") return Side::Left;
    throw UsageError("--side must be right or left");
}

int cmd_exit(const Options& o, std::ostream& out) {
    const ScaleEvaluator ev(load(o));
    const std::string& id = o.identity;
    if (id == "two-sided-reflection") {
        const auto t = two_sided_reflection(ev, need(o.alpha, "alpha", id), need(o.a, "a", id), need(o.x, "x", id));
        if (o.format == "json") {
            out << json{{"Fstar", matrix_json(t.Fstar)}, {"initial", matrix_json(t.initial.value)}}.dump(2) << '\n';
        } else {
            out << "matrix,row_phase,col_phase,value\n";
            write_csv(out, t.Fstar, "Fstar,");
            write_csv(out, t.initial.value, "initial,");
        }
        return 0;
    }
    Matrix value;
    if (id == "two-sided-up") {
        value = two_sided_up(ev, need(o.a, "a", id), need(o.b, "b", id)).value;
    } else if (id == "first-up") {
        value = first_passage_up(ev, need(o.a, "a", id)).value;
    } else if (id == "reflected-up") {
        value = reflected_up_regulator(ev, need(o.alpha, "alpha", id), need(o.x, "x", id), need(o.a, "a", id)).value;
    } else if (id == "two-sided-down") {
        value = two_sided_down(ev, need(o.alpha, "alpha", id), need(o.x, "x", id), need(o.a, "a", id)).value;
    } else if (id == "first-down") {
        value = first_passage_down(ev, need(o.alpha, "alpha", id), need(o.x, "x", id), parse_side(o.side)).value;
    } else if (id == "reflected-down") {
        value = reflected_down_joint(ev, need(o.theta, "theta", id), need(o.alpha, "alpha", id), need(o.x, "x", id),
                                     need(o.a, "a", id))
                    .value;
    } else if (id == "excursion") {
        value = excursion_generator(ev, need(o.a, "a", id), parse_side(o.side));
    } else if (id == "first-excursion") {
        value = first_excursion(ev, need(o.theta, "theta", id), need(o.alpha, "alpha", id), need(o.a, "a", id)).value;
    } else {
        throw UsageError("unknown identity '" + id + "'");
    }
    emit_matrix(o, out, value);
    return 0;
}

int cmd_simulate(const Options& o, std::ostream& out) {
    const MapModel m = load(o);
    const std::string& id = o.identity;
    SimConfig cfg;
    cfg.n_paths = o.paths;
    cfg.dt = o.dt;
    cfg.seed = o.seed;
    cfg.bridge_correction = !o.no_bridge;
    cfg.antithetic = o.antithetic;
    cfg.threads = o.threads;
    SimEstimate est;
    if (id == "occupation") {
        est = estimate_occupation(m, need(o.x, "x", id), need(o.eps, "eps", id), cfg);
    } else {
        Query q;
        if (id == "two-sided-up") {
            q = query::TwoSidedUp{need(o.a, "a", id), need(o.b, "b", id)};
        } else if (id == "first-up") {
            q = query::FirstPassageUp{need(o.a, "a", id)};
        } else if (id == "reflected-up") {
            q = query::ReflectedUpRegulator{need(o.alpha, "alpha", id), need(o.x, "x", id), need(o.a, "a", id)};
        } else if (id == "reflected-down") {
            q = query::ReflectedDownJoint{need(o.theta, "theta", id), need(o.alpha, "alpha", id), need(o.x, "x", id),
                                          need(o.a, "a", id)};
        } else if (id == "two-sided-reflection") {
            q = query::TwoSidedReflection{need(o.alpha, "alpha", id), need(o.a, "a", id), need(o.x, "x", id), o.r.value_or(0.0)};
        } else if (id == "first-excursion") {
            q = query::FirstExcursion{need(o.theta, "theta", id), need(o.alpha, "alpha", id), need(o.a, "a", id)};
        } else if (id == "hitting-below") {
            q = query::HittingBelow{need(o.x, "x", id)};
        } else {
            throw UsageError("identity '" + id + "' has no simulator");
        }
        est = estimate(m, q, cfg);
    }
    if (o.format == "csv") {
        out << "row_phase,col_phase,value,stderr\n";
        write_csv(out, est.mean, "", &est.stderr_);
    } else {
        json doc = {{"mean", matrix_json(est.mean)},     {"stderr", matrix_json(est.stderr_)},
                    {"n_paths", o.paths},                {"n_effective", est.n_effective},
                    {"censored", est.censored},          {"seed", o.seed},
                    {"dt", o.dt},                        {"bias_note", est.bias_note}};
        out << doc.dump(2) << '\n';
    }
    return 0;
}

int cmd_verify(const Options& o, std::ostream& out) {
    const MapModel m = load(o);
    VerifyOptions vo;
    vo.paths = o.paths;
    vo.seed = o.seed;
    vo.threshold = o.threshold;
    vo.dt = o.dt;
    vo.simulate = !o.no_mc;
    const VerifyReport rep = run_verify(m, vo);
    const std::string js = report_json(rep, vo);
    if (!o.report_path.empty()) {
        std::ofstream f(o.report_path);
        if (!f) throw UsageError("cannot write report '" + o.report_path + "'");
        f << js;
    }
    if (o.format == "json") {
        out << js;
    } else {
        out << report_text(rep);
    }
    if (!rep.ok()) throw NumericalError(std::to_string(rep.failed) + " verification check(s) failed");
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Scale matrices and exit identities for spectrally negative Markov additive processes", "mapexit"};
    app.require_subcommand(1);
    Options o;

    auto model_arg = [&o](CLI::App* sub) {
        sub->add_option("model", o.model_path, "model JSON file")->required();
        sub->add_option("--kill", o.kill, "extra uniform killing rate")->check(CLI::NonNegativeNumber);
        sub->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    };
    auto identity_flags = [&o](CLI::App* sub) {
        sub->add_option("identity", o.identity, "identity name")->required();
        sub->add_option("--a", o.a);
        sub->add_option("--b", o.b);
        sub->add_option("--x", o.x);
        sub->add_option("--alpha", o.alpha);
        sub->add_option("--theta", o.theta);
        sub->add_option("--r", o.r);
        sub->add_option("--side", o.side, "right or left (one-sided limits)");
    };

    auto* validate_cmd = app.add_subcommand("validate", "check a model file");
    validate_cmd->add_option("model", o.model_path)->required();
    auto* spectrum_cmd = app.add_subcommand("spectrum", "roots of det F");
    model_arg(spectrum_cmd);
    auto* lambda_cmd = app.add_subcommand("lambda", "first-passage generator");
    model_arg(lambda_cmd);
    auto* scale_cmd = app.add_subcommand("scale", "W(x) (or W', L(x), hitting matrix) on a grid");
    model_arg(scale_cmd);
    scale_cmd->add_option("--x", o.grid, "comma list or start:stop:count")->required();
    scale_cmd->add_option("--kind", o.kind, "W, Wprime, L or hitting");
    auto* z_cmd = app.add_subcommand("zmatrix", "Z(alpha, x) on a grid");
    model_arg(z_cmd);
    z_cmd->add_option("--alpha", o.alpha)->required();
    z_cmd->add_option("--x", o.grid)->required();
    auto* exit_cmd = app.add_subcommand("exit", "evaluate an exit identity");
    model_arg(exit_cmd);
    identity_flags(exit_cmd);
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo estimate of an exit identity");
    model_arg(sim_cmd);
    identity_flags(sim_cmd);
    sim_cmd->add_option("--eps", o.eps, "band half-width (occupation)");
    sim_cmd->add_option("--paths", o.paths)->check(CLI::PositiveNumber);
    sim_cmd->add_option("--dt", o.dt)->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", o.seed);
    sim_cmd->add_flag("--no-bridge", o.no_bridge, "grid-only barrier checks");
    sim_cmd->add_flag("--antithetic", o.antithetic);
    sim_cmd->add_option("--threads", o.threads, "worker count, 0 = MAPEXIT_THREADS or all cores");
    auto* verify_cmd = app.add_subcommand("verify", "analytic invariants and Monte Carlo cross-checks");
    model_arg(verify_cmd);
    verify_cmd->add_option("--paths", o.paths)->check(CLI::PositiveNumber);
    verify_cmd->add_option("--seed", o.seed);
    verify_cmd->add_option("--threshold", o.threshold)->check(CLI::PositiveNumber);
    verify_cmd->add_option("--dt", o.dt)->check(CLI::PositiveNumber);
    verify_cmd->add_option("--report", o.report_path, "write the JSON report here");
    verify_cmd->add_flag("--no-mc", o.no_mc, "analytic checks only");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }
    // Simulation output defaults to JSON unless csv was asked for explicitly.
    if (sim_cmd->parsed() && sim_cmd->count("--format") == 0) o.format = "json";

    try {
        if (validate_cmd->parsed()) return cmd_validate(o, out);
        if (spectrum_cmd->parsed()) return cmd_spectrum(o, out);
        if (lambda_cmd->parsed()) return cmd_lambda(o, out);
        if (scale_cmd->parsed()) return cmd_scale(o, out);
        if (z_cmd->parsed()) return cmd_zmatrix(o, out);
        if (exit_cmd->parsed()) return cmd_exit(o, out);
        if (sim_cmd->parsed()) return cmd_simulate(o, out);
        if (verify_cmd->parsed()) return cmd_verify(o, out);
    } catch (const ValidationError& e) {
        err << "invalid model: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const UsageError& e) {
        err << "usage: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace mapexit
