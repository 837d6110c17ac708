#include "mapexit/mcsim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <thread>

#include "mapexit/errors.hpp"
#include "mapexit/rng.hpp"

namespace mapexit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kBlock = 256;

enum class Edge { None, Absorb, Reflect };

struct Barrier {
    Edge kind = Edge::None;
    double level = 0.0;
    bool target = true;  // absorption here scores the functional; otherwise it scores 0
};

enum class Functional { Indicator, RegulatorLow, DownJoint, RegulatorUpStop, Excursion, Occupation };

struct Plan {
    double z0 = 0.0;
    Barrier upper, lower;
    Functional functional = Functional::Indicator;
    double alpha = 0.0, theta = 0.0, r = 0.0, eps = 0.0;
};

struct Event {
    enum class Type { Switch, Kill, Jump } type;
    std::size_t target = 0;
    const JumpLaw* law = nullptr;
};

struct PhaseTable {
    double drift = 0.0, sigma = 0.0, total_rate = 0.0;
    std::vector<double> cum;
    std::vector<Event> events;
};

struct Engine {
    const MapModel* model;
    std::vector<PhaseTable> phases;
    double horizon;
    SimConfig cfg;
};

Engine build_engine(const MapModel& m, const SimConfig& cfg) {
    Engine e{&m, {}, 0.0, cfg};
    const auto n = m.size();
    for (std::size_t i = 0; i < n; ++i) {
        PhaseTable t;
        t.drift = m.phases[i].drift;
        t.sigma = m.phases[i].sigma;
        auto add = [&t](double rate, Event ev) {
            if (rate <= 0.0) return;
            t.total_rate += rate;
            t.cum.push_back(t.total_rate);
            t.events.push_back(ev);
        };
        const auto ii = static_cast<Eigen::Index>(i);
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double qij = m.Q(ii, static_cast<Eigen::Index>(j));
            row += qij;
            if (j == i) continue;
            const auto it = m.transition_jumps.find({i, j});
            add(qij, {Event::Type::Switch, j, it == m.transition_jumps.end() ? nullptr : &it->second});
        }
        add(-row + m.kill_rate, {Event::Type::Kill, 0, nullptr});
        for (const auto& js : m.phases[i].jumps) add(js.intensity, {Event::Type::Jump, i, &js.law});
        e.phases.push_back(std::move(t));
    }
    e.horizon = cfg.horizon ? *cfg.horizon : (m.kill_rate > 0.0 ? 40.0 / m.kill_rate : 1000.0);
    return e;
}

double sample_jump(const JumpLaw& law, PathRng& rng) {
    double u = rng.uniform(), acc = 0.0;
    const JumpComponent* pick = &law.components.back();
    for (const auto& c : law.components) {
        acc += c.weight;
        if (u < acc) {
            pick = &c;
            break;
        }
    }
    return rng.exponential() / pick->rate;
}

bool positive(double v) { return std::isfinite(v) && v > 0.0; }
bool nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

void require(bool ok, const std::string& msg) {
    if (!ok) throw DomainError(msg);
}

Plan make_plan(const Query& q) {
    Plan p;
    std::visit(
        [&p](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, query::TwoSidedUp>) {
                require(nonneg(v.a) && nonneg(v.b) && v.a + v.b > 0.0, "TwoSidedUp: need a, b >= 0 and a + b > 0");
                p.upper = {Edge::Absorb, v.a};
                p.lower = {Edge::Absorb, -v.b, false};
            } else if constexpr (std::is_same_v<T, query::FirstPassageUp>) {
                require(nonneg(v.a), "FirstPassageUp: need a >= 0");
                p.upper = {Edge::Absorb, v.a};
            } else if constexpr (std::is_same_v<T, query::ReflectedUpRegulator>) {
                require(nonneg(v.alpha) && positive(v.a) && v.x >= 0.0 && v.x <= v.a,
                        "ReflectedUpRegulator: need alpha >= 0, a > 0, 0 <= x <= a");
                p.z0 = v.x;
                p.lower = {Edge::Reflect, 0.0};
                p.upper = {Edge::Absorb, v.a};
                p.functional = Functional::RegulatorLow;
                p.alpha = v.alpha;
            } else if constexpr (std::is_same_v<T, query::ReflectedDownJoint>) {
                require(nonneg(v.theta) && nonneg(v.alpha) && positive(v.a) && v.x >= 0.0 && v.x <= v.a,
                        "ReflectedDownJoint: need theta, alpha >= 0, a > 0, 0 <= x <= a");
                // Work with H = -Y_hat: reflected at 0 from above, stopped below -a.
                p.z0 = -v.x;
                p.upper = {Edge::Reflect, 0.0};
                p.lower = {Edge::Absorb, -v.a};
                p.functional = Functional::DownJoint;
                p.alpha = v.alpha;
                p.theta = v.theta;
            } else if constexpr (std::is_same_v<T, query::TwoSidedReflection>) {
                require(nonneg(v.alpha) && positive(v.a) && v.x >= -v.a && v.x <= 0.0 && nonneg(v.r),
                        "TwoSidedReflection: need alpha >= 0, a > 0, -a <= x <= 0, r >= 0");
                p.z0 = v.x;
                p.upper = {Edge::Reflect, 0.0};
                p.lower = {Edge::Reflect, -v.a};
                p.functional = Functional::RegulatorUpStop;
                p.alpha = v.alpha;
                p.r = v.r;
            } else if constexpr (std::is_same_v<T, query::FirstExcursion>) {
                require(nonneg(v.theta) && nonneg(v.alpha) && positive(v.a),
                        "FirstExcursion: need theta, alpha >= 0, a > 0");
                p.upper = {Edge::Reflect, 0.0};
                p.lower = {Edge::Reflect, -v.a};
                p.functional = Functional::Excursion;
                p.alpha = v.alpha;
                p.theta = v.theta;
            } else if constexpr (std::is_same_v<T, query::HittingBelow>) {
                require(positive(v.x), "HittingBelow: need x > 0");
                p.lower = {Edge::Absorb, -v.x};
            } else if constexpr (std::is_same_v<T, query::OccupationAtZero>) {
                require(positive(v.x) && positive(v.eps), "OccupationAtZero: need x > 0 and eps > 0");
                p.upper = {Edge::Absorb, v.x};
                p.functional = Functional::Occupation;
                p.eps = v.eps;
            }
        },
        q);
    return p;
}

// Time a linear segment z0 -> z0 + slope*h spends in (-eps, eps).
double linear_band_time(double z0, double slope, double h, double eps) {
    if (slope == 0.0) return std::abs(z0) < eps ? h : 0.0;
    double t0 = (-eps - z0) / slope, t1 = (eps - z0) / slope;
    if (t0 > t1) std::swap(t0, t1);
    return std::max(0.0, std::min(h, t1) - std::max(0.0, t0));
}

class Walker {
public:
    Walker(const Engine& e, const Plan& p, std::size_t phase, PathRng& rng, bool negate)
        : e_(e), p_(p), rng_(rng), negate_(negate), phase_(phase), z_(p.z0) {
        if (p_.functional == Functional::Occupation) out_.occupation = Vector::Zero(static_cast<Eigen::Index>(e.phases.size()));
    }

    PathOutcome run() {
        const double dt = e_.cfg.dt;
        while (true) {
            const PhaseTable& tab = e_.phases[phase_];
            const double te = tab.total_rate > 0.0 ? rng_.exponential() / tab.total_rate : kInf;
            double remaining = std::min(te, e_.horizon - t_);
            const bool censor_now = te >= e_.horizon - t_;
            while (remaining > 0.0) {
                double h = step_size(tab, dt);
                if (h >= remaining) h = remaining;
                double N = rng_.normal();
                if (negate_) N = -N;
                const double z1 = z_ + tab.drift * h + tab.sigma * std::sqrt(h) * N;
                if (p_.functional == Functional::Occupation) accumulate_band(tab, z1, h);
                t_ += h;
                remaining -= h;
                if (move(tab, z1, h)) return finish();
            }
            if (censor_now) {
                out_.censored = true;
                out_.end_phase = -1;
                return finish();
            }
            if (apply_event(tab)) return finish();
        }
    }

private:
    double step_size(const PhaseTable& tab, double dt) const {
        if (tab.sigma == 0.0) return kInf;  // linear motion, extremes are the endpoints
        if (!e_.cfg.bridge_correction || p_.functional == Functional::Occupation) return dt;
        const double du = p_.upper.kind == Edge::None ? kInf : p_.upper.level - z_;
        const double dl = p_.lower.kind == Edge::None ? kInf : z_ - p_.lower.level;
        const double far = std::max(du, dl);
        if (!std::isfinite(far)) return kInf;
        const double s = far / (6.0 * tab.sigma);
        return std::max(dt, s * s);
    }

    void accumulate_band(const PhaseTable& tab, double z1, double h) {
        double time;
        if (tab.sigma == 0.0) {
            time = linear_band_time(z_, tab.drift, h, p_.eps);
        } else {
            time = 0.5 * h * ((std::abs(z_) < p_.eps ? 1.0 : 0.0) + (std::abs(z1) < p_.eps ? 1.0 : 0.0));
        }
        out_.occupation(static_cast<Eigen::Index>(phase_)) += time;
    }

    // Continuous move z_ -> z1 over h; true when the path stops.
    bool move(const PhaseTable& tab, double z1, double h) {
        double M = std::max(z_, z1), m = std::min(z_, z1);
        if (tab.sigma > 0.0 && e_.cfg.bridge_correction) {
            // Exact extreme of the Brownian bridge from z_ to z1, on the side of the nearer barrier.
            const double du = p_.upper.kind == Edge::None ? kInf : p_.upper.level - z_;
            const double dl = p_.lower.kind == Edge::None ? kInf : z_ - p_.lower.level;
            const double d = z1 - z_;
            const double D = std::sqrt(d * d - 2.0 * tab.sigma * tab.sigma * h * std::log(rng_.uniform()));
            if (du <= dl) {
                M = 0.5 * (z_ + z1 + D);
            } else {
                m = 0.5 * (z_ + z1 - D);
            }
        }
        if (p_.upper.kind != Edge::None && M >= p_.upper.level) {
            if (p_.upper.kind == Edge::Absorb) {
                if (tab.sigma == 0.0) rewind_to(p_.upper.level, z1, h);
                z_ = p_.upper.level;
                return stop(p_.upper.target);
            }
            const double inc = M - p_.upper.level;
            if (p_.functional == Functional::RegulatorUpStop && Ru_ + inc > p_.r) return stop();
            if (p_.functional == Functional::Excursion && touched_lower_) return stop();
            Ru_ += inc;
            z1 -= inc;
        }
        if (p_.lower.kind != Edge::None && m <= p_.lower.level) {
            if (p_.lower.kind == Edge::Absorb) {
                if (tab.sigma == 0.0) rewind_to(p_.lower.level, z1, h);
                z_ = p_.lower.level;
                return stop(p_.lower.target);
            }
            const double inc = p_.lower.level - m;
            Rl_ += inc;
            z1 += inc;
            touched_lower_ = true;
        }
        if (p_.upper.kind == Edge::Reflect) z1 = std::min(z1, p_.upper.level);
        if (p_.lower.kind == Edge::Reflect) z1 = std::max(z1, p_.lower.level);
        z_ = z1;
        return false;
    }

    // Linear motion z_ -> z1 over h reaches level before the step ends.
    void rewind_to(double level, double z1, double h) {
        if (z1 != z_) t_ -= h * (z1 - level) / (z1 - z_);
    }

    bool apply_jump(double size) {
        z_ -= size;
        if (p_.lower.kind != Edge::None && z_ < p_.lower.level) {
            if (p_.lower.kind == Edge::Absorb) return stop(p_.lower.target);
            Rl_ += p_.lower.level - z_;
            z_ = p_.lower.level;
            touched_lower_ = true;
        }
        return false;
    }

    bool apply_event(const PhaseTable& tab) {
        const double u = rng_.uniform() * tab.total_rate;
        const auto k = static_cast<std::size_t>(std::upper_bound(tab.cum.begin(), tab.cum.end(), u) - tab.cum.begin());
        const Event& ev = tab.events[std::min(k, tab.events.size() - 1)];
        switch (ev.type) {
            case Event::Type::Kill:
                out_.killed = true;
                out_.end_phase = -1;
                return true;
            case Event::Type::Switch:
                phase_ = ev.target;
                return ev.law ? apply_jump(sample_jump(*ev.law, rng_)) : false;
            case Event::Type::Jump:
                return apply_jump(sample_jump(*ev.law, rng_));
        }
        return false;
    }

    bool stop(bool scores = true) {
        if (!scores) {
            out_.end_phase = -1;
            return true;
        }
        out_.end_phase = static_cast<int>(phase_);
        switch (p_.functional) {
            case Functional::Indicator: out_.value = 1.0; break;
            case Functional::RegulatorLow: out_.value = std::exp(-p_.alpha * Rl_); break;
            case Functional::DownJoint:
                out_.value = std::exp(-p_.theta * Ru_ - p_.alpha * std::max(0.0, p_.lower.level - z_));
                break;
            case Functional::RegulatorUpStop: out_.value = std::exp(-p_.alpha * Rl_); break;
            case Functional::Excursion: out_.value = std::exp(-p_.theta * Ru_ - p_.alpha * Rl_); break;
            case Functional::Occupation: out_.value = 0.0; break;
        }
        return true;
    }

    PathOutcome finish() {
        out_.time = t_;
        return out_;
    }

    const Engine& e_;
    const Plan& p_;
    PathRng& rng_;
    bool negate_;
    std::size_t phase_;
    double z_;
    double t_ = 0.0, Ru_ = 0.0, Rl_ = 0.0;
    bool touched_lower_ = false;
    PathOutcome out_;
};

PathOutcome run_path(const Engine& e, const Plan& p, std::size_t start, std::uint64_t stream, bool negate) {
    PathRng rng(e.cfg.seed, stream);
    Walker w(e, p, start, rng, negate);
    return w.run();
}

void check_config(const MapModel& model, const SimConfig& cfg) {
    require_valid(model);
    require(cfg.n_paths >= 1, "simulation needs n_paths >= 1");
    require(positive(cfg.dt), "simulation needs dt > 0");
    require(!cfg.horizon || positive(*cfg.horizon), "simulation needs horizon > 0");
}

void check_query(const MapModel& model, const Query& q) {
    const bool needs_jump_free = std::holds_alternative<query::HittingBelow>(q) || std::holds_alternative<query::OccupationAtZero>(q);
    if (needs_jump_free && model.has_jumps()) {
        throw DomainError(query_name(q) + " is only simulated for jump-free models (hitting and passage differ with jumps)");
    }
    if (std::holds_alternative<query::OccupationAtZero>(q) && model.conservative() &&
        std::abs(asymptotic_drift(model)) < 1e-9) {
        throw RecurrentCase("occupation estimate: the occupation matrix L is infinite");
    }
}

// Running mean and sum of squared deviations, merged with Chan's formula.
struct Acc {
    double n = 0.0;
    Vector mean, m2;
    std::size_t censored = 0;

    explicit Acc(Eigen::Index k = 0) : mean(Vector::Zero(k)), m2(Vector::Zero(k)) {}

    void add(const Vector& y) {
        n += 1.0;
        const Vector delta = y - mean;
        mean += delta / n;
        m2 += delta.cwiseProduct(y - mean);
    }

    void merge(const Acc& o) {
        if (o.n == 0.0) return;
        const double tot = n + o.n;
        const Vector delta = o.mean - mean;
        mean += delta * (o.n / tot);
        m2 += o.m2 + delta.cwiseProduct(delta) * (n * o.n / tot);
        n = tot;
        censored += o.censored;
    }
};

Vector sample_vector(const PathOutcome& o, Eigen::Index n, bool occupation, double eps) {
    if (occupation) return o.occupation / (2.0 * eps);
    Vector y = Vector::Zero(n);
    if (o.end_phase >= 0) y(o.end_phase) = o.value;
    return y;
}

SimEstimate run_estimate(const MapModel& model, const Plan& plan, const SimConfig& cfg, const std::string& note) {
    const Engine eng = build_engine(model, cfg);
    const auto n = static_cast<Eigen::Index>(model.size());
    const bool occupation = plan.functional == Functional::Occupation;
    // With antithetic pairing a sample is the mean of a path and its mirror.
    const std::size_t samples = cfg.antithetic ? (cfg.n_paths + 1) / 2 : cfg.n_paths;
    const std::size_t blocks = (samples + kBlock - 1) / kBlock;
    const std::size_t tasks = blocks * static_cast<std::size_t>(n);
    std::vector<Acc> results(tasks, Acc(n));

    auto work = [&](std::size_t task) {
        const std::size_t start = task / blocks;
        const std::size_t block = task % blocks;
        Acc acc(n);
        const std::size_t lo = block * kBlock, hi = std::min(samples, lo + kBlock);
        for (std::size_t s = lo; s < hi; ++s) {
            const std::uint64_t stream = static_cast<std::uint64_t>(start) * samples + s;
            const PathOutcome a = run_path(eng, plan, start, stream, false);
            Vector y = sample_vector(a, n, occupation, plan.eps);
            acc.censored += a.censored;
            if (cfg.antithetic) {
                const PathOutcome b = run_path(eng, plan, start, stream, true);
                y = 0.5 * (y + sample_vector(b, n, occupation, plan.eps));
                acc.censored += b.censored;
            }
            acc.add(y);
        }
        results[task] = std::move(acc);
    };

    const unsigned workers = std::min<unsigned>(resolve_threads(cfg.threads), static_cast<unsigned>(std::max<std::size_t>(tasks, 1)));
    if (workers <= 1) {
        for (std::size_t t = 0; t < tasks; ++t) work(t);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t t = next++; t < tasks; t = next++) work(t);
            });
        }
        for (auto& th : pool) th.join();
    }

    SimEstimate est;
    est.mean = Matrix::Zero(n, n);
    est.stderr_ = Matrix::Zero(n, n);
    est.n_effective = samples;
    for (Eigen::Index i = 0; i < n; ++i) {
        Acc total(n);
        for (std::size_t b = 0; b < blocks; ++b) total.merge(results[static_cast<std::size_t>(i) * blocks + b]);
        est.mean.row(i) = total.mean.transpose();
        if (total.n > 1.0) est.stderr_.row(i) = (total.m2 / (total.n - 1.0) / total.n).cwiseSqrt().transpose();
        est.censored += total.censored;
    }
    est.bias_note = note;
    return est;
}

std::string bias_note(const SimConfig& cfg) {
    std::ostringstream s;
    if (cfg.bridge_correction) {
        s << "exact Brownian-bridge extremes within steps (floor step " << cfg.dt
          << "); residual bias from the farther barrier is below e^-18 per step";
    } else {
        s << "barrier checks at grid points only (step " << cfg.dt << "); crossing bias O(sqrt(dt))";
    }
    s << "; censored paths count as 0";
    return s.str();
}

}  // namespace

std::string query_name(const Query& q) {
    static const char* names[] = {"TwoSidedUp", "FirstPassageUp", "ReflectedUpRegulator", "ReflectedDownJoint",
                                  "TwoSidedReflection", "FirstExcursion", "HittingBelow", "OccupationAtZero"};
    return names[q.index()];
}

unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("MAPEXIT_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

PathOutcome simulate_path(const MapModel& model, std::size_t start_phase, const Query& query, const SimConfig& cfg,
                          std::uint64_t path_index) {
    check_config(model, cfg);
    check_query(model, query);
    require(start_phase < model.size(), "simulate_path: start phase out of range");
    const Plan plan = make_plan(query);
    const Engine eng = build_engine(model, cfg);
    return run_path(eng, plan, start_phase, path_index, false);
}

SimEstimate estimate(const MapModel& model, const Query& query, const SimConfig& cfg) {
    check_config(model, cfg);
    check_query(model, query);
    const Plan plan = make_plan(query);
    if (const auto* q = std::get_if<query::TwoSidedUp>(&query); q && q->a == 0.0) {
        const auto n = static_cast<Eigen::Index>(model.size());
        SimEstimate est{Matrix::Identity(n, n), Matrix::Zero(n, n), cfg.n_paths, 0, "exact: tau_0^+ = 0"};
        return est;
    }
    return run_estimate(model, plan, cfg, bias_note(cfg));
}

SimEstimate estimate_occupation(const MapModel& model, double x, double eps, const SimConfig& cfg) {
    const Query q = query::OccupationAtZero{x, eps};
    check_config(model, cfg);
    check_query(model, q);
    std::ostringstream note;
    note << "band estimator with half-width " << eps << " on a step-" << cfg.dt << " grid: bias O(eps) + O(dt)";
    return run_estimate(model, make_plan(q), cfg, note.str());
}

}  // namespace mapexit
