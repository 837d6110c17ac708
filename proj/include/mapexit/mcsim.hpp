#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "mapexit/model.hpp"

namespace mapexit {

struct SimConfig {
    std::size_t n_paths = 20000;  // per starting phase
    double dt = 1e-3;             // floor of the time step
    std::uint64_t seed = 1;
    std::optional<double> horizon;  // default: 40 / kill_rate when killed, else 1000
    bool bridge_correction = true;
    bool antithetic = false;
    unsigned threads = 0;  // 0: MAPEXIT_THREADS, then hardware concurrency
};

namespace query {
struct TwoSidedUp { double a, b; };
struct FirstPassageUp { double a; };
struct ReflectedUpRegulator { double alpha, x, a; };
struct ReflectedDownJoint { double theta, alpha, x, a; };
/// E_x[e^{-alpha R_l(rho_r)}; J(rho_r)] for reflection on [-a, 0].
struct TwoSidedReflection { double alpha, a, x, r; };
/// E_0[e^{-theta zeta - alpha R_l(rho_zeta)}; J(rho_zeta)] for reflection on [-a, 0].
struct FirstExcursion { double theta, alpha, a; };
struct HittingBelow { double x; };
struct OccupationAtZero { double x, eps; };
}  // namespace query

using Query = std::variant<query::TwoSidedUp, query::FirstPassageUp, query::ReflectedUpRegulator,
                           query::ReflectedDownJoint, query::TwoSidedReflection, query::FirstExcursion,
                           query::HittingBelow, query::OccupationAtZero>;

[[nodiscard]] std::string query_name(const Query& q);

struct SimEstimate {
    Matrix mean;
    Matrix stderr_;
    std::size_t n_effective = 0;  // independent samples per starting phase
    std::size_t censored = 0;     // paths stopped by the horizon, all phases
    std::string bias_note;
};

/// One path. For OccupationAtZero `value` is unused and `occupation` holds the
/// band occupation per phase; otherwise `end_phase` is -1 when the functional is 0.
struct PathOutcome {
    int end_phase = -1;
    double value = 0.0;
    Vector occupation;
    double time = 0.0;
    bool censored = false;
    bool killed = false;
};

[[nodiscard]] PathOutcome simulate_path(const MapModel& model, std::size_t start_phase, const Query& query,
                                        const SimConfig& cfg, std::uint64_t path_index);

/// Monte Carlo estimate of the left-hand side of the identity behind `query`,
/// one row per starting phase.
[[nodiscard]] SimEstimate estimate(const MapModel& model, const Query& query, const SimConfig& cfg);

/// Band estimator of the occupation matrix L(x) with half-width eps.
[[nodiscard]] SimEstimate estimate_occupation(const MapModel& model, double x, double eps, const SimConfig& cfg);

/// Worker count used for cfg.threads (resolves 0 through MAPEXIT_THREADS).
[[nodiscard]] unsigned resolve_threads(unsigned requested);

}  // namespace mapexit
