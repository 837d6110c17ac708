#pragma once

#include <functional>
#include <map>
#include <string>

#include "mapexit/scale.hpp"

namespace mapexit {

/// A matrix-valued exit identity; rows are the starting phase, columns the
/// phase at the stopping time.
struct ExitResult {
    std::string identity;
    std::map<std::string, double> params;
    Matrix value;
};

enum class Side { Right, Left };

/// P[tau_a^+ < tau_b^-, J(tau_a^+)] = W(b) W(a+b)^{-1}.
[[nodiscard]] ExitResult two_sided_up(const ScaleEvaluator& ev, double a, double b);

/// P[J(tau_a^+)] = e^{Lambda a}.
[[nodiscard]] ExitResult first_passage_up(const ScaleEvaluator& ev, double a);

/// E_x[e^{-alpha R(T_a)}; J(T_a)] = Z(alpha, x) Z(alpha, a)^{-1} for the process
/// reflected at its infimum 0, T_a the first passage over a.
[[nodiscard]] ExitResult reflected_up_regulator(const ScaleEvaluator& ev, double alpha, double x, double a);

/// E_x[e^{alpha X(tau_0^-)}; tau_0^- < tau_a^+, J(tau_0^-)] = Z(alpha,x) - W(x) W(a)^{-1} Z(alpha,a).
[[nodiscard]] ExitResult two_sided_down(const ScaleEvaluator& ev, double alpha, double x, double a);

/// E_x[e^{alpha X(tau_0^-)}; J(tau_0^-)] = Z(alpha,x) - W(x) L^{-1} (alpha I + Lambda)^{-1} L F(alpha).
/// At a root of det F the value is the limit alpha -> root, approached from
/// the given side by two-point Richardson extrapolation.
[[nodiscard]] ExitResult first_passage_down(const ScaleEvaluator& ev, double alpha, double x, Side side = Side::Right);

/// Lambda_{[0,a]} = -W'(a) W(a)^{-1}, checked to be a sub-generator.
[[nodiscard]] Matrix excursion_generator(const ScaleEvaluator& ev, double a, Side side = Side::Right);

/// E_x[e^{-theta R(T_a) - alpha (Y(T_a) - a)}; J(T_a)] for the process reflected at
/// its supremum a, started at x in [0, a]:
/// Z(alpha, a-x) + W(a-x) [W'(a) + theta W(a)]^{-1} [W(a) F(alpha) - (alpha+theta) Z(alpha, a)].
[[nodiscard]] ExitResult reflected_down_joint(const ScaleEvaluator& ev, double theta, double alpha, double x, double a);

struct TwoSidedReflection {
    Matrix Fstar;         // exponent of (R_l(rho_r), J(rho_r))
    ExitResult initial;   // E_x[e^{-alpha R_l(rho_0)}; J(rho_0)] = Z(alpha, a+x) Z(alpha, a)^{-1}
};

/// Reflection on [-a, 0] started at x in [-a, 0].
[[nodiscard]] TwoSidedReflection two_sided_reflection(const ScaleEvaluator& ev, double alpha, double a, double x);

using MatrixFunction = std::function<Matrix(double)>;

/// E[e^{-qT - alpha X(T)}; J(T)] = I - (F(inf) - qI)^{-1} (F(alpha) - qI) for a
/// Markov-modulated compound Poisson process with exponent F (in e^{-alpha X}
/// orientation), T the first jump epoch.
[[nodiscard]] Matrix mmcpp_first_jump(const MatrixFunction& F, double q, double alpha);

/// F(inf) by Richardson extrapolation at alpha = 1e8, checked against alpha = 1e7
/// (relative change <= 1e-4).
[[nodiscard]] Matrix limit_at_infinity(const MatrixFunction& F);

/// E_0[e^{-theta zeta - alpha R_l(rho_zeta)}; J(rho_zeta)] for reflection on
/// [-a, 0]: the first-jump transform of the regulator MAP with exponent F*.
[[nodiscard]] ExitResult first_excursion(const ScaleEvaluator& ev, double theta, double alpha, double a);

}  // namespace mapexit
