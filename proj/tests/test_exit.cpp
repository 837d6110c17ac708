#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mapexit/errors.hpp"
#include "mapexit/exit.hpp"
#include "support/random_models.hpp"

using namespace mapexit;
using testsupport::random_model;
using testsupport::scalar;

namespace {

const double kSqrt2 = std::sqrt(2.0);

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

Matrix ones_col(Eigen::Index n) { return Matrix::Ones(n, 1); }

std::vector<MapModel> killed_models(std::uint64_t seed, int count, double kill_min = 0.2) {
    std::mt19937_64 rng(seed);
    std::vector<MapModel> out;
    testsupport::RandomOptions opt;
    opt.kill_min = kill_min;
    opt.kill_max = kill_min + 1.0;
    for (int k = 0; k < count; ++k) {
        opt.jumps = k % 2 == 1;
        opt.bounded_variation = k % 3 == 2;
        out.push_back(random_model(rng, 2 + k % 3, opt));
    }
    return out;
}

}  // namespace

TEST_CASE("two-sided upward exit") {
    const ScaleEvaluator bm(testsupport::driftless_bm());
    CHECK(two_sided_up(bm, 1.0, 1.0).value(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(two_sided_up(bm, 0.0, 2.0).value(0, 0) == 1.0);
    CHECK(two_sided_up(bm, 3.0, 1.0).value(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    const ScaleEvaluator killed(scalar(0.0, kSqrt2, 1.0));
    CHECK(two_sided_up(killed, 1.0, 1.0).value(0, 0) == doctest::Approx(0.3240271368319427).epsilon(1e-12));
    const auto r = two_sided_up(killed, 1.0, 2.0);
    CHECK(r.identity == "two_sided_up");
    CHECK(r.params.at("b") == 2.0);
}

TEST_CASE("strong Markov consistency of upward exits") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> U(0.1, 2.0);
    const auto models = killed_models(5, 5);
    for (int k = 0; k < 50; ++k) {
        const ScaleEvaluator ev(models[static_cast<std::size_t>(k % 5)]);
        const double a1 = U(rng), a2 = U(rng), b = U(rng);
        const Matrix lhs = two_sided_up(ev, a1, b).value * two_sided_up(ev, a2, b + a1).value;
        CHECK(max_abs(lhs - two_sided_up(ev, a1 + a2, b).value) < 1e-10);
    }
}

TEST_CASE("upward exit tends to first passage") {
    const ScaleEvaluator killed(scalar(0.0, kSqrt2, 1.0));
    CHECK(first_passage_up(killed, 1.0).value(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(max_abs(first_passage_up(killed, 0.0).value - Matrix::Identity(1, 1)) == 0.0);
    for (const auto& m : killed_models(6, 6, 0.5)) {
        const ScaleEvaluator ev(m);
        for (double a : {0.5, 1.0, 2.0}) {
            CHECK(max_abs(two_sided_up(ev, a, 50.0).value - first_passage_up(ev, a).value) <= 1e-6);
        }
    }
}

TEST_CASE("reflected upward regulator") {
    const ScaleEvaluator bm(testsupport::driftless_bm());
    for (double alpha : {0.0, 0.5, 1.0, 4.0}) {
        for (double x : {0.0, 0.3, 1.0}) {
            CHECK(reflected_up_regulator(bm, alpha, x, 1.0).value(0, 0) ==
                  doctest::Approx((1 + alpha * x) / (1 + alpha)).epsilon(1e-10));
        }
    }

    std::mt19937_64 rng(7);
    testsupport::RandomOptions opt;
    opt.kill_max = 0.0;
    int checked = 0;
    for (int k = 0; k < 12 && checked < 4; ++k) {
        opt.jumps = k % 2 == 1;
        const MapModel m = random_model(rng, 3, opt);
        if (asymptotic_drift(m) <= 0.05) continue;
        const ScaleEvaluator ev(m);
        for (double x : {0.0, 0.7}) {
            const Matrix P = reflected_up_regulator(ev, 0.0, x, 1.5).value;
            CHECK(max_abs(P * ones_col(3) - ones_col(3)) < 1e-8);
            CHECK(P.minCoeff() >= -1e-12);
        }
        const ScaleEvaluator any(m);
        CHECK(max_abs(reflected_up_regulator(any, 0.8, 1.5, 1.5).value - Matrix::Identity(3, 3)) == 0.0);
        ++checked;
    }
    CHECK(checked == 4);
    CHECK_THROWS_AS((void)reflected_up_regulator(bm, 1.0, 2.0, 1.0), DomainError);
}

TEST_CASE("regulator decomposes at the first downward passage") {
    for (const auto& m : killed_models(17, 6)) {
        const ScaleEvaluator ev(m);
        const double a = 1.3;
        for (double alpha : {0.0, 0.6, 2.0}) {
            for (double x : {0.2, 0.9}) {
                const Matrix lhs = two_sided_up(ev, a - x, x).value +
                                   two_sided_down(ev, alpha, x, a).value * reflected_up_regulator(ev, alpha, 0.0, a).value;
                CHECK(max_abs(lhs - reflected_up_regulator(ev, alpha, x, a).value) < 1e-9);
            }
        }
    }
}

TEST_CASE("two-sided downward exit") {
    const ScaleEvaluator bm(testsupport::driftless_bm());
    for (double x : {0.0, 0.25, 0.5, 1.0}) {
        CHECK(two_sided_down(bm, 0.0, x, 1.0).value(0, 0) == doctest::Approx(1.0 - x).epsilon(1e-10));
    }
    const ScaleEvaluator canon(testsupport::canonical());
    CHECK(max_abs(two_sided_down(canon, 0.7, 0.0, 1.0).value - Matrix::Identity(2, 2)) < 1e-12);
    for (const auto& m : killed_models(23, 6)) {
        const ScaleEvaluator ev(m);
        const auto n = static_cast<Eigen::Index>(ev.size());
        const Matrix P = two_sided_down(ev, 0.0, 0.6, 1.4).value;
        CHECK(P.minCoeff() >= -1e-10);
        CHECK((P * ones_col(n)).maxCoeff() <= 1.0 + 1e-10);
        // together with the upward exit: total mass <= 1
        const Matrix U = two_sided_up(ev, 0.8, 0.6).value;
        CHECK(((P + U) * ones_col(n)).maxCoeff() <= 1.0 + 1e-10);
    }
}

TEST_CASE("first downward passage") {
    SUBCASE("Brownian minimum law at the root alpha = 0") {
        const ScaleEvaluator ev(scalar(1.0, kSqrt2, 0.0));
        for (double x : {0.0, 0.5, 1.0, 3.0}) {
            const double right = first_passage_down(ev, 0.0, x, Side::Right).value(0, 0);
            const double left = first_passage_down(ev, 0.0, x, Side::Left).value(0, 0);
            CHECK(std::abs(right - std::exp(-x)) < 1e-6);
            CHECK(std::abs(right - left) < 1e-6);
        }
    }
    SUBCASE("killed Brownian motion, regular and root points") {
        // no overshoot: the transform is P(tau_0^- < e_q) = e^{-x} for every alpha
        const ScaleEvaluator ev(scalar(0.0, kSqrt2, 1.0));
        for (double alpha : {0.0, 0.5, 1.0, 2.0}) {
            for (double x : {0.5, 2.0}) {
                CHECK(std::abs(first_passage_down(ev, alpha, x).value(0, 0) - std::exp(-x)) < 1e-6);
                CHECK(std::abs(first_passage_down(ev, alpha, x, Side::Left).value(0, 0) - std::exp(-x)) < 1e-6);
            }
        }
        // alpha = 2: assemble Z(2, x) - W(x) L^{-1} (2 + Lambda)^{-1} L F(2) from quadrature
        const double x = 1.2, alpha = 2.0;
        auto f = [alpha](double y) { return std::exp(-alpha * y) * std::sinh(y); };
        const double I = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, x, 15, 1e-14);
        const double Z = std::exp(alpha * x) * (1.0 - I * (alpha * alpha - 1.0));
        const double expect = Z - std::sinh(x) * 2.0 / (alpha - 1.0) * 0.5 * (alpha * alpha - 1.0);
        CHECK(std::abs(first_passage_down(ev, alpha, x).value(0, 0) - expect) < 1e-8);
    }
    SUBCASE("unbounded variation phases start below") {
        const ScaleEvaluator ev(testsupport::canonical());
        CHECK(max_abs(first_passage_down(ev, 0.3, 0.0).value - Matrix::Identity(2, 2)) < 1e-10);
    }
    SUBCASE("both Richardson sides agree at the zero root of a drifting model") {
        std::mt19937_64 rng(44);
        testsupport::RandomOptions opt;
        opt.kill_max = 0.0;
        const MapModel m = random_model(rng, 3, opt);
        const ScaleEvaluator ev(m);
        const Matrix r = first_passage_down(ev, 0.0, 0.8, Side::Right).value;
        const Matrix l = first_passage_down(ev, 0.0, 0.8, Side::Left).value;
        CHECK(max_abs(r - l) < 1e-6);
        // probability: entries in [0, 1] and row sums <= 1
        CHECK(r.minCoeff() >= -1e-6);
        CHECK((r * ones_col(3)).maxCoeff() <= 1.0 + 1e-6);
        if (asymptotic_drift(m) < 0.0) CHECK(max_abs(r * ones_col(3) - ones_col(3)) < 1e-6);
    }
    CHECK_THROWS_AS((void)first_passage_down(ScaleEvaluator(testsupport::driftless_bm()), 0.5, 1.0), RecurrentCase);
}

TEST_CASE("excursion generator") {
    const ScaleEvaluator bm(testsupport::driftless_bm());
    CHECK(excursion_generator(bm, 2.0)(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
    const ScaleEvaluator killed(scalar(0.0, kSqrt2, 1.0));
    CHECK(excursion_generator(killed, 1.0)(0, 0) == doctest::Approx(-1.0 / std::tanh(1.0)).epsilon(1e-12));
    CHECK(excursion_generator(killed, 1.0, Side::Left)(0, 0) == doctest::Approx(-1.0 / std::tanh(1.0)).epsilon(1e-12));
    for (const auto& m : killed_models(29, 6)) {
        const ScaleEvaluator ev(m);
        for (double a : {0.2, 1.0, 4.0}) {
            const Matrix G = excursion_generator(ev, a);
            CHECK(G.rowwise().sum().maxCoeff() <= 1e-9);
        }
    }
    CHECK_THROWS_AS((void)excursion_generator(bm, 0.0), DomainError);
}

TEST_CASE("reflection at the supremum") {
    const ScaleEvaluator bm(testsupport::driftless_bm());
    CHECK(reflected_down_joint(bm, 1.0, 1.0, 0.0, 1.0).value(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
    for (double theta : {0.0, 0.5, 2.0}) {
        for (double alpha : {0.0, 1.0, 3.0}) {
            const double a = 1.5;
            const double expect =
                1 + alpha * a + a / (1 + theta * a) * (a * alpha * alpha - (alpha + theta) * (1 + alpha * a));
            CHECK(reflected_down_joint(bm, theta, alpha, 0.0, a).value(0, 0) == doctest::Approx(expect).epsilon(1e-10));
        }
    }
    const ScaleEvaluator canon(testsupport::canonical());
    CHECK(max_abs(reflected_down_joint(canon, 0.4, 0.9, 1.0, 1.0).value - Matrix::Identity(2, 2)) < 1e-12);

    std::mt19937_64 rng(61);
    testsupport::RandomOptions opt;
    opt.kill_max = 0.0;
    for (int k = 0; k < 6; ++k) {
        opt.jumps = k % 2 == 1;
        const MapModel m = random_model(rng, 3, opt);
        const ScaleEvaluator ev(m);
        for (double x : {0.0, 0.5}) {
            const Matrix P = reflected_down_joint(ev, 0.0, 0.0, x, 1.0).value;
            CHECK(max_abs(P * ones_col(3) - ones_col(3)) < 1e-8);
        }
        // transforms decrease in theta and alpha
        const Matrix A = reflected_down_joint(ev, 0.5, 0.5, 0.2, 1.0).value;
        CHECK(A.minCoeff() >= -1e-10);
        CHECK((A * ones_col(3)).maxCoeff() <= 1.0 + 1e-10);
    }
}

TEST_CASE("two-sided reflection exponent") {
    const ScaleEvaluator bm(testsupport::driftless_bm());
    for (double a : {0.5, 2.0}) {
        for (double alpha : {0.0, 0.7, 5.0}) {
            const auto r = two_sided_reflection(bm, alpha, a, 0.0);
            CHECK(r.Fstar(0, 0) == doctest::Approx(-alpha / (1 + alpha * a)).epsilon(1e-10));
            CHECK(r.initial.value(0, 0) == 1.0);
            const double x = -0.4 * a;
            CHECK(two_sided_reflection(bm, alpha, a, x).initial.value(0, 0) ==
                  doctest::Approx((1 + alpha * (a + x)) / (1 + alpha * a)).epsilon(1e-10));
        }
    }
    CHECK(std::abs(two_sided_reflection(bm, 0.0, 1.0, 0.0).Fstar(0, 0)) < 1e-14);

    std::mt19937_64 rng(81);
    testsupport::RandomOptions opt;
    opt.kill_max = 0.0;
    for (int k = 0; k < 6; ++k) {
        opt.jumps = k % 2 == 1;
        opt.bounded_variation = k % 3 == 2;
        const MapModel m = random_model(rng, 3, opt);
        const ScaleEvaluator ev(m);
        const Matrix F0 = two_sided_reflection(ev, 0.0, 1.2, 0.0).Fstar;
        CHECK(max_abs(F0 * ones_col(3)) < 1e-8);
        for (Eigen::Index i = 0; i < 3; ++i)
            for (Eigen::Index j = 0; j < 3; ++j)
                if (i != j) CHECK(F0(i, j) >= -1e-10);
        const MatrixFunction Fs = [&ev](double al) { return ev.reflection_exponent(al, 1.2); };
        CHECK(max_abs(limit_at_infinity(Fs) - excursion_generator(ev, 1.2)) < 1e-4);
        // initial transform: probability at alpha = 0
        const Matrix init = two_sided_reflection(ev, 0.0, 1.2, -0.5).initial.value;
        CHECK(max_abs(init * ones_col(3) - ones_col(3)) < 1e-8);
    }
}

TEST_CASE("first jump of a Markov-modulated compound Poisson process") {
    for (double a : {0.5, 1.0, 3.0}) {
        const MatrixFunction Fs = [a](double al) { return Matrix::Constant(1, 1, -al / (1 + al * a)); };
        CHECK(limit_at_infinity(Fs)(0, 0) == doctest::Approx(-1.0 / a).epsilon(1e-10));
        for (double alpha : {0.0, 0.5, 2.0}) {
            CHECK(std::abs(mmcpp_first_jump(Fs, 0.0, alpha)(0, 0) - 1.0 / (1 + alpha * a)) < 1e-12);
        }
    }
    // conservative input, alpha = q = 0: stochastic
    Matrix Q(2, 2);
    Q << -1.0, 1.0, 2.0, -2.0;
    const MatrixFunction F = [Q](double al) {
        Matrix out = Q;
        out(0, 0) += -3.0 * al / (al + 2.0);
        out(1, 1) += -0.5 * al / (al + 1.0);
        return out;
    };
    CHECK(max_abs(mmcpp_first_jump(F, 0.0, 0.0) * ones_col(2) - ones_col(2)) < 1e-6);
    const MatrixFunction bad = [](double al) { return Matrix::Constant(1, 1, std::sqrt(al)); };
    CHECK_THROWS_AS((void)limit_at_infinity(bad), NumericalError);
}

TEST_CASE("first excursion transform") {
    const ScaleEvaluator bm(testsupport::driftless_bm());
    CHECK(first_excursion(bm, 0.0, 1.0, 1.0).value(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(first_excursion(bm, 0.0, 0.0, 2.0).value(0, 0) == doctest::Approx(1.0).epsilon(1e-10));

    std::mt19937_64 rng(91);
    testsupport::RandomOptions opt;
    opt.kill_max = 0.0;
    const MapModel m = random_model(rng, 3, opt);
    const ScaleEvaluator ev(m);
    const Matrix P = first_excursion(ev, 0.0, 0.0, 1.0).value;
    CHECK(max_abs(P * ones_col(3) - ones_col(3)) < 1e-6);
    CHECK(P.minCoeff() >= -1e-8);
}

TEST_CASE("single-phase models reduce to scalar closed forms") {
    // F = alpha^2 / 2 * s^2 + mu alpha - q, W(x) = (e^{r+ x} - e^{r- x}) / (s^2/2 (r+ - r-))
    const double mu = 0.4, s = 1.3, q = 0.6;
    const double c = 0.5 * s * s;
    const double disc = std::sqrt(mu * mu + 4 * c * q);
    const double rp = (-mu + disc) / (2 * c), rm = (-mu - disc) / (2 * c);
    auto W = [&](double x) { return (std::exp(rp * x) - std::exp(rm * x)) / (c * (rp - rm)); };
    auto Wd = [&](double x) { return (rp * std::exp(rp * x) - rm * std::exp(rm * x)) / (c * (rp - rm)); };
    const ScaleEvaluator ev(scalar(mu, s, q));
    for (double x : {0.1, 1.0, 4.0}) CHECK(std::abs(ev.scale_W(x)(0, 0) - W(x)) < 1e-10 * std::max(1.0, W(x)));
    CHECK(std::abs(two_sided_up(ev, 0.7, 1.1).value(0, 0) - W(1.1) / W(1.8)) < 1e-10);
    CHECK(std::abs(first_passage_up(ev, 1.5).value(0, 0) - std::exp(-rp * 1.5)) < 1e-10);
    CHECK(std::abs(excursion_generator(ev, 0.9)(0, 0) + Wd(0.9) / W(0.9)) < 1e-10);
    CHECK(std::abs(ev.occupation_limit()(0, 0) - 1.0 / (c * (rp - rm))) < 1e-10);
    CHECK(std::abs(ev.hitting_below(0.8)(0, 0) - std::exp(rm * 0.8)) < 1e-10);
}
