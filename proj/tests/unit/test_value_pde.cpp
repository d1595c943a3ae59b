#include "fastmr/value_pde.hpp"

#include "oracles/riccati_oracle.hpp"
#include "support/expect_errc.hpp"

#include <cmath>

using namespace fastmr;

namespace {

const MarketMap kAffine = MarketMap::affine(0.0, 1.0, 1.0, 0.0);
const Utility kPow = Utility::power(0.5);

FactorModel factor(double eps) { return FactorModel::ou(0.0, 0.4, eps, -0.5); }

Grid3DSpec coarse() {
    Grid3DSpec g;
    g.z_spacing = 0.025;
    g.steps_per_epsilon = 50;
    g.min_steps = 50;
    return g;
}

double power_value(double g, double lam, double tau, double x) {
    return std::pow(x, g) / g * std::exp(g * lam * lam * tau / (2.0 * (1.0 - g)));
}

}  // namespace

TEST(ValuePde, ConstantSharpeGivesMerton) {
    const auto map = MarketMap::constant(0.08, 0.2);
    const auto b = build_expansion(map, factor(0.2), kPow);
    const auto v = solve_pi0_value(map, factor(0.2), b, coarse(), 0.2);
    for (double x : {0.2, 1.0, 20.0}) {
        for (double y : {-1.0, 0.0, 1.5}) {
            EXPECT_NEAR(v.value(0.0, x, y) / power_value(0.5, 0.4, 1.0, x), 1.0, 1e-4) << x << " " << y;
        }
    }
}

TEST(ValuePde, TerminalSliceIsUtility) {
    const auto b = build_expansion(kAffine, factor(0.2), kPow);
    const auto v = solve_pi0_value(kAffine, factor(0.2), b, coarse(), 0.2);
    const auto& last = v.slice_at(1.0);
    for (std::size_t i = 0; i < v.n_z(); i += 7) EXPECT_EQ(last.values[i * v.n_y() + 3], kPow.u(v.x_at(last, i)));
    EXPECT_NEAR(v.value(1.0, 4.0, 0.3) / kPow.u(4.0), 1.0, 1e-6);
}

TEST(ValuePde, Pi0MatchesRiccati) {
    const double eps = 0.2;
    const auto b = build_expansion(kAffine, factor(eps), kPow);
    const auto v = solve_pi0_value(kAffine, factor(eps), b, coarse(), eps);
    oracle::AffinePowerCase c;
    c.eps = eps;
    c = oracle::with_leading_strategy(c);
    for (double y : {-0.4, 0.0, 0.5}) {
        const double ref = oracle::riccati_value(c, 0.0, 1.0, y);
        EXPECT_NEAR(v.value(0.0, 1.0, y) / ref, 1.0, 1e-4) << y;
    }
}

TEST(ValuePde, GeneralStrategyMatchesRiccati) {
    const double eps = 0.2;
    const auto b = build_expansion(kAffine, factor(eps), kPow);
    const auto pi0 = Strategy::pi0(b, kAffine);
    const auto half = Strategy::custom([pi0](double t, double x, double y) { return 0.5 * pi0.base(t, x, y); }, "half");
    const auto v = solve_strategy_value(kAffine, factor(eps), b, half, coarse());
    oracle::AffinePowerCase c;
    c.eps = eps;
    c = oracle::with_leading_strategy(c, 0.5);
    EXPECT_NEAR(v.value(0.0, 1.0, 0.0) / oracle::riccati_value(c, 0.0, 1.0, 0.0), 1.0, 2e-4);
}

TEST(ValuePde, IncreasingInWealth) {
    const auto b = build_expansion(kAffine, factor(0.2), kPow);
    const auto v = solve_pi0_value(kAffine, factor(0.2), b, coarse(), 0.2);
    const auto& s = v.slice_at(0.0);
    for (std::size_t j = 0; j < v.n_y(); j += 10) {
        for (std::size_t i = 1; i < v.n_z(); ++i) {
            EXPECT_GT(s.values[i * v.n_y() + j], s.values[(i - 1) * v.n_y() + j]);
        }
    }
}

TEST(ValuePde, GapShrinksLikeEpsilon) {
    std::vector<ResidualPoint> pts;
    for (double eps : {0.4, 0.2, 0.1}) {
        const auto b = build_expansion(kAffine, factor(eps), kPow);
        const auto v = solve_pi0_value(kAffine, factor(eps), b, coarse(), eps);
        const double e = v.value(0.0, 1.0, 0.0) - first_order_value(b, 0.0, 1.0);
        pts.push_back({eps, std::abs(e), 0.0});
    }
    const auto fit = convergence_slope(pts);
    EXPECT_GT(fit.slope, 0.8);
    EXPECT_LT(fit.slope, 1.2);
}

TEST(ValuePde, ExplicitMixedTermNeedsStrongTheta) {
    const auto b = build_expansion(kAffine, factor(0.2), kPow);
    auto g = coarse();
    g.theta = 0.5;
    g.steps_per_epsilon = 1;
    g.min_steps = 1;
    EXPECT_ERRC(solve_pi0_value(kAffine, factor(0.2), b, g, 0.2), Errc::CFLViolation);
}

TEST(Averaged, Pi0ReproducesMerton) {
    const auto b = build_expansion(kAffine, factor(0.1), kPow);
    AveragedGridSpec g;
    g.epsilon = 0.1;
    const auto s = solve_averaged_v0(Strategy::pi0(b, kAffine), kAffine, *b.density, kPow, g);
    for (double x : {0.2, 1.0, 20.0}) EXPECT_NEAR(s.value(0.0, x) / v0(b, 0.0, x), 1.0, 1e-5);
}

TEST(Averaged, ZeroStrategyKeepsUtility) {
    const auto b = build_expansion(kAffine, factor(0.1), kPow);
    AveragedGridSpec g;
    g.epsilon = 0.1;
    const auto s = solve_averaged_v0(Strategy::zero(), kAffine, *b.density, kPow, g);
    for (std::size_t i = 0; i < s.s().size(); i += 50) {
        EXPECT_NEAR(s.at(0, i), kPow.u(std::exp(s.s()[i])), 1e-13 * kPow.u(std::exp(s.s()[i])));
    }
    for (double x : {0.2, 1.0, 20.0}) EXPECT_NEAR(s.value(0.0, x) / kPow.u(x), 1.0, 1e-6);
}

TEST(Averaged, HalfPi0HasReducedRate) {
    // pi = k(y) x with k = lambda/(2 sigma (1-g)): v = x^g/g exp(g tau (<k mu> + (g-1)/2 <k^2 sigma^2>)).
    const auto b = build_expansion(kAffine, factor(0.1), kPow);
    const auto pi0 = Strategy::pi0(b, kAffine);
    const auto half = Strategy::custom([pi0](double t, double x, double y) { return 0.5 * pi0.base(t, x, y); }, "half");
    AveragedGridSpec g;
    g.epsilon = 0.1;
    const auto s = solve_averaged_v0(half, kAffine, *b.density, kPow, g);
    const double l2 = 0.16, km = 0.5 * l2 / 0.5, k2 = 0.25 * l2 / 0.25;
    for (double x : {0.2, 1.0, 20.0}) {
        const double ref = 2.0 * std::sqrt(x) * std::exp(0.5 * (km - 0.25 * k2));
        EXPECT_NEAR(s.value(0.0, x) / ref, 1.0, 1e-5);
        EXPECT_LT(s.value(0.0, x), v0(b, 0.0, x));
    }
}

TEST(Loss, ProportionalCorrectionOfPowerUtility) {
    // pi1 = delta x: w = -1/2 sigma^2 delta^2 g (1-g) (T-t) v0.
    const auto b = build_expansion(kAffine, factor(0.1), kPow);
    const double delta = 0.5;
    const auto w = solve_loss_2alpha([delta](double, double x, double) { return delta * x; }, kAffine, b);
    for (double t : {0.0, 0.5}) {
        for (double x : {0.2, 1.0, 20.0}) {
            const double ref = -0.5 * delta * delta * 0.25 * (1.0 - t) * v0(b, t, x);
            EXPECT_NEAR(w.value(t, x) / ref, 1.0, 1e-3) << t << " " << x;
        }
    }
    EXPECT_EQ(w.value(1.0, 1.0), 0.0);
    const auto alt =
        solve_loss_2alpha([delta](double, double x, double) { return delta * x; }, kAffine, b, LossDrift::LambdaBar);
    EXPECT_LT(alt.value(0.0, 1.0), w.value(0.0, 1.0));
}

TEST(Loss, ZeroCorrectionHasNoLoss) {
    const auto b = build_expansion(kAffine, factor(0.1), kPow);
    const auto w = solve_loss_2alpha([](double, double, double) { return 0.0; }, kAffine, b);
    EXPECT_EQ(w.value(0.0, 1.0), 0.0);
}

TEST(Loss, LargerCorrectionLosesMore) {
    const auto b = build_expansion(kAffine, factor(0.1), kPow);
    const auto a = solve_loss_2alpha([](double, double x, double y) { return 0.3 * x * (1 + y * y); }, kAffine, b);
    const auto c = solve_loss_2alpha([](double, double x, double y) { return 0.6 * x * (1 + y * y); }, kAffine, b);
    for (double x : {0.2, 1.0, 20.0}) {
        EXPECT_LT(a.value(0.0, x), 0.0);
        EXPECT_LT(c.value(0.0, x), a.value(0.0, x));
    }
}
