#include "fastmr/market_model.hpp"

#include "support/expect_errc.hpp"

#include <cmath>

using namespace fastmr;

TEST(MarketMap, ConstantSharpe) {
    const auto m = MarketMap::constant(0.08, 0.2);
    EXPECT_NEAR(sharpe(m, -3.0), 0.4, 1e-15);
    EXPECT_TRUE(m.has_constant_sharpe());
}

TEST(MarketMap, AffineEvaluation) {
    const auto m = MarketMap::affine(0.05, 0.1, 0.2, 0.0);
    EXPECT_NEAR(m.mu(0.3), 0.08, 1e-15);
    EXPECT_NEAR(sharpe(m, 0.3), 0.4, 1e-14);
    EXPECT_FALSE(m.has_constant_sharpe());
}

TEST(MarketMap, SigmoidLimits) {
    const auto m = MarketMap::sigmoid(0.02, 0.1, 0.3, 0.15, 0.0, 4.0);
    EXPECT_NEAR(m.mu(50.0), 0.1, 1e-12);
    EXPECT_NEAR(m.sigma(-50.0), 0.3, 1e-12);
    EXPECT_NEAR(m.mu(0.0), 0.06, 1e-15);
}

TEST(MarketMap, TabulatedHitsNodes) {
    const auto m = MarketMap::tabulated({-1, 0, 1}, {0.02, 0.05, 0.09}, {0.3, 0.2, 0.2});
    EXPECT_NEAR(m.mu(0.0), 0.05, 1e-15);
    EXPECT_NEAR(sharpe(m, 1.0), 0.45, 1e-14);
}

TEST(MarketMap, SharpeRejectsNonPositiveSigma) {
    const auto m = MarketMap::affine(0.05, 0.0, 0.0, 1.0);
    EXPECT_ERRC(sharpe(m, -0.5), Errc::NonPositiveVolatility);
}

TEST(FactorModel, OuCoefficients) {
    const auto f = FactorModel::ou(0.3, 0.5, 0.1, -0.2);
    EXPECT_NEAR(f.b(1.0), -0.7, 1e-15);
    EXPECT_NEAR(f.a(7.0), 0.5 * std::sqrt(2.0), 1e-15);
    EXPECT_TRUE(f.is_ou());
    EXPECT_EQ(f.with_epsilon(0.01).epsilon(), 0.01);
}

TEST(FactorModel, RejectsBadParameters) {
    EXPECT_ERRC(FactorModel::ou(0.0, 1.0, 0.0, 0.0), Errc::InvalidArgument);
    EXPECT_ERRC(FactorModel::ou(0.0, 1.0, 0.1, 1.0), Errc::InvalidArgument);
    EXPECT_ERRC(FactorModel::ou(0.0, -1.0, 0.1, 0.0), Errc::InvalidArgument);
}

TEST(YGrid, ForFactorSpansEightSd) {
    const auto f = FactorModel::ou(1.0, 0.5, 0.1, 0.0);
    const auto g = YGrid::for_factor(f);
    EXPECT_EQ(g.size(), 801u);
    EXPECT_NEAR(g.lo(), -3.0, 1e-14);
    EXPECT_NEAR(g.hi(), 5.0, 1e-14);
    double wsum = 0.0;
    for (double w : g.weights()) wsum += w;
    EXPECT_NEAR(wsum, 8.0, 1e-12);
}

TEST(Validation, PassesHealthyModel) {
    const auto f = FactorModel::ou(0.0, 0.4, 0.1, -0.5);
    const auto r = validate_model(MarketMap::affine(0.0, 1.0, 1.0, 0.0), f, YGrid::for_factor(f));
    EXPECT_TRUE(r.passed());
    EXPECT_EQ(r.summary(), "pass");
}

TEST(Validation, ReportsOffendingNodes) {
    const auto f = FactorModel::ou(0.0, 0.4, 0.1, -0.5);
    // sigma = 0.2 + y is nonpositive for y <= -0.2
    const auto r = validate_model(MarketMap::affine(0.05, 0.0, 0.2, 1.0), f, YGrid::for_factor(f));
    ASSERT_FALSE(r.passed());
    for (const auto& v : r.violations) EXPECT_LE(v.y, -0.2 + 1e-12);
    EXPECT_NE(r.summary().find("sigma <= 0"), std::string::npos);
}
