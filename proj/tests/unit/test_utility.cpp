#include "fastmr/utility.hpp"

#include "support/expect_errc.hpp"

#include <cmath>

using namespace fastmr;

TEST(Utility, PowerDerivatives) {
    const auto u = Utility::power(0.5);
    EXPECT_NEAR(u.u(4.0), 4.0, 1e-14);
    EXPECT_NEAR(u.u1(4.0), 0.5, 1e-15);
    EXPECT_NEAR(u.u2(4.0), -0.0625, 1e-15);
    EXPECT_NEAR(u.derivative(3, 4.0), 0.75 / 32.0, 1e-15);
}

TEST(Utility, InverseMarginalRoundTrip) {
    const auto p = Utility::power(0.3);
    const auto m = Utility::mixture({{1.0, 0.3}, {2.0, 0.7}});
    for (double x : {1e-3, 0.1, 1.0, 7.0, 1e3}) {
        EXPECT_NEAR(p.inverse_marginal(p.u1(x)) / x, 1.0, 1e-13);
        EXPECT_NEAR(m.inverse_marginal(m.u1(x)) / x, 1.0, 1e-12);
    }
}

TEST(Utility, RiskToleranceOfPower) {
    const auto u = Utility::power(0.5);
    EXPECT_NEAR(u.terminal_risk_tolerance(3.0), 6.0, 1e-13);
    EXPECT_NEAR(u.risk_tolerance_slope_bound(), 2.0, 1e-15);
}

TEST(Utility, MixtureRiskToleranceBetweenTerms) {
    const auto m = Utility::mixture({{1.0, 0.3}, {1.0, 0.7}});
    for (double x : {0.01, 1.0, 100.0}) {
        const double r = m.terminal_risk_tolerance(x);
        EXPECT_GT(r, x / 0.7);
        EXPECT_LT(r, x / 0.3);
        EXPECT_LE(r, m.risk_tolerance_slope_bound() * x);
    }
}

TEST(Utility, RejectsBadExponents) {
    EXPECT_ERRC(Utility::power(1.0), Errc::InvalidArgument);
    EXPECT_ERRC(Utility::power(0.0), Errc::InvalidArgument);
    EXPECT_ERRC(Utility::mixture({{-1.0, 0.5}}), Errc::InvalidArgument);
    EXPECT_ERRC(Utility::power(0.5).inverse_marginal(0.0), Errc::InvalidArgument);
}

TEST(Utility, FingerprintDistinguishesParameters) {
    EXPECT_EQ(Utility::power(0.5).fingerprint(), Utility::power(0.5).fingerprint());
    EXPECT_NE(Utility::power(0.5).fingerprint(), Utility::power(0.51).fingerprint());
    EXPECT_NE(Utility::power(0.5).fingerprint(), Utility::mixture({{1.0, 0.5}}).fingerprint());
}

TEST(Utility, RiskToleranceTaylorMatchesFiniteDifferences) {
    const auto m = Utility::mixture({{1.0, 0.3}, {0.5, 0.8}});
    const double x = 1.7, h = 1e-3;
    const auto r = m.risk_tolerance_taylor(x, 3);
    auto R = [&](double s) { return m.terminal_risk_tolerance(s); };
    EXPECT_NEAR(r[0], R(x), 1e-13);
    EXPECT_NEAR(r[1], (R(x + h) - R(x - h)) / (2 * h), 1e-6);
    EXPECT_NEAR(2 * r[2], (R(x + h) - 2 * R(x) + R(x - h)) / (h * h), 1e-4);
}

TEST(Utility, InverseMarginalZDerivativesOfPower) {
    // I(e^{-z}) = e^{z/(1-gamma)} for U = x^gamma/gamma
    const double g = 0.4, x = 2.5, c = 1.0 / (1.0 - g);
    const auto d = inverse_marginal_z_derivatives(Utility::power(g), x, 4);
    for (int k = 0; k <= 4; ++k) EXPECT_NEAR(d[k], std::pow(c, k) * x, 1e-12 * std::pow(c, k) * x);
}

TEST(Utility, InverseMarginalZDerivativesOfMixture) {
    const auto m = Utility::mixture({{1.0, 0.3}, {1.0, 0.7}});
    const double z0 = 0.2, h = 1e-3;
    auto X = [&](double z) { return m.inverse_marginal(std::exp(-z)); };
    const auto d = inverse_marginal_z_derivatives(m, X(z0), 2);
    EXPECT_NEAR(d[1], (X(z0 + h) - X(z0 - h)) / (2 * h), 1e-6 * d[1] * 100);
    EXPECT_NEAR(d[2], (X(z0 + h) - 2 * X(z0) + X(z0 - h)) / (h * h), 1e-4 * d[2]);
}
