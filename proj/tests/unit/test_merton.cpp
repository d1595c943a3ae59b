#include "fastmr/merton.hpp"

#include "support/expect_errc.hpp"

#include <cmath>
#include <filesystem>

using namespace fastmr;

namespace {

// Independent power-utility value: x^g/g exp(g lambda^2 tau / (2 (1-g))).
double power_value(double g, double lam, double tau, double x) {
    return std::pow(x, g) / g * std::exp(g * lam * lam * tau / (2.0 * (1.0 - g)));
}

HeatMertonSolution heat_solution(const Utility& u, double lam, std::size_t n_z = 1601, std::size_t n_t = 400) {
    HeatGridSpec g;
    g.n_z = n_z;
    g.n_t = n_t;
    return build_merton(std::make_shared<HeatSurface>(solve_heat(u, lam, g)), u);
}

const Utility kMix = Utility::mixture({{1.0, 0.3}, {1.0, 0.7}});

}  // namespace

TEST(Heat, PowerValueMatchesClosedForm) {
    for (double g : {0.3, 0.5, 0.7}) {
        for (double lam : {0.2, 0.4}) {
            const auto sol = heat_solution(Utility::power(g), lam);
            for (double x : {0.2, 1.0, 5.0, 20.0}) {
                const double ref = power_value(g, lam, 1.0, x);
                EXPECT_NEAR(sol.value(0.0, x) / ref, 1.0, 1e-5) << g << " " << lam << " " << x;
                EXPECT_NEAR(sol.risk_tolerance(0.0, x), x / (1 - g), 1e-6 * x);
            }
        }
    }
}

TEST(Heat, ClosedFormClassAgreesWithFormula) {
    const auto cf = closed_form_power(0.4, 0.3, 2.0);
    EXPECT_NEAR(cf.value(0.5, 3.0), power_value(0.4, 0.3, 1.5, 3.0), 1e-13);
    EXPECT_NEAR(cf.risk_tolerance(0.5, 3.0), 5.0, 1e-13);
}

TEST(Heat, TerminalValueIsUtility) {
    const auto sol = heat_solution(kMix, 0.4);
    for (double x : {0.01, 1.0, 100.0}) EXPECT_NEAR(sol.value(1.0, x), kMix.u(x), 1e-12 * kMix.u(x));
}

TEST(Heat, ConvolutionMatchesPde) {
    const auto sol = heat_solution(kMix, 0.4);
    const auto& h = sol.heat();
    const std::size_t j = h.n_z() / 2;
    const auto ref = heat_by_convolution(kMix, 0.4, 1.0, h.z()[j]);
    for (int k = 0; k < HeatSurface::kOrders; ++k) {
        EXPECT_NEAR(h.d(k, 0, j) / ref[k], 1.0, 5e-5) << k;
    }
}

TEST(Heat, ShapeOfMixtureValue) {
    const auto sol = heat_solution(kMix, 0.4);
    const double K = kMix.risk_tolerance_slope_bound();
    for (std::size_t n = 0; n < sol.n_t(); n += 50) {
        for (std::size_t j = 1; j + 1 < sol.n_z(); j += 20) {
            EXPECT_GT(sol.node_value(n, j + 1), sol.node_value(n, j));
            EXPECT_GT(sol.node_marginal(n, j), sol.node_marginal(n, j + 1));
            EXPECT_GT(sol.node_risk_tolerance(n, j + 1), sol.node_risk_tolerance(n, j));
            EXPECT_LE(sol.node_risk_tolerance(n, j), K * sol.node_x(n, j) * (1 + 1e-9));
        }
    }
    // More time to invest is worth more.
    EXPECT_GT(sol.value(0.0, 1.0), sol.value(0.5, 1.0));
}

TEST(Heat, D1EqualsMinusD2OnValue) {
    const auto sol = heat_solution(kMix, 0.4);
    const auto m = sol.value_surface();
    const auto d1 = apply_Dk(sol, 1, m);
    const auto d2 = apply_Dk(sol, 2, m);
    double worst = 0.0;
    for (std::size_t n = 0; n < sol.n_t(); n += 40) {
        for (std::size_t j = 50; j + 50 < sol.n_z(); j += 10) {
            worst = std::max(worst, std::abs(d1.at(n, j) + d2.at(n, j)) / std::abs(d1.at(n, j)));
        }
    }
    EXPECT_LT(worst, 1e-3);
}

TEST(Heat, D1PowersOfPowerValue) {
    // D_1^k v = (g/(1-g))^k v for power utility.
    const double g = 0.5;
    const auto sol = heat_solution(Utility::power(g), 0.4);
    for (int k = 0; k <= 4; ++k) {
        const double ref = std::pow(g / (1 - g), k) * power_value(g, 0.4, 1.0, 2.0);
        EXPECT_NEAR(sol.d1_power(k, 0.0, 2.0) / ref, 1.0, 1e-5) << k;
    }
}

TEST(Heat, RiskToleranceDerivativesBounded) {
    const auto sol = heat_solution(kMix, 0.4);
    for (double x : {0.01, 0.3, 1.0, 10.0, 300.0}) {
        EXPECT_LE(std::abs(sol.risk_tolerance_dx(0.0, x)), 10.0);
        EXPECT_LE(std::abs(sol.risk_tolerance_rxx(0.0, x)), 10.0);
    }
}

TEST(Heat, ResidualConvergesAtSecondOrder) {
    const double coarse = heat_solution(kMix, 0.4, 401, 100).pde_residual(0.2, 20.0);
    const double fine = heat_solution(kMix, 0.4, 801, 200).pde_residual(0.2, 20.0);
    EXPECT_GE(std::log2(coarse / fine), 1.7) << coarse << " " << fine;
}

TEST(Heat, CommutatorIdentityForMixture) {
    // With L2 = d_t + lam^2/2 D2 + lam^2 D1 and D2 = d_zz - r d_z, r = R_x = H_zz/H_z,
    //   [L2, D2] w = -(L2 r) w_z - lam^2 r_z w_zz
    // must equal -lam^2 R^2 R_xx (R w_xx + w_x) = -lam^2 r_z (w_zz - r w_z + w_z).
    const double lam = 0.4, l2 = lam * lam;
    const auto sol = heat_solution(kMix, lam);
    const auto& h = sol.heat();
    auto r = [&](std::size_t n, std::size_t j) { return h.d(2, n, j) / h.d(1, n, j); };
    auto rz = [&](std::size_t n, std::size_t j) { return h.d(3, n, j) / h.d(1, n, j) - r(n, j) * r(n, j); };
    auto rzz = [&](std::size_t n, std::size_t j) {
        const double h1 = h.d(1, n, j);
        return h.d(4, n, j) / h1 - h.d(3, n, j) * h.d(2, n, j) / (h1 * h1) - 2 * r(n, j) * rz(n, j);
    };
    double worst = 0.0;
    for (std::size_t n = 20; n + 20 < sol.n_t(); n += 60) {
        for (std::size_t j = 200; j + 200 < sol.n_z(); j += 100) {
            const double z = h.z()[j];
            const double wz = std::cos(z), wzz = -std::sin(z);
            const double rt = (r(n + 1, j) - r(n - 1, j)) / (2 * h.dt());
            const double L2r = rt + 0.5 * l2 * rzz(n, j) + l2 * rz(n, j);
            const double lhs = -L2r * wz - l2 * rz(n, j) * wzz;
            const double rhs = -l2 * rz(n, j) * (wzz - r(n, j) * wz + wz);
            worst = std::max(worst, std::abs(lhs - rhs) / (l2 * std::abs(rz(n, j)) + 1e-3));
        }
    }
    EXPECT_LT(worst, 1e-3);
}

TEST(Heat, RangeAndGridErrors) {
    const auto sol = heat_solution(Utility::power(0.5), 0.4, 401, 100);
    EXPECT_ERRC(sol.value(0.0, 1e-9), Errc::OutOfRange);
    EXPECT_ERRC(sol.value(1.5, 1.0), Errc::OutOfRange);
    HeatGridSpec g;
    g.z_min = 0.0;
    g.z_max = 1.0;
    EXPECT_ERRC(solve_heat(Utility::power(0.5), 0.4, g), Errc::BoundaryTooNarrow);
}

TEST(Hjb, DirectSolveAgreesWithHeat) {
    const auto heat = heat_solution(kMix, 0.4);
    HjbGridSpec g;
    g.n_x = 601;
    g.n_t = 400;
    const auto hjb = solve_hjb_direct(kMix, 0.4, g);
    for (double x : {0.2, 1.0, 5.0, 20.0}) {
        EXPECT_NEAR(hjb.value(0.0, x) / heat.value(0.0, x), 1.0, 1e-4) << x;
        EXPECT_NEAR(hjb.risk_tolerance(0.0, x) / heat.risk_tolerance(0.0, x), 1.0, 1e-2) << x;
    }
}

TEST(Hjb, PowerAgreesWithClosedForm) {
    HjbGridSpec g;
    g.n_x = 601;
    g.n_t = 400;
    const auto hjb = solve_hjb_direct(Utility::power(0.5), 0.4, g);
    EXPECT_NEAR(hjb.value(0.0, 1.0) / power_value(0.5, 0.4, 1.0, 1.0), 1.0, 1e-4);
}

TEST(RiskToleranceTable, TracksSolution) {
    const auto sol = heat_solution(kMix, 0.4);
    const RiskToleranceTable tab(sol, 1e-3, 1e3, 1201);
    for (double t : {0.0, 0.37, 0.9}) {
        for (double x : {0.01, 0.5, 3.0, 200.0}) {
            EXPECT_NEAR(tab(t, x) / sol.risk_tolerance(t, x), 1.0, 1e-5);
        }
    }
    // Beyond the table R/x is frozen.
    EXPECT_NEAR(tab(0.0, 1e4) / 1e4, tab(0.0, 1e3) / 1e3, 1e-12);
}

TEST(Cache, RoundTripIsBitwise) {
    const auto dir = std::filesystem::temp_directory_path() / "fastmr-cache-test";
    std::filesystem::remove_all(dir);
    const MertonCache cache(dir);
    HeatGridSpec g;
    g.n_z = 201;
    g.n_t = 50;
    const auto u = Utility::power(0.5);
    EXPECT_EQ(cache.load(u, 0.4, g), nullptr);
    const auto a = cache.get(u, 0.4, g);
    const auto b = cache.load(u, 0.4, g);
    ASSERT_NE(b, nullptr);
    for (int k = 0; k < HeatSurface::kOrders; ++k) {
        for (std::size_t n = 0; n < a->n_t(); ++n) {
            for (std::size_t j = 0; j < a->n_z(); ++j) ASSERT_EQ(a->d(k, n, j), b->d(k, n, j));
        }
    }
    std::filesystem::remove_all(dir);
}
