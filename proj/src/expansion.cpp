#include "fastmr/expansion.hpp"

#include "fastmr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fastmr {

ExpansionBundle build_expansion(const MarketMap& map, const FactorModel& factor, const Utility& utility,
                                const ExpansionOptions& options) {
    const YGrid grid = YGrid::for_factor(factor, options.y_sd, options.y_nodes);
    const ValidationReport report = validate_model(map, factor, grid);
    if (!report.passed()) throw NumericError(Errc::NonPositiveVolatility, report.summary());

    ExpansionBundle b;
    b.epsilon = factor.epsilon();
    b.rho = factor.rho();
    b.density = std::make_shared<const InvariantDensity>(invariant_density(factor, grid));
    if (map.has_constant_sharpe()) {
        // lambda^2 is already centered: theta, theta1 and B vanish identically.
        b.lambda_bar = std::abs(sharpe(map, factor.center()));
        b.theta.theta.assign(grid.size(), 0.0);
        b.theta.theta_prime.assign(grid.size(), 0.0);
        b.theta.source_mean = b.lambda_bar * b.lambda_bar;
        b.theta1 = b.theta;
        b.theta1.source_mean = 0.0;
        b.B = 0.0;
    } else {
        b.lambda_bar = lambda_bar(map, *b.density);
        b.theta = solve_poisson([&map](double y) { return std::pow(sharpe(map, y), 2); }, factor, *b.density);
        b.B = compute_B(map, factor, b.theta, *b.density);
        b.theta1 = solve_theta1(map, factor, b.theta, *b.density);
    }
    std::vector<double> sq(b.theta.theta.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = b.theta.theta[i] * b.theta.theta[i];
    b.theta_sq_mean = average(sq, *b.density);

    std::shared_ptr<const HeatSurface> heat;
    if (!options.cache_dir.empty()) {
        heat = MertonCache(options.cache_dir).get(utility, b.lambda_bar, options.heat);
    } else {
        heat = std::make_shared<const HeatSurface>(solve_heat(utility, b.lambda_bar, options.heat));
    }
    b.merton = std::make_shared<const HeatMertonSolution>(build_merton(heat, utility));

    const auto& sol = *b.merton;
    const double T = sol.horizon();
    const double coef = -0.5 * b.rho * b.B;
    b.v1 = sol.tabulate([&](std::size_t n, std::size_t j) {
        return coef * (T - sol.node_t(n)) * sol.node_d1_power(2, n, j);
    });
    return b;
}

double v0(const ExpansionBundle& bundle, double t, double x) { return bundle.merton->value(t, x); }

double v1(const ExpansionBundle& bundle, double t, double x) {
    const double T = bundle.merton->horizon();
    if (bundle.rho == 0.0 || bundle.B == 0.0) {
        bundle.merton->value(t, x);  // range check only
        return 0.0;
    }
    if (t >= T) return 0.0;
    return -0.5 * (T - t) * bundle.rho * bundle.B * bundle.merton->d1_power(2, t, x);
}

double pi0(const ExpansionBundle& bundle, const MarketMap& map, double t, double x, double y) {
    const double lam = sharpe(map, y);
    return lam / map.sigma(y) * bundle.merton->risk_tolerance(t, x);
}

double theta_at(const ExpansionBundle& bundle, double y) {
    return interpolate_on_grid(bundle.density->grid(), bundle.theta.theta, y);
}

double theta1_at(const ExpansionBundle& bundle, double y) {
    return interpolate_on_grid(bundle.density->grid(), bundle.theta1.theta, y);
}

double v2_pi0(const ExpansionBundle& bundle, double t, double x, double y) {
    return -0.5 * theta_at(bundle, y) * bundle.merton->d1_power(1, t, x);
}

double v3_pi0(const ExpansionBundle& bundle, double t, double x, double y) {
    const auto& sol = *bundle.merton;
    const double T = sol.horizon();
    // Fourth z-derivatives need a margin of interior nodes.
    constexpr double kMargin = 4.0;
    const double dt = sol.heat().dt();
    const auto n = static_cast<std::size_t>(std::lround(std::clamp(t, 0.0, T) / dt));
    sol.value(t, x);
    const double pos = (sol.z_of_x(n, x) - sol.node_z(0)) / sol.heat().dz();
    if (pos < kMargin || pos > static_cast<double>(sol.n_z() - 1) - kMargin) {
        std::ostringstream msg;
        msg << "v3_pi0: x=" << x << " within " << kMargin << " nodes of the wealth grid edge";
        throw NumericError(Errc::StencilOverflow, msg.str());
    }
    if (bundle.rho == 0.0) return 0.0;
    const double d2 = sol.d1_power(2, t, x);
    const double d3 = sol.d1_power(3, t, x);
    const double d4 = sol.d1_power(4, t, x);
    const double rx = sol.risk_tolerance_dx(t, x);
    const double factor = 0.5 * (d4 - rx * d3) + d3;
    return 0.5 * (T - t) * theta_at(bundle, y) * bundle.rho * bundle.B * factor +
           0.5 * bundle.rho * theta1_at(bundle, y) * d2;
}

double first_order_value(const ExpansionBundle& bundle, double t, double x) {
    return v0(bundle, t, x) + std::sqrt(bundle.epsilon) * v1(bundle, t, x);
}

Surface v3_factor_by_stencils(const ExpansionBundle& bundle) {
    const auto& sol = *bundle.merton;
    const Surface v = sol.value_surface();
    const Surface g = apply_Dk(sol, 1, apply_Dk(sol, 1, v));
    const Surface d1g = apply_Dk(sol, 1, g);
    const Surface d2g = apply_Dk(sol, 2, g);
    Surface out = d1g;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = 0.5 * d2g.values[i] + d1g.values[i];
    out.one_sided_edges = true;
    return out;
}

}  // namespace fastmr
