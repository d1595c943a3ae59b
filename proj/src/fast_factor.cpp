#include "fastmr/fast_factor.hpp"

#include "fastmr/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fastmr {

InvariantDensity invariant_density(const FactorModel& factor, const YGrid& grid) {
    const auto y = grid.nodes();
    const std::size_t n = y.size();
    const double h = grid.spacing();
    std::vector<double> drift_ratio(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = factor.a(y[i]);
        drift_ratio[i] = 2.0 * factor.b(y[i]) / (a * a);
    }
    // log density relative to the left end; shifted by its max before exp.
    const std::vector<double> integral = numerics::cumulative_integral(drift_ratio, h);
    std::vector<double> log_phi(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = factor.a(y[i]);
        log_phi[i] = integral[i] - 2.0 * std::log(a);
    }
    const double peak = *std::max_element(log_phi.begin(), log_phi.end());
    std::vector<double> phi(n);
    for (std::size_t i = 0; i < n; ++i) phi[i] = std::exp(log_phi[i] - peak);
    const double mass = numerics::trapezoid(phi, h);
    if (!std::isfinite(mass) || !(mass > 0.0)) {
        throw NumericError(Errc::NonNormalizable, "invariant density has zero or infinite mass");
    }
    for (double& p : phi) p /= mass;
    return InvariantDensity(grid, std::move(phi), mass);
}

double average(std::span<const double> f_on_grid, const InvariantDensity& density) {
    const auto phi = density.values();
    std::vector<double> prod(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) prod[i] = f_on_grid[i] * phi[i];
    return numerics::trapezoid(prod, density.grid().spacing());
}

double average(const std::function<double(double)>& f, const InvariantDensity& density) {
    const auto y = density.grid().nodes();
    std::vector<double> values(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) values[i] = f(y[i]);
    return average(values, density);
}

double lambda_bar(const MarketMap& map, const InvariantDensity& density) {
    return std::sqrt(average([&map](double y) {
        const double l = sharpe(map, y);
        return l * l;
    }, density));
}

PoissonSolution solve_poisson(std::span<const double> g, const FactorModel& factor,
                              const InvariantDensity& density) {
    const YGrid& grid = density.grid();
    const auto y = grid.nodes();
    const auto phi = density.values();
    const std::size_t n = y.size();
    const double h = grid.spacing();

    PoissonSolution sol;
    sol.source_mean = average(g, density);

    std::size_t peak = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (phi[i] > phi[peak]) peak = i;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (phi[i] < 1e-300) throw NumericError(Errc::DensityUnderflow, "invariant density underflows on grid");
    }

    // theta'(y) = 2/(a^2 Phi) int_{lo}^{y} (g - <g>) Phi. Left of the peak
    // integrate from the left end; right of it use the equal and opposite
    // integral from the right end (the source is centered).
    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n; ++i) centered[i] = (g[i] - sol.source_mean) * phi[i];
    std::vector<double> from_left = numerics::cumulative_integral(centered, h);
    std::vector<double> from_right = numerics::cumulative_integral_from_right(centered, h);
    // Mass beyond the grid ends, leading Laplace term: int c Phi ~ c Phi / |(log Phi)'|.
    auto log_slope = [&](std::size_t i0, std::size_t i1, std::size_t i2) {
        return (-3.0 * std::log(phi[i0]) + 4.0 * std::log(phi[i1]) - std::log(phi[i2])) / (2.0 * h);
    };
    const double s_lo = log_slope(0, 1, 2);
    const double s_hi = -log_slope(n - 1, n - 2, n - 3);
    const double tail_lo = s_lo > 0.0 ? centered.front() / s_lo : 0.0;
    const double tail_hi = s_hi < 0.0 ? -centered.back() / s_hi : 0.0;
    for (double& v : from_left) v += tail_lo;
    for (double& v : from_right) v += tail_hi;

    sol.theta_prime.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = factor.a(y[i]);
        const double flux = (i <= peak) ? from_left[i] : -from_right[i];
        sol.theta_prime[i] = 2.0 * flux / (a * a * phi[i]);
    }
    sol.theta = numerics::cumulative_integral(sol.theta_prime, h);
    const double shift = average(sol.theta, density);
    for (double& t : sol.theta) t -= shift;

    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double a = factor.a(y[i]);
        const double second = (sol.theta_prime[i + 1] - sol.theta_prime[i - 1]) / (2.0 * h);
        const double l0 = 0.5 * a * a * second + factor.b(y[i]) * sol.theta_prime[i];
        worst = std::max(worst, std::abs(l0 - (g[i] - sol.source_mean)));
    }
    sol.residual = worst;
    sol.edge_growth = std::max(std::abs(sol.theta.front()), std::abs(sol.theta.back()));
    return sol;
}

PoissonSolution solve_poisson(const std::function<double(double)>& g, const FactorModel& factor,
                              const InvariantDensity& density) {
    const auto y = density.grid().nodes();
    std::vector<double> values(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) values[i] = g(y[i]);
    return solve_poisson(values, factor, density);
}

double compute_B(const MarketMap& map, const FactorModel& factor, const PoissonSolution& theta,
                 const InvariantDensity& density) {
    const auto y = density.grid().nodes();
    std::vector<double> integrand(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        integrand[i] = sharpe(map, y[i]) * factor.a(y[i]) * theta.theta_prime[i];
    }
    return average(integrand, density);
}

PoissonSolution solve_theta1(const MarketMap& map, const FactorModel& factor, const PoissonSolution& theta,
                             const InvariantDensity& density) {
    const auto y = density.grid().nodes();
    std::vector<double> source(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        source[i] = factor.a(y[i]) * sharpe(map, y[i]) * theta.theta_prime[i];
    }
    return solve_poisson(source, factor, density);
}

double interpolate_on_grid(const YGrid& grid, std::span<const double> values, double y) {
    if (y <= grid.lo()) return values.front();
    if (y >= grid.hi()) return values.back();
    const std::size_t n = grid.size();
    const double pos = (y - grid.lo()) / grid.spacing();
    const std::size_t i = std::min(static_cast<std::size_t>(pos), n - 2);
    const double w = pos - static_cast<double>(i);
    if (i == 0 || i + 2 >= n) return (1.0 - w) * values[i] + w * values[i + 1];
    // Catmull-Rom cubic on nodes i-1..i+2
    const double fm = values[i - 1];
    const double f0 = values[i];
    const double f1 = values[i + 1];
    const double f2 = values[i + 2];
    return f0 + 0.5 * w * (f1 - fm + w * (2.0 * fm - 5.0 * f0 + 4.0 * f1 - f2 + w * (3.0 * (f0 - f1) + f2 - fm)));
}

}  // namespace fastmr
