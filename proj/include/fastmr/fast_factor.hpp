#pragma once

#include "fastmr/market_model.hpp"

#include <functional>
#include <span>
#include <vector>

namespace fastmr {

/// Invariant density of the unit-speed factor tabulated on a YGrid.
class InvariantDensity {
public:
    InvariantDensity(YGrid grid, std::vector<double> values, double normalization)
        : grid_(std::move(grid)), values_(std::move(values)), normalization_(normalization) {}

    const YGrid& grid() const { return grid_; }
    std::span<const double> values() const { return values_; }
    /// Quadrature of the unnormalized density.
    double normalization() const { return normalization_; }

private:
    YGrid grid_;
    std::vector<double> values_;
    double normalization_;
};

/// Centered solution of L0 theta = g - <g> with L0 = a^2/2 d_yy + b d_y.
struct PoissonSolution {
    std::vector<double> theta;
    std::vector<double> theta_prime;
    /// <g> removed from the source.
    double source_mean = 0.0;
    /// sup over interior nodes of |L0 theta - (g - <g>)|, second differences.
    double residual = 0.0;
    /// |theta| at the two grid ends (edge growth diagnostic).
    double edge_growth = 0.0;
};

/// Phi(y) proportional to a(y)^{-2} exp(int 2b/a^2), normalized by trapezoid.
InvariantDensity invariant_density(const FactorModel& factor, const YGrid& grid);

/// <f> by trapezoid quadrature of f * Phi.
double average(const std::function<double(double)>& f, const InvariantDensity& density);
double average(std::span<const double> f_on_grid, const InvariantDensity& density);

/// sqrt(<lambda^2>).
double lambda_bar(const MarketMap& map, const InvariantDensity& density);

PoissonSolution solve_poisson(const std::function<double(double)>& g, const FactorModel& factor,
                              const InvariantDensity& density);
PoissonSolution solve_poisson(std::span<const double> g_on_grid, const FactorModel& factor,
                              const InvariantDensity& density);

/// B = <lambda a theta'> with theta solving the lambda^2 Poisson problem.
double compute_B(const MarketMap& map, const FactorModel& factor, const PoissonSolution& theta,
                 const InvariantDensity& density);

/// theta1: L0 theta1 = a lambda theta' - <a lambda theta'>.
PoissonSolution solve_theta1(const MarketMap& map, const FactorModel& factor, const PoissonSolution& theta,
                             const InvariantDensity& density);

/// Catmull-Rom interpolation of a node-valued table on the density grid,
/// linear in the end cells, constant outside.
double interpolate_on_grid(const YGrid& grid, std::span<const double> values, double y);

}  // namespace fastmr
