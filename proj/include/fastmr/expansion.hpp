#pragma once

#include "fastmr/fast_factor.hpp"
#include "fastmr/market_model.hpp"
#include "fastmr/merton.hpp"
#include "fastmr/utility.hpp"

#include <memory>

namespace fastmr {

/// Leading and first-order objects of the fast-factor expansion.
struct ExpansionBundle {
    double lambda_bar = 0.0;
    double B = 0.0;
    double epsilon = 0.0;
    double rho = 0.0;
    /// <theta^2>, reported for diagnostics.
    double theta_sq_mean = 0.0;
    std::shared_ptr<const InvariantDensity> density;
    PoissonSolution theta;
    PoissonSolution theta1;
    std::shared_ptr<const HeatMertonSolution> merton;
    /// v1 on the Merton node grid.
    Surface v1;
};

struct ExpansionOptions {
    HeatGridSpec heat;
    double y_sd = 8.0;
    std::size_t y_nodes = 801;
    /// Optional heat-surface cache; empty path disables it.
    std::filesystem::path cache_dir;
};

/// Solves the Poisson problems, the Merton problem at lambda_bar and assembles v1.
ExpansionBundle build_expansion(const MarketMap& map, const FactorModel& factor, const Utility& utility,
                                const ExpansionOptions& options = {});

double v0(const ExpansionBundle& bundle, double t, double x);
/// -(T-t)/2 rho B D1^2 v0.
double v1(const ExpansionBundle& bundle, double t, double x);
/// (lambda(y)/sigma(y)) R(t, x; lambda_bar), in wealth units.
double pi0(const ExpansionBundle& bundle, const MarketMap& map, double t, double x, double y);
/// -theta(y)/2 D1 v0.
double v2_pi0(const ExpansionBundle& bundle, double t, double x, double y);
/// (T-t)/2 theta(y) rho B (D2/2 + D1) D1^2 v0 + rho/2 theta1(y) D1^2 v0.
double v3_pi0(const ExpansionBundle& bundle, double t, double x, double y);
/// v0 + sqrt(eps) v1.
double first_order_value(const ExpansionBundle& bundle, double t, double x);

/// theta(y) and theta1(y) by interpolation on the density grid.
double theta_at(const ExpansionBundle& bundle, double y);
double theta1_at(const ExpansionBundle& bundle, double y);

/// The (D2/2 + D1) D1^2 v0 factor of v3 at node level, assembled with apply_Dk
/// (finite differences); used to cross-check the analytic z-derivative route.
Surface v3_factor_by_stencils(const ExpansionBundle& bundle);

}  // namespace fastmr
