#pragma once

#include "fastmr/expansion.hpp"
#include "fastmr/fast_factor.hpp"
#include "fastmr/market_model.hpp"
#include "fastmr/merton.hpp"
#include "fastmr/simulator.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace fastmr {

/// Grid for the (t, z, y) solve. z nodes are a subsample of the Merton grid,
/// so wealth is x = H(z, t) with H solved at lambda_bar.
struct Grid3DSpec {
    /// Target z spacing; the Merton spacing times an integer stride.
    double z_spacing = 0.025;
    /// Wealth window covered at every t (clipped to the Merton range).
    double x_lo = 1e-3;
    double x_hi = 1e3;
    std::size_t n_y = 81;
    /// y covers center +- y_sd * scale.
    double y_sd = 6.0;
    /// Time steps: max(min_steps, ceil(steps_per_epsilon * T / eps)).
    double steps_per_epsilon = 200.0;
    std::size_t min_steps = 200;
    /// Hundsdorfer-Verwer weight.
    double theta = 0.5 + std::sqrt(3.0) / 6.0;
    /// First-order upwinding of the z drift where the cell Peclet number
    /// exceeds 2. Off by default.
    bool upwind = false;
    /// Slices kept besides the terminal one; snapped to Merton time levels.
    std::vector<double> output_times = {0.0};
};

struct ValueSlice {
    double t = 0.0;
    /// Merton time level of the slice.
    std::size_t level = 0;
    /// values[i * n_y + j] at (z_i, y_j).
    std::vector<double> values;
};

class ValueSurface3D {
public:
    ValueSurface3D(std::shared_ptr<const HeatMertonSolution> merton, std::vector<std::size_t> z_index,
                   std::vector<double> y, double epsilon, std::size_t n_steps);

    double epsilon() const { return epsilon_; }
    std::size_t n_steps() const { return n_steps_; }
    std::span<const double> y() const { return y_; }
    std::size_t n_z() const { return z_index_.size(); }
    std::size_t n_y() const { return y_.size(); }
    /// Merton node index of each z node.
    std::span<const std::size_t> z_index() const { return z_index_; }
    const std::vector<ValueSlice>& slices() const { return slices_; }
    const ValueSlice& slice_at(double t) const;
    double x_at(const ValueSlice& s, std::size_t i) const { return merton_->node_x(s.level, z_index_[i]); }

    /// Cubic interpolation in (z, y) on the slice at time t.
    double value(double t, double x, double y) const;

    void add_slice(ValueSlice s) { slices_.push_back(std::move(s)); }

private:
    std::shared_ptr<const HeatMertonSolution> merton_;
    std::vector<std::size_t> z_index_;
    std::vector<double> y_;
    double epsilon_;
    std::size_t n_steps_;
    std::vector<ValueSlice> slices_;
};

/// Value of a fixed strategy under the fast factor:
///   V_t + 1/2 q^2 V_zz + (lb^2/2 R_x + q lambda - q^2/2 R_x) V_z
///       + rho a q / sqrt(eps) V_zy + (a^2/2 V_yy + b V_y)/eps = 0,
/// with q = pi sigma / R, R and R_x taken from the Merton solution at lambda_bar,
/// V(T) = U(x). Dirichlet v0 at the far z edges, zero flux in y.
ValueSurface3D solve_strategy_value(const MarketMap& map, const FactorModel& factor, const ExpansionBundle& bundle,
                                    const Strategy& strategy, const Grid3DSpec& grid);

/// solve_strategy_value for pi0 (q = lambda(y) exactly) at the given epsilon.
ValueSurface3D solve_pi0_value(const MarketMap& map, const FactorModel& factor, const ExpansionBundle& bundle,
                               const Grid3DSpec& grid, double epsilon);

struct AveragedGridSpec {
    double x_min = 1e-4;
    double x_max = 1e4;
    std::size_t n_x = 801;
    std::size_t n_t = 400;
    /// y quadrature nodes (subsample of the density grid).
    std::size_t n_quad = 101;
    double horizon = 1.0;
    /// Epsilon used to evaluate eps-dependent strategies.
    double epsilon = 0.0;
};

/// Solution of a (t, x) PDE on a uniform log-wealth grid.
class LogGridSurface {
public:
    LogGridSurface(std::vector<double> s, std::vector<double> t, std::vector<double> values);

    double value(double t, double x) const;
    std::span<const double> s() const { return s_; }
    std::span<const double> t() const { return t_; }
    double at(std::size_t n, std::size_t i) const { return v_[n * s_.size() + i]; }

private:
    std::vector<double> s_;
    std::vector<double> t_;
    std::vector<double> v_;
};

/// v_t + 1/2 <sigma^2 pi^2> v_xx + <pi mu> v_x = 0, v(T) = U; Crank-Nicolson in
/// s = log x, far-field log-linear extrapolation.
LogGridSurface solve_averaged_v0(const Strategy& pi_tilde0, const MarketMap& map, const InvariantDensity& density,
                                 const Utility& utility, const AveragedGridSpec& grid);

enum class LossDrift {
    /// lambda_bar^2 R: the coefficient the pi0 wealth generator carries.
    LambdaBarSquared,
    /// lambda_bar R, the alternative drift normalization.
    LambdaBar,
};

/// Loss corrector on the Merton node grid:
///   w_t + 1/2 lb^2 R^2 w_xx + kappa R w_x + 1/2 <sigma^2 pi1^2> v0_xx = 0, w(T) = 0,
/// kappa = lb^2 or lb. Zero Dirichlet data at the far z edges.
struct LossSurface {
    std::shared_ptr<const HeatMertonSolution> merton;
    Surface values;
    double value(double t, double x) const { return merton->surface_value(values, t, x); }
};

LossSurface solve_loss_2alpha(const StrategyFn& pi_tilde1, const MarketMap& map, const ExpansionBundle& bundle,
                              LossDrift drift = LossDrift::LambdaBarSquared, std::size_t n_quad = 101);

}  // namespace fastmr
