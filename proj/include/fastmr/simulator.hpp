#pragma once

#include "fastmr/expansion.hpp"
#include "fastmr/market_model.hpp"
#include "fastmr/merton.hpp"
#include "fastmr/utility.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fastmr {

/// Dollar amount held in the risky asset as a function of (t, x, y).
using StrategyFn = std::function<double(double t, double x, double y)>;

class Strategy {
public:
    enum class Kind { Pi0, Perturbed, ConstantProportion, Zero, Custom };

    static Strategy zero();
    /// pi = p * x.
    static Strategy constant_proportion(double p);
    /// (lambda(y)/sigma(y)) R(t, x; lambda_bar), R from a lookup table.
    static Strategy pi0(std::shared_ptr<const RiskToleranceTable> table, MarketMap map);
    static Strategy pi0(const ExpansionBundle& bundle, const MarketMap& map);
    static Strategy custom(StrategyFn f, std::string label = "custom");
    /// base + eps^alpha * correction.
    static Strategy perturbed(Strategy base, StrategyFn correction, double alpha, bool zero_correction = false);

    double operator()(double t, double x, double y, double epsilon) const;
    /// Same value with eps^alpha supplied by the caller (hot loops).
    double evaluate_scaled(double t, double x, double y, double eps_alpha) const {
        if (kind_ != Kind::Perturbed) return base(t, x, y);
        return base_->base(t, x, y) + eps_alpha * fn_(t, x, y);
    }
    double correction_scale(double epsilon) const {
        return kind_ == Kind::Perturbed && !zero_correction_ ? std::pow(epsilon, alpha_) : 0.0;
    }

    Kind kind() const { return kind_; }
    /// True for pi0 and for perturbations whose base is pi0.
    bool base_is_pi0() const;
    /// True when the strategy is exactly its base (correction declared zero).
    bool correction_is_zero() const { return zero_correction_; }
    double alpha() const { return alpha_; }
    std::string describe() const;

    /// Evaluates only the eps-independent base part.
    double base(double t, double x, double y) const;
    double correction(double t, double x, double y) const;
    /// The base strategy of a perturbation, nullptr otherwise.
    const Strategy* base_strategy() const { return base_.get(); }

private:
    Kind kind_ = Kind::Zero;
    double proportion_ = 0.0;
    double alpha_ = 0.0;
    bool zero_correction_ = false;
    std::string label_;
    std::shared_ptr<const RiskToleranceTable> table_;
    std::shared_ptr<const MarketMap> map_;
    std::shared_ptr<const Strategy> base_;
    StrategyFn fn_;
};

struct PathConfig {
    std::size_t n_paths = 100000;
    /// Largest admissible time step; the run uses ceil((T-t0)/dt) equal steps.
    double dt = 0.001;
    std::uint64_t seed = 20240611;
    bool antithetic = true;
    bool absorb_at_zero = true;
    /// 0 means hardware concurrency.
    unsigned threads = 0;
};

struct SimResult {
    double value = 0.0;
    double stderr_ = 0.0;
    std::size_t n_paths = 0;
    std::size_t n_absorbed = 0;
    std::size_t n_steps = 0;
    /// Terminal wealth quantiles at levels 0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99.
    std::array<double, 7> wealth_quantiles{};
    double min_terminal_wealth = 0.0;
    double max_terminal_wealth = 0.0;
};

inline constexpr std::array<double, 7> kQuantileLevels = {0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99};

struct Estimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

/// Several strategies driven by the same Brownian increments. pair_values[s]
/// holds one sample per independent draw (antithetic pair mean when pairing
/// is on), so paired differences between strategies are exact CRN samples.
struct CrnRun {
    std::vector<SimResult> results;
    std::vector<std::vector<double>> pair_values;
    double dt = 0.0;
};

CrnRun simulate_crn(const MarketMap& map, const FactorModel& factor, const Utility& utility,
                    std::span<const Strategy> strategies, double x0, double y0, double t0, double T,
                    const PathConfig& cfg);

SimResult simulate_value(const MarketMap& map, const FactorModel& factor, const Utility& utility,
                         const Strategy& strategy, double x0, double y0, double t0, double T, const PathConfig& cfg);

/// Mean and standard error of pair_values[a] - pair_values[b].
Estimate paired_difference(const CrnRun& run, std::size_t a, std::size_t b);

/// V^{pi0,eps}(t0, x0, y0) by simulation minus v0 + sqrt(eps) v1 at (t0, x0).
Estimate residual(const MarketMap& map, const FactorModel& factor, const ExpansionBundle& bundle, double x0,
                  double y0, double t0, const PathConfig& cfg);

struct ResidualPoint {
    double epsilon;
    double magnitude;
    double stderr_;
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n_points = 0;
};

/// Weighted least squares of log|E| on log eps with a 95% Student-t interval.
/// Throws NoiseDominated when some |E| <= 2 stderr.
SlopeFit convergence_slope(std::span<const ResidualPoint> points);

enum class FamilyRegime { Identical, Bounded, DivergingNegative, OrderOneNegative };
std::string to_string(FamilyRegime r);

/// Regime expected for a perturbed family.
FamilyRegime predicted_regime(bool base_is_pi0, bool correction_zero, double alpha);

struct FamilyRow {
    double epsilon = 0.0;
    double v_tilde = 0.0;
    double v_pi0 = 0.0;
    double delta = 0.0;
    double delta_stderr = 0.0;
    double delta_over_sqrt_eps = 0.0;
    double delta_over_eps_2alpha = 0.0;
    /// '-' below -2 stderr, '+' above +2 stderr, '0' otherwise.
    char sign = '0';
};

struct FamilyReport {
    double alpha = 0.0;
    FamilyRegime predicted = FamilyRegime::Bounded;
    std::vector<FamilyRow> rows;
    std::string sign_pattern;
    bool consistent = false;
};

/// Checks measured rows against the regime; rows must be sorted by
/// decreasing epsilon.
bool regime_consistent(FamilyRegime regime, std::span<const FamilyRow> rows);

struct FamilyOptions {
    double x0 = 1.0;
    double y0 = 0.0;
    double t0 = 0.0;
    /// dt = dt_over_epsilon * eps for each epsilon (must be <= 1/20).
    double dt_over_epsilon = 1.0 / 20.0;
};

/// Delta(eps) = V^{tilde pi} - V^{pi0} under common random numbers for each eps.
/// Throws InconclusiveNoise if |Delta| < 2 stderr at every eps (unless the
/// family is identical to pi0, where Delta is exactly zero).
FamilyReport compare_family(const MarketMap& map, const FactorModel& factor, const ExpansionBundle& bundle,
                            const Strategy& family, std::span<const double> epsilons, const PathConfig& cfg,
                            const FamilyOptions& options = {});

}  // namespace fastmr
