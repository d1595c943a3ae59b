#include "fastmr/simulator.hpp"

#include "fastmr/errors.hpp"
#include "fastmr/numerics.hpp"
#include "fastmr/rng.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace fastmr {

// ---------------------------------------------------------------------------
// Strategy

Strategy Strategy::zero() {
    Strategy s;
    s.kind_ = Kind::Zero;
    s.label_ = "zero";
    return s;
}

Strategy Strategy::constant_proportion(double p) {
    Strategy s;
    s.kind_ = Kind::ConstantProportion;
    s.proportion_ = p;
    std::ostringstream os;
    os << "constant_proportion(" << p << ")";
    s.label_ = os.str();
    return s;
}

Strategy Strategy::pi0(std::shared_ptr<const RiskToleranceTable> table, MarketMap map) {
    Strategy s;
    s.kind_ = Kind::Pi0;
    s.table_ = std::move(table);
    s.map_ = std::make_shared<const MarketMap>(std::move(map));
    s.label_ = "pi0";
    return s;
}

Strategy Strategy::pi0(const ExpansionBundle& bundle, const MarketMap& map) {
    auto table = std::make_shared<const RiskToleranceTable>(*bundle.merton, 1e-4, 1e4, 2401);
    return pi0(std::move(table), map);
}

Strategy Strategy::custom(StrategyFn f, std::string label) {
    Strategy s;
    s.kind_ = Kind::Custom;
    s.fn_ = std::move(f);
    s.label_ = std::move(label);
    return s;
}

Strategy Strategy::perturbed(Strategy base, StrategyFn correction, double alpha, bool zero_correction) {
    if (!(alpha > 0.0)) throw NumericError(Errc::InvalidArgument, "perturbed strategy: alpha must be positive");
    Strategy s;
    s.kind_ = Kind::Perturbed;
    s.alpha_ = alpha;
    s.zero_correction_ = zero_correction;
    s.fn_ = std::move(correction);
    std::ostringstream os;
    os << "perturbed(" << base.describe() << ", alpha=" << alpha << ")";
    s.label_ = os.str();
    s.base_ = std::make_shared<const Strategy>(std::move(base));
    return s;
}

double Strategy::base(double t, double x, double y) const {
    switch (kind_) {
        case Kind::Zero:
            return 0.0;
        case Kind::ConstantProportion:
            return proportion_ * x;
        case Kind::Pi0: {
            const double sig = map_->sigma(y);
            if (!(sig > 0.0)) throw NumericError(Errc::NonPositiveVolatility, "pi0: sigma(y) <= 0");
            return map_->mu(y) / (sig * sig) * (*table_)(t, x);
        }
        case Kind::Custom:
            return fn_(t, x, y);
        case Kind::Perturbed:
            return base_->base(t, x, y);
    }
    return 0.0;
}

double Strategy::correction(double t, double x, double y) const {
    return kind_ == Kind::Perturbed ? fn_(t, x, y) : 0.0;
}

double Strategy::operator()(double t, double x, double y, double epsilon) const {
    return evaluate_scaled(t, x, y, correction_scale(epsilon));
}

bool Strategy::base_is_pi0() const {
    if (kind_ == Kind::Pi0) return true;
    return kind_ == Kind::Perturbed && base_->kind_ == Kind::Pi0;
}

std::string Strategy::describe() const { return label_; }

// ---------------------------------------------------------------------------
// Simulation

namespace {

struct FactorStepper {
    bool exact_ou;
    double m = 0.0;
    double decay = 0.0;
    double noise_sd = 0.0;
    double corr = 0.0;
    double corr_perp = 0.0;
    // Euler fallback
    const FactorModel* factor = nullptr;
    double dt_over_eps = 0.0;
    double sqrt_dt_over_eps = 0.0;
    double rho = 0.0;
    double rho_perp = 0.0;

    FactorStepper(const FactorModel& f, double dt) : exact_ou(f.is_ou()), factor(&f) {
        const double h = dt / f.epsilon();
        rho = f.rho();
        rho_perp = std::sqrt(1.0 - rho * rho);
        dt_over_eps = h;
        sqrt_dt_over_eps = std::sqrt(h);
        if (exact_ou) {
            m = f.ou_mean();
            decay = std::exp(-h);
            const double one_minus_e2 = -std::expm1(-2.0 * h);
            noise_sd = f.ou_nu() * std::sqrt(one_minus_e2);
            // Correlation between the exact OU noise and the wealth increment.
            corr = rho * std::sqrt(2.0) * (-std::expm1(-h)) / std::sqrt(h * one_minus_e2);
            corr_perp = std::sqrt(std::max(0.0, 1.0 - corr * corr));
        }
    }

    double step(double y, double z1, double z2) const {
        if (exact_ou) return m + (y - m) * decay + noise_sd * (corr * z1 + corr_perp * z2);
        return y + factor->b(y) * dt_over_eps + factor->a(y) * sqrt_dt_over_eps * (rho * z1 + rho_perp * z2);
    }
};

SimResult summarize(std::span<const double> samples, std::vector<double>& terminal, std::size_t n_paths,
                    std::size_t absorbed, std::size_t n_steps) {
    SimResult r;
    const auto ms = numerics::mean_std(samples);
    r.value = ms.mean;
    r.stderr_ = samples.size() > 1 ? ms.std / std::sqrt(static_cast<double>(samples.size())) : 0.0;
    r.n_paths = n_paths;
    r.n_absorbed = absorbed;
    r.n_steps = n_steps;
    std::sort(terminal.begin(), terminal.end());
    const std::size_t n = terminal.size();
    for (std::size_t q = 0; q < kQuantileLevels.size(); ++q) {
        const double pos = kQuantileLevels[q] * static_cast<double>(n - 1);
        const auto i = static_cast<std::size_t>(pos);
        const double w = pos - static_cast<double>(i);
        r.wealth_quantiles[q] = i + 1 < n ? (1.0 - w) * terminal[i] + w * terminal[i + 1] : terminal[i];
    }
    r.min_terminal_wealth = terminal.front();
    r.max_terminal_wealth = terminal.back();
    return r;
}

}  // namespace

CrnRun simulate_crn(const MarketMap& map, const FactorModel& factor, const Utility& utility,
                    std::span<const Strategy> strategies, double x0, double y0, double t0, double T,
                    const PathConfig& cfg) {
    if (cfg.n_paths < 1) throw NumericError(Errc::InvalidArgument, "simulate: n_paths must be >= 1");
    if (!(x0 > 0.0)) throw NumericError(Errc::InvalidArgument, "simulate: x0 must be positive");
    if (!(cfg.dt > 0.0)) throw NumericError(Errc::InvalidArgument, "simulate: dt must be positive");
    if (strategies.empty()) throw NumericError(Errc::InvalidArgument, "simulate: no strategy");
    const double eps = factor.epsilon();
    if (cfg.dt > eps / 20.0 * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "simulate: dt=" << cfg.dt << " exceeds eps/20=" << eps / 20.0;
        throw NumericError(Errc::StepTooCoarse, msg.str());
    }

    const std::size_t n_strat = strategies.size();
    const std::size_t n_draws = cfg.antithetic ? (cfg.n_paths + 1) / 2 : cfg.n_paths;
    const std::size_t paths_per_draw = cfg.antithetic ? 2 : 1;
    const double span = std::max(T - t0, 0.0);
    const std::size_t n_steps = span > 0.0 ? static_cast<std::size_t>(std::ceil(span / cfg.dt - 1e-9)) : 0;
    const double dt = n_steps > 0 ? span / static_cast<double>(n_steps) : 0.0;
    const double sqrt_dt = std::sqrt(dt);
    const double guard = 1e12 * x0;

    CrnRun run;
    run.dt = dt;
    run.pair_values.assign(n_strat, std::vector<double>(n_draws, 0.0));
    std::vector<std::vector<double>> terminal(n_strat, std::vector<double>(n_draws * paths_per_draw, 0.0));
    std::vector<std::vector<unsigned char>> absorbed(n_strat, std::vector<unsigned char>(n_draws * paths_per_draw, 0));

    std::vector<double> scale(n_strat);
    for (std::size_t s = 0; s < n_strat; ++s) scale[s] = strategies[s].correction_scale(eps);
    const FactorStepper stepper(factor, n_steps > 0 ? dt : eps / 20.0);
    // Per-thread first error, rethrown in thread order for determinism.
    unsigned n_threads = cfg.threads == 0 ? std::max(1U, std::thread::hardware_concurrency()) : cfg.threads;
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, std::max<std::size_t>(n_draws, 1)));
    std::vector<std::exception_ptr> errors(n_threads);

    auto work = [&](unsigned tid) {
        const std::size_t lo = n_draws * tid / n_threads;
        const std::size_t hi = n_draws * (tid + 1) / n_threads;
        std::vector<double> x(n_strat * paths_per_draw);
        std::vector<unsigned char> dead(n_strat * paths_per_draw);
        try {
            for (std::size_t d = lo; d < hi; ++d) {
                const NormalStream rng(cfg.seed, d);
                std::fill(x.begin(), x.end(), x0);
                std::fill(dead.begin(), dead.end(), 0);
                double y[2] = {y0, y0};
                for (std::size_t n = 0; n < n_steps; ++n) {
                    const double t = t0 + dt * static_cast<double>(n);
                    const auto z = rng.pair(n);
                    for (std::size_t a = 0; a < paths_per_draw; ++a) {
                        const double sgn = a == 0 ? 1.0 : -1.0;
                        const double z1 = sgn * z[0];
                        const double z2 = sgn * z[1];
                        const double yy = y[a];
                        const double mu = map.mu(yy);
                        const double sig = map.sigma(yy);
                        for (std::size_t s = 0; s < n_strat; ++s) {
                            const std::size_t k = s * paths_per_draw + a;
                            if (dead[k]) continue;
                            const double pi = strategies[s].evaluate_scaled(t, x[k], yy, scale[s]);
                            double xn = x[k] + pi * mu * dt + pi * sig * sqrt_dt * z1;
                            if (!(xn > 0.0)) {
                                if (!cfg.absorb_at_zero) {
                                    throw NumericError(Errc::NumericBlowup,
                                                       "simulate: wealth left (0, inf) with absorption off");
                                }
                                xn = 0.0;
                                dead[k] = 1;
                            } else if (!(xn < guard)) {
                                std::ostringstream msg;
                                msg << "simulate: wealth " << xn << " above overflow guard " << guard;
                                throw NumericError(Errc::NumericBlowup, msg.str());
                            }
                            x[k] = xn;
                        }
                        y[a] = stepper.step(yy, z1, z2);
                    }
                }
                for (std::size_t s = 0; s < n_strat; ++s) {
                    double acc = 0.0;
                    for (std::size_t a = 0; a < paths_per_draw; ++a) {
                        const std::size_t k = s * paths_per_draw + a;
                        const double u = x[k] > 0.0 ? utility.u(x[k]) : 0.0;
                        acc += u;
                        terminal[s][d * paths_per_draw + a] = x[k];
                        absorbed[s][d * paths_per_draw + a] = dead[k];
                    }
                    run.pair_values[s][d] = acc / static_cast<double>(paths_per_draw);
                }
            }
        } catch (...) {
            errors[tid] = std::current_exception();
        }
    };

    if (n_threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (unsigned tid = 0; tid < n_threads; ++tid) pool.emplace_back(work, tid);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    for (std::size_t s = 0; s < n_strat; ++s) {
        const auto n_abs = static_cast<std::size_t>(std::count(absorbed[s].begin(), absorbed[s].end(), 1));
        run.results.push_back(summarize(run.pair_values[s], terminal[s], n_draws * paths_per_draw, n_abs, n_steps));
    }
    return run;
}

SimResult simulate_value(const MarketMap& map, const FactorModel& factor, const Utility& utility,
                         const Strategy& strategy, double x0, double y0, double t0, double T, const PathConfig& cfg) {
    const Strategy one[1] = {strategy};
    return simulate_crn(map, factor, utility, one, x0, y0, t0, T, cfg).results.front();
}

Estimate paired_difference(const CrnRun& run, std::size_t a, std::size_t b) {
    const auto& va = run.pair_values.at(a);
    const auto& vb = run.pair_values.at(b);
    std::vector<double> d(va.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = va[i] - vb[i];
    const auto ms = numerics::mean_std(d);
    return {ms.mean, d.size() > 1 ? ms.std / std::sqrt(static_cast<double>(d.size())) : 0.0};
}

Estimate residual(const MarketMap& map, const FactorModel& factor, const ExpansionBundle& bundle, double x0,
                  double y0, double t0, const PathConfig& cfg) {
    const double T = bundle.merton->horizon();
    if (t0 >= T) return {0.0, 0.0};
    const SimResult sim = simulate_value(map, factor, bundle.merton->utility(), Strategy::pi0(bundle, map), x0, y0,
                                         t0, T, cfg);
    const double approx = v0(bundle, t0, x0) + std::sqrt(factor.epsilon()) * v1(bundle, t0, x0);
    return {sim.value - approx, sim.stderr_};
}

// ---------------------------------------------------------------------------
// Slopes and families

SlopeFit convergence_slope(std::span<const ResidualPoint> points) {
    if (points.size() < 3) throw NumericError(Errc::InvalidArgument, "convergence_slope: need at least 3 points");
    bool any_err = false;
    for (const auto& p : points) {
        if (!(p.epsilon > 0.0)) throw NumericError(Errc::InvalidArgument, "convergence_slope: epsilon must be positive");
        if (!(p.magnitude > 2.0 * p.stderr_)) {
            std::ostringstream msg;
            msg << "convergence_slope: |E|=" << p.magnitude << " not above 2*stderr=" << 2.0 * p.stderr_
                << " at eps=" << p.epsilon;
            throw NumericError(Errc::NoiseDominated, msg.str());
        }
        any_err = any_err || p.stderr_ > 0.0;
    }
    const std::size_t n = points.size();
    std::vector<double> lx(n), ly(n), w(n);
    double max_w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        lx[i] = std::log(points[i].epsilon);
        ly[i] = std::log(points[i].magnitude);
        if (any_err && points[i].stderr_ > 0.0) {
            const double rel = points[i].stderr_ / points[i].magnitude;
            w[i] = 1.0 / (rel * rel);
            max_w = std::max(max_w, w[i]);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!any_err) w[i] = 1.0;
        else if (points[i].stderr_ <= 0.0) w[i] = max_w;
    }
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += w[i];
        sx += w[i] * lx[i];
        sy += w[i] * ly[i];
    }
    const double mx = sx / sw;
    const double my = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += w[i] * (lx[i] - mx) * (lx[i] - mx);
        sxy += w[i] * (lx[i] - mx) * (ly[i] - my);
    }
    SlopeFit fit;
    fit.n_points = n;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ly[i] - fit.intercept - fit.slope * lx[i];
        chi2 += w[i] * r * r;
    }
    const double dof = static_cast<double>(n - 2);
    // Scatter-based error, and the error implied by the stated stderr when known.
    double var = chi2 / dof / sxx;
    if (any_err) var = std::max(var, 1.0 / sxx);
    fit.slope_stderr = std::sqrt(var);
    const boost::math::students_t dist(dof);
    const double tq = boost::math::quantile(dist, 0.975);
    fit.ci_low = fit.slope - tq * fit.slope_stderr;
    fit.ci_high = fit.slope + tq * fit.slope_stderr;
    return fit;
}

std::string to_string(FamilyRegime r) {
    switch (r) {
        case FamilyRegime::Identical:
            return "identical";
        case FamilyRegime::Bounded:
            return "bounded";
        case FamilyRegime::DivergingNegative:
            return "diverging_negative";
        case FamilyRegime::OrderOneNegative:
            return "order_one_negative";
    }
    return "unknown";
}

FamilyRegime predicted_regime(bool base_is_pi0, bool correction_zero, double alpha) {
    if (!base_is_pi0) return FamilyRegime::OrderOneNegative;
    if (correction_zero) return FamilyRegime::Identical;
    return alpha >= 0.25 ? FamilyRegime::Bounded : FamilyRegime::DivergingNegative;
}

bool regime_consistent(FamilyRegime regime, std::span<const FamilyRow> rows) {
    if (rows.empty()) return false;
    const FamilyRow& first = rows.front();
    const FamilyRow& last = rows.back();
    const double se_first = first.delta_stderr / std::sqrt(first.epsilon);
    const double se_last = last.delta_stderr / std::sqrt(last.epsilon);
    switch (regime) {
        case FamilyRegime::Identical:
            return std::all_of(rows.begin(), rows.end(), [](const FamilyRow& r) { return r.delta == 0.0; });
        case FamilyRegime::Bounded: {
            const bool no_gain = std::none_of(rows.begin(), rows.end(), [](const FamilyRow& r) { return r.sign == '+'; });
            const bool bounded = std::abs(last.delta_over_sqrt_eps) <=
                                 1.25 * std::abs(first.delta_over_sqrt_eps) + 2.0 * (se_first + se_last);
            return no_gain && bounded;
        }
        case FamilyRegime::DivergingNegative:
        case FamilyRegime::OrderOneNegative: {
            const bool all_neg = std::all_of(rows.begin(), rows.end(), [](const FamilyRow& r) { return r.sign == '-'; });
            const bool growing = last.delta_over_sqrt_eps < first.delta_over_sqrt_eps - 2.0 * (se_first + se_last);
            return all_neg && growing;
        }
    }
    return false;
}

FamilyReport compare_family(const MarketMap& map, const FactorModel& factor, const ExpansionBundle& bundle,
                            const Strategy& family, std::span<const double> epsilons, const PathConfig& cfg,
                            const FamilyOptions& options) {
    if (epsilons.empty()) throw NumericError(Errc::InvalidArgument, "compare_family: empty epsilon list");
    if (!(options.dt_over_epsilon > 0.0 && options.dt_over_epsilon <= 1.0 / 20.0)) {
        throw NumericError(Errc::StepTooCoarse, "compare_family: dt_over_epsilon must be in (0, 1/20]");
    }
    FamilyReport report;
    report.alpha = family.alpha();
    report.predicted = predicted_regime(family.base_is_pi0(), family.correction_is_zero(), family.alpha());

    const Strategy reference =
        family.base_is_pi0() && family.base_strategy() ? *family.base_strategy() : Strategy::pi0(bundle, map);
    const Strategy pair[2] = {family, reference};
    const double T = bundle.merton->horizon();

    std::vector<double> eps(epsilons.begin(), epsilons.end());
    std::sort(eps.begin(), eps.end(), std::greater<>());
    for (double e : eps) {
        const FactorModel f = factor.with_epsilon(e);
        PathConfig c = cfg;
        c.dt = options.dt_over_epsilon * e;
        const CrnRun run = simulate_crn(map, f, bundle.merton->utility(), pair, options.x0, options.y0, options.t0,
                                        T, c);
        const Estimate d = paired_difference(run, 0, 1);
        FamilyRow row;
        row.epsilon = e;
        row.v_tilde = run.results[0].value;
        row.v_pi0 = run.results[1].value;
        row.delta = d.value;
        row.delta_stderr = d.stderr_;
        row.delta_over_sqrt_eps = d.value / std::sqrt(e);
        row.delta_over_eps_2alpha = report.alpha > 0.0 ? d.value / std::pow(e, 2.0 * report.alpha) : 0.0;
        row.sign = d.value < -2.0 * d.stderr_ ? '-' : (d.value > 2.0 * d.stderr_ ? '+' : '0');
        report.rows.push_back(row);
        report.sign_pattern.push_back(row.sign);
    }
    if (report.predicted != FamilyRegime::Identical &&
        std::all_of(report.rows.begin(), report.rows.end(), [](const FamilyRow& r) { return r.sign == '0'; })) {
        throw NumericError(Errc::InconclusiveNoise,
                           "compare_family: |Delta| below 2 paired stderr at every epsilon; increase n_paths");
    }
    report.consistent = regime_consistent(report.predicted, report.rows);
    return report;
}

}  // namespace fastmr
