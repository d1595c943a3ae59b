#include "commands.hpp"

#include "fastmr/errors.hpp"
#include "fastmr/expansion.hpp"
#include "fastmr/fast_factor.hpp"
#include "fastmr/merton.hpp"
#include "fastmr/simulator.hpp"
#include "fastmr/value_pde.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>

namespace fastmr::cli {

namespace {

// Relative residual of the Merton PDE on the heat grid that --check accepts.
constexpr double kMertonResidualTol = 1e-2;

class Checks {
public:
    explicit Checks(bool enabled) : enabled_(enabled) {}

    bool enabled() const { return enabled_; }
    void expect(bool ok, const std::string& what) {
        if (!enabled_) return;
        log_.push_back(Json{{"check", what}, {"passed", ok}});
        if (!ok) failed_.push_back(what);
    }
    Json to_json() const { return log_; }
    void raise() const {
        if (failed_.empty()) return;
        std::string msg = "check failed:";
        for (const auto& f : failed_) msg += " [" + f + "]";
        throw CheckFailure(msg);
    }

private:
    bool enabled_;
    Json log_ = Json::array();
    std::vector<std::string> failed_;
};

struct Run {
    const ExperimentConfig& cfg;
    Checks checks;
    Json results = Json::object();
    Json tables = Json::object();
    Json files = Json::array();

    void put(const std::string& name, double value, const std::string& op) { results[name] = traced(value, op); }
    /// Small tables go into summary.json as well as CSV.
    void table(const std::string& name, const Table& t, bool embed) {
        t.write_csv(cfg.output_dir / (name + ".csv"));
        files.push_back(name + ".csv");
        if (embed) tables[name] = t.to_json();
    }
};

ExpansionBundle expand(const ExperimentConfig& c) {
    return build_expansion(c.market, c.factor, c.utility, c.expansion);
}

Strategy make_strategy(const StrategySpec& s, const ExpansionBundle& b, const MarketMap& map) {
    if (s.kind == "zero") return Strategy::zero();
    if (s.kind == "constant_proportion") return Strategy::constant_proportion(s.proportion);
    const Strategy p = Strategy::pi0(b, map);
    if (s.kind == "scaled_pi0") {
        const double k = s.scale;
        return Strategy::custom([p, k](double t, double x, double y) { return k * p.base(t, x, y); }, "scaled_pi0");
    }
    return p;
}

PathConfig path_config(const ExperimentConfig& c, double eps) {
    PathConfig p;
    p.n_paths = c.simulation.n_paths;
    p.dt = c.simulation.dt_over_epsilon * eps;
    p.seed = c.seed;
    p.antithetic = c.simulation.antithetic;
    p.absorb_at_zero = c.simulation.absorb_at_zero;
    p.threads = c.simulation.threads;
    return p;
}

std::vector<double> wealth_in_range(const MertonSolution& sol, const TableSpec& spec, double t) {
    std::vector<double> xs;
    for (double x : spec.wealth()) {
        if (x >= sol.x_min(t) && x <= sol.x_max(t)) xs.push_back(x);
    }
    return xs;
}

void check_merton(Run& run, const HeatMertonSolution& sol) {
    if (!run.checks.enabled()) return;
    const double K = sol.utility().risk_tolerance_slope_bound();
    bool mono = true, concave = true, bounded = true;
    double lo = INFINITY, hi = 0.0;
    for (double t : run.cfg.table.times) {
        double prev_m = -INFINITY, prev_mx = INFINITY;
        for (double x : wealth_in_range(sol, run.cfg.table, t)) {
            const double m = sol.value(t, x), mx = sol.marginal(t, x), r = sol.risk_tolerance(t, x);
            mono = mono && mx > 0.0 && m > prev_m;
            concave = concave && mx < prev_mx;
            bounded = bounded && r > 0.0 && r <= K * x * (1.0 + 1e-6);
            prev_m = m;
            prev_mx = mx;
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    }
    run.checks.expect(mono, "merton value increasing in wealth");
    run.checks.expect(concave, "merton value concave in wealth");
    run.checks.expect(bounded, "0 < R <= K x");
    if (hi > lo) {
        const double res = sol.pde_residual(lo, hi);
        run.checks.expect(res < kMertonResidualTol, "merton pde residual " + number_text(res) + " below " +
                                                        number_text(kMertonResidualTol));
    }
}

const ValueSlice& nearest_slice(const ValueSurface3D& v, double t) {
    const ValueSlice* best = &v.slices().front();
    for (const auto& s : v.slices()) {
        if (std::abs(s.t - t) < std::abs(best->t - t)) best = &s;
    }
    return *best;
}

double surface_at(const ValueSurface3D& v, double t, double x, double y) { return v.value(nearest_slice(v, t).t, x, y); }

struct PdePoint {
    double value = 0.0;
    double error = 0.0;
};

// Value at (t0, x0, y0); the error bar compares against doubled z spacing and
// halved step count. A fine surface already solved can be passed in.
PdePoint pde_point(const Run& run, const FactorModel& f, const ExpansionBundle& b, const Strategy* s,
                   const ValueSurface3D* fine = nullptr) {
    const auto& c = run.cfg;
    auto solve = [&](const Grid3DSpec& g) {
        return s ? solve_strategy_value(c.market, f, b, *s, g) : solve_pi0_value(c.market, f, b, g, f.epsilon());
    };
    PdePoint p;
    p.value = fine ? surface_at(*fine, c.t0, c.x0, c.y0) : surface_at(solve(c.pde.grid), c.t0, c.x0, c.y0);
    if (c.pde.error_estimate) {
        Grid3DSpec g = c.pde.grid;
        g.z_spacing *= 2.0;
        g.steps_per_epsilon /= 2.0;
        g.min_steps = std::max<std::size_t>(1, g.min_steps / 2);
        p.error = std::abs(p.value - surface_at(solve(g), c.t0, c.x0, c.y0));
    }
    return p;
}

std::vector<double> descending(std::vector<double> v) {
    std::sort(v.begin(), v.end(), std::greater<>());
    return v;
}

// ---------------------------------------------------------------------------

void solve_merton(Run& run) {
    const auto& c = run.cfg;
    std::string op = "config";
    double lam = 0.0;
    if (c.merton_sharpe) {
        lam = *c.merton_sharpe;
    } else {
        const auto density = invariant_density(c.factor, YGrid::for_factor(c.factor, c.expansion.y_sd, c.expansion.y_nodes));
        lam = lambda_bar(c.market, density);
        op = "fast_factor.lambda_bar";
    }
    run.put("sharpe", lam, op);
    std::shared_ptr<const HeatSurface> heat;
    if (c.expansion.cache_dir.empty()) {
        heat = std::make_shared<const HeatSurface>(solve_heat(c.utility, lam, c.expansion.heat));
    } else {
        heat = MertonCache(c.expansion.cache_dir).get(c.utility, lam, c.expansion.heat);
    }
    const HeatMertonSolution sol = build_merton(heat, c.utility);

    Table t("merton.HeatMertonSolution", {"t", "x", "M", "M_x", "R"});
    for (double tt : c.table.times) {
        for (double x : wealth_in_range(sol, c.table, tt)) {
            t.add({tt, x, sol.value(tt, x), sol.marginal(tt, x), sol.risk_tolerance(tt, x)});
        }
    }
    run.table("merton", t, false);

    run.put("value", sol.value(c.t0, c.x0), "merton.value");
    run.put("marginal", sol.marginal(c.t0, c.x0), "merton.marginal");
    run.put("risk_tolerance", sol.risk_tolerance(c.t0, c.x0), "merton.risk_tolerance");
    run.put("risk_tolerance_dx", sol.risk_tolerance_dx(c.t0, c.x0), "merton.risk_tolerance_dx");
    run.put("x_min", sol.x_min(c.t0), "merton.x_min");
    run.put("x_max", sol.x_max(c.t0), "merton.x_max");
    if (c.utility.is_power()) {
        const auto cf = closed_form_power(c.utility.power_gamma(), lam, c.horizon);
        run.put("closed_form_value", cf.value(c.t0, c.x0), "merton.closed_form_power");
    }
    check_merton(run, sol);
}

void inspect_factor(Run& run) {
    const auto& c = run.cfg;
    const auto b = expand(c);
    const auto& grid = b.density->grid();
    const auto y = grid.nodes();
    const auto phi = b.density->values();
    Table t("fast_factor.solve_poisson", {"y", "phi", "theta", "theta_prime", "theta1"});
    for (std::size_t i = 0; i < y.size(); ++i) {
        t.add({y[i], phi[i], b.theta.theta[i], b.theta.theta_prime[i], b.theta1.theta[i]});
    }
    run.table("factor", t, false);

    run.put("lambda_bar", b.lambda_bar, "fast_factor.lambda_bar");
    run.put("B", b.B, "fast_factor.compute_B");
    run.put("theta_sq_mean", b.theta_sq_mean, "fast_factor.average");
    run.put("theta_mean", average(b.theta.theta, *b.density), "fast_factor.average");
    run.put("poisson_residual", b.theta.residual, "fast_factor.solve_poisson");
    run.put("poisson_edge_growth", b.theta.edge_growth, "fast_factor.solve_poisson");
    run.put("theta1_residual", b.theta1.residual, "fast_factor.solve_theta1");
    run.put("density_normalization", b.density->normalization(), "fast_factor.invariant_density");

    if (run.checks.enabled()) {
        std::vector<double> ones(y.size(), 1.0);
        const double mass = average(ones, *b.density);
        run.checks.expect(std::abs(mass - 1.0) < 1e-10, "invariant density has unit mass");
        run.checks.expect(std::abs(average(b.theta.theta, *b.density)) < 1e-8, "<theta> = 0");
        double scale = 0.0;
        for (double yy : y) {
            const double l = sharpe(c.market, yy);
            scale = std::max(scale, std::abs(l * l - b.theta.source_mean));
        }
        run.checks.expect(b.theta.residual <= 0.05 * std::max(scale, 1e-12) + 1e-12,
                          "poisson residual " + number_text(b.theta.residual) + " within 5% of the source range");
        check_merton(run, *b.merton);
    }
}

void expand_cmd(Run& run) {
    const auto& c = run.cfg;
    const auto b = expand(c);
    const auto& sol = *b.merton;
    Table t("expansion", {"t", "x", "y", "v0", "v1", "first_order", "pi0", "v2_pi0", "v3_pi0"});
    bool concave = true;
    for (double tt : c.table.times) {
        const auto xs = wealth_in_range(sol, c.table, tt);
        double prev = -INFINITY, prev_slope = INFINITY;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double x = xs[i];
            const double a = v0(b, tt, x);
            if (i > 0) {
                const double slope = (a - prev) / (x - xs[i - 1]);
                concave = concave && slope > 0.0 && slope < prev_slope;
                prev_slope = slope;
            }
            prev = a;
            for (double yy : c.table.ys) {
                t.add({tt, x, yy, a, v1(b, tt, x), first_order_value(b, tt, x), pi0(b, c.market, tt, x, yy),
                       v2_pi0(b, tt, x, yy), v3_pi0(b, tt, x, yy)});
            }
        }
    }
    run.table("expansion", t, false);

    run.put("lambda_bar", b.lambda_bar, "fast_factor.lambda_bar");
    run.put("B", b.B, "fast_factor.compute_B");
    run.put("theta_sq_mean", b.theta_sq_mean, "fast_factor.average");
    run.put("epsilon", b.epsilon, "config");
    run.put("rho", b.rho, "config");
    run.put("v0", v0(b, c.t0, c.x0), "expansion.v0");
    run.put("v1", v1(b, c.t0, c.x0), "expansion.v1");
    run.put("first_order_value", first_order_value(b, c.t0, c.x0), "expansion.first_order_value");
    run.put("pi0", pi0(b, c.market, c.t0, c.x0, c.y0), "expansion.pi0");
    run.put("v2_pi0", v2_pi0(b, c.t0, c.x0, c.y0), "expansion.v2_pi0");
    run.put("v3_pi0", v3_pi0(b, c.t0, c.x0, c.y0), "expansion.v3_pi0");
    run.put("theta", theta_at(b, c.y0), "expansion.theta_at");
    run.put("theta1", theta1_at(b, c.y0), "expansion.theta1_at");

    run.checks.expect(concave, "v0 increasing and concave along the wealth table");
    if (c.factor.rho() == 0.0) run.checks.expect(v1(b, c.t0, c.x0) == 0.0, "v1 vanishes when rho = 0");
    check_merton(run, sol);
}

void simulate_cmd(Run& run) {
    const auto& c = run.cfg;
    const auto b = expand(c);
    const Strategy s = make_strategy(c.strategy, b, c.market);
    const SimResult r = simulate_value(c.market, c.factor, c.utility, s, c.x0, c.y0, c.t0, c.horizon,
                                       path_config(c, c.factor.epsilon()));
    const std::string op = "simulator.simulate_value";
    run.put("value", r.value, op);
    run.put("stderr", r.stderr_, op);
    run.put("n_paths", static_cast<double>(r.n_paths), op);
    run.put("n_absorbed", static_cast<double>(r.n_absorbed), op);
    run.put("n_steps", static_cast<double>(r.n_steps), op);
    run.put("min_terminal_wealth", r.min_terminal_wealth, op);
    run.put("max_terminal_wealth", r.max_terminal_wealth, op);
    run.put("v0", v0(b, c.t0, c.x0), "expansion.v0");
    run.put("first_order_value", first_order_value(b, c.t0, c.x0), "expansion.first_order_value");

    Table q(op, {"level", "terminal_wealth"});
    for (std::size_t i = 0; i < kQuantileLevels.size(); ++i) q.add({kQuantileLevels[i], r.wealth_quantiles[i]});
    run.table("terminal_wealth_quantiles", q, true);

    run.checks.expect(std::isfinite(r.value) && std::isfinite(r.stderr_), "simulated value finite");
    run.checks.expect(r.n_absorbed * 100 <= r.n_paths, "at most 1% of paths absorbed at zero wealth");
    check_merton(run, *b.merton);
}

void residual_cmd(Run& run) {
    const auto& c = run.cfg;
    const auto b = expand(c);
    const double eps = c.factor.epsilon();
    const Estimate e = residual(c.market, c.factor, b, c.x0, c.y0, c.t0, path_config(c, eps));
    const double approx = first_order_value(b, c.t0, c.x0);
    run.put("v0", v0(b, c.t0, c.x0), "expansion.v0");
    run.put("v1", v1(b, c.t0, c.x0), "expansion.v1");
    run.put("first_order_value", approx, "expansion.first_order_value");
    run.put("value", approx + e.value, "simulator.simulate_value");
    run.put("residual", e.value, "simulator.residual");
    run.put("stderr", e.stderr_, "simulator.residual");

    Table t("simulator.residual", {"epsilon", "value", "first_order", "residual", "stderr"});
    t.add({eps, approx + e.value, approx, e.value, e.stderr_});
    run.table("residual", t, true);
    run.checks.expect(std::isfinite(e.value) && e.stderr_ > 0.0, "residual finite with positive stderr");
    check_merton(run, *b.merton);
}

void convergence_cmd(Run& run) {
    const auto& c = run.cfg;
    const auto b = expand(c);
    const auto eps_list = descending(c.convergence.epsilons);
    const double a0 = v0(b, c.t0, c.x0), a1 = v1(b, c.t0, c.x0);
    run.put("v0", a0, "expansion.v0");
    run.put("v1", a1, "expansion.v1");

    std::vector<std::pair<std::string, std::vector<ResidualPoint>>> sets;
    auto one_method = [&](const std::string& method) {
        const bool pde = method == "pde";
        Table t(pde ? "value_pde.solve_pi0_value" : "simulator.residual",
                {"epsilon", "value", "error", "first_order", "residual"});
        std::vector<ResidualPoint> pts;
        for (double eps : eps_list) {
            const FactorModel f = c.factor.with_epsilon(eps);
            const double approx = a0 + std::sqrt(eps) * a1;
            double value = 0.0, err = 0.0;
            if (pde) {
                const PdePoint p = pde_point(run, f, b, nullptr);
                value = p.value;
                err = p.error;
            } else {
                const Estimate e = residual(c.market, f, b, c.x0, c.y0, c.t0, path_config(c, eps));
                value = approx + e.value;
                err = e.stderr_;
            }
            t.add({eps, value, err, approx, value - approx});
            pts.push_back({eps, std::abs(value - approx), err});
        }
        run.table("convergence_" + method, t, true);
        sets.emplace_back(method, std::move(pts));
    };
    if (c.convergence.method != "mc") one_method("pde");
    if (c.convergence.method != "pde") one_method("mc");

    Json slopes = Json::object();
    for (const auto& [method, pts] : sets) {
        // A noise-dominated point raises here, after the tables are on disk.
        const SlopeFit fit = convergence_slope(pts);
        const std::string op = "simulator.convergence_slope";
        slopes[method] = Json{{"slope", traced(fit.slope, op)},
                              {"intercept", traced(fit.intercept, op)},
                              {"slope_stderr", traced(fit.slope_stderr, op)},
                              {"ci_low", traced(fit.ci_low, op)},
                              {"ci_high", traced(fit.ci_high, op)},
                              {"n_points", fit.n_points}};
        bool shrinking = true;
        for (std::size_t i = 1; i < pts.size(); ++i) shrinking = shrinking && pts[i].magnitude < pts[i - 1].magnitude;
        run.checks.expect(shrinking, method + ": |E| shrinks with epsilon");
    }
    run.results["slope"] = slopes;
    check_merton(run, *b.merton);
}

void compare_cmd(Run& run) {
    const auto& c = run.cfg;
    const auto& cmp = c.compare;
    const auto b = expand(c);
    const auto eps_list = descending(cmp.epsilons);
    const Strategy p0 = Strategy::pi0(b, c.market);
    StrategySpec base_spec;
    base_spec.kind = cmp.base_scale == 1.0 ? "pi0" : "scaled_pi0";
    base_spec.scale = cmp.base_scale;
    const Strategy base = make_strategy(base_spec, b, c.market);
    const double delta = cmp.delta;
    const StrategyFn corr = [delta](double, double x, double) { return delta * x; };

    std::vector<Strategy> families;
    if (cmp.alphas.empty()) {
        families.push_back(Strategy::perturbed(base, corr, 0.0, true));
    } else {
        for (double a : cmp.alphas) families.push_back(Strategy::perturbed(base, corr, a));
    }

    // pi0 values per epsilon are shared by every family on the PDE route.
    std::vector<PdePoint> pi0_pde;
    if (cmp.method == "pde") {
        for (double eps : eps_list) pi0_pde.push_back(pde_point(run, c.factor.with_epsilon(eps), b, nullptr));
    }

    Table t(cmp.method == "mc" ? "simulator.compare_family" : "value_pde.solve_strategy_value",
            {"alpha", "epsilon", "v_tilde", "v_pi0", "delta", "delta_stderr", "delta_over_sqrt_eps",
             "delta_over_eps_2alpha", "sign"});
    Json reports = Json::array();
    for (const Strategy& fam : families) {
        FamilyReport rep;
        if (cmp.method == "mc") {
            FamilyOptions opt;
            opt.x0 = c.x0;
            opt.y0 = c.y0;
            opt.t0 = c.t0;
            opt.dt_over_epsilon = c.simulation.dt_over_epsilon;
            rep = compare_family(c.market, c.factor, b, fam, eps_list, path_config(c, eps_list.front()), opt);
        } else {
            rep.alpha = fam.alpha();
            rep.predicted = predicted_regime(fam.base_is_pi0(), fam.correction_is_zero(), fam.alpha());
            for (std::size_t k = 0; k < eps_list.size(); ++k) {
                const double eps = eps_list[k];
                const PdePoint v = pde_point(run, c.factor.with_epsilon(eps), b, &fam);
                FamilyRow row;
                row.epsilon = eps;
                row.v_tilde = v.value;
                row.v_pi0 = pi0_pde[k].value;
                row.delta = v.value - pi0_pde[k].value;
                row.delta_stderr = v.error + pi0_pde[k].error;
                row.delta_over_sqrt_eps = row.delta / std::sqrt(eps);
                row.delta_over_eps_2alpha = row.delta / std::pow(eps, 2.0 * rep.alpha);
                row.sign = row.delta < -2.0 * row.delta_stderr ? '-' : row.delta > 2.0 * row.delta_stderr ? '+' : '0';
                rep.sign_pattern.push_back(row.sign);
                rep.rows.push_back(row);
            }
            rep.consistent = regime_consistent(rep.predicted, rep.rows);
        }
        for (const auto& r : rep.rows) {
            const double sign = r.sign == '-' ? -1.0 : r.sign == '+' ? 1.0 : 0.0;
            t.add({rep.alpha, r.epsilon, r.v_tilde, r.v_pi0, r.delta, r.delta_stderr, r.delta_over_sqrt_eps,
                   r.delta_over_eps_2alpha, sign});
        }
        reports.push_back(Json{{"alpha", rep.alpha},
                               {"strategy", fam.describe()},
                               {"predicted_regime", to_string(rep.predicted)},
                               {"sign_pattern", rep.sign_pattern},
                               {"consistent", rep.consistent}});
        run.checks.expect(rep.consistent, "family alpha=" + number_text(rep.alpha) + " matches regime " +
                                              to_string(rep.predicted));
    }
    run.table("compare", t, true);
    run.results["families"] = reports;
    run.put("base_scale", cmp.base_scale, "config");
    run.put("delta", cmp.delta, "config");
    check_merton(run, *b.merton);
}

void pde_value_cmd(Run& run) {
    const auto& c = run.cfg;
    const auto b = expand(c);
    const auto& sol = *b.merton;
    const double a0 = v0(b, c.t0, c.x0);
    run.put("v0", a0, "expansion.v0");

    if (c.pde.method == "pi0") {
        const auto surf = solve_pi0_value(c.market, c.factor, b, c.pde.grid, c.factor.epsilon());
        Table t("value_pde.solve_pi0_value", {"t", "y", "x", "value", "v0", "first_order"});
        bool mono = true;
        for (double tt : c.table.times) {
            const ValueSlice& s = nearest_slice(surf, tt);
            for (double yy : c.table.ys) {
                if (yy < surf.y().front() || yy > surf.y().back()) continue;
                double prev = -INFINITY;
                for (std::size_t i = 0; i < surf.n_z(); ++i) {
                    const double x = surf.x_at(s, i);
                    if (x < c.table.x_lo || x > c.table.x_hi) continue;
                    const double v = surf.value(s.t, x, yy);
                    mono = mono && v > prev;
                    prev = v;
                    t.add({s.t, yy, x, v, v0(b, s.t, x), first_order_value(b, s.t, x)});
                }
            }
        }
        run.table("pde_slices", t, false);
        const PdePoint p = pde_point(run, c.factor, b, nullptr, &surf);
        const double approx = first_order_value(b, c.t0, c.x0);
        run.put("value", p.value, "value_pde.solve_pi0_value");
        run.put("grid_error", p.error, "value_pde.solve_pi0_value");
        run.put("first_order_value", approx, "expansion.first_order_value");
        run.put("residual", p.value - approx, "value_pde.solve_pi0_value");
        run.put("n_steps", static_cast<double>(surf.n_steps()), "value_pde.solve_pi0_value");
        run.checks.expect(mono, "value increasing in wealth on every slice");
    } else if (c.pde.method == "averaged") {
        const Strategy s = make_strategy(c.pde.strategy, b, c.market);
        const auto surf = solve_averaged_v0(s, c.market, *b.density, c.utility, c.pde.averaged);
        Table t("value_pde.solve_averaged_v0", {"t", "x", "value", "v0"});
        bool mono = true;
        for (double tt : c.table.times) {
            double prev = -INFINITY;
            for (double x : wealth_in_range(sol, c.table, tt)) {
                const double v = surf.value(tt, x);
                mono = mono && v > prev;
                prev = v;
                t.add({tt, x, v, v0(b, tt, x)});
            }
        }
        run.table("pde_slices", t, false);
        const double v = surf.value(c.t0, c.x0);
        run.put("value", v, "value_pde.solve_averaged_v0");
        run.put("gap", v - a0, "value_pde.solve_averaged_v0");
        run.checks.expect(mono, "averaged value increasing in wealth");
        if (c.pde.strategy.kind != "pi0") {
            run.checks.expect(v <= a0 * (1.0 + 1e-6) + 1e-12, "averaged value of a suboptimal strategy below v0");
        }
    } else {
        const double d = c.pde.delta;
        const auto loss = solve_loss_2alpha([d](double, double x, double) { return d * x; }, c.market, b,
                                            c.pde.loss_drift);
        Table t("value_pde.solve_loss_2alpha", {"t", "x", "w"});
        bool nonpositive = true;
        for (double tt : c.table.times) {
            for (double x : wealth_in_range(sol, c.table, tt)) {
                const double w = loss.value(tt, x);
                nonpositive = nonpositive && w <= 1e-12;
                t.add({tt, x, w});
            }
        }
        run.table("pde_slices", t, false);
        run.put("value", loss.value(c.t0, c.x0), "value_pde.solve_loss_2alpha");
        run.checks.expect(nonpositive, "loss corrector nonpositive");
    }
    check_merton(run, sol);
}

}  // namespace

Json run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
    const auto report =
        validate_model(cfg.market, cfg.factor, YGrid::for_factor(cfg.factor, cfg.expansion.y_sd, cfg.expansion.y_nodes));
    if (!report.passed()) throw ConfigError("market: " + report.summary());

    std::filesystem::create_directories(cfg.output_dir);
    Run run{cfg, Checks(options.check)};
    switch (cfg.experiment) {
        case Experiment::SolveMerton: solve_merton(run); break;
        case Experiment::InspectFactor: inspect_factor(run); break;
        case Experiment::Expand: expand_cmd(run); break;
        case Experiment::Simulate: simulate_cmd(run); break;
        case Experiment::Residual: residual_cmd(run); break;
        case Experiment::Convergence: convergence_cmd(run); break;
        case Experiment::Compare: compare_cmd(run); break;
        case Experiment::PdeValue: pde_value_cmd(run); break;
    }

    Json summary;
    summary["schema_version"] = kSchemaVersion;
    summary["experiment"] = to_string(cfg.experiment);
    summary["seed"] = cfg.seed;
    summary["config"] = cfg.echo;
    summary["results"] = run.results;
    summary["tables"] = run.tables;
    summary["files"] = run.files;
    if (options.check) summary["checks"] = run.checks.to_json();
    write_text(cfg.output_dir / "summary.json", summary.dump(2));
    run.checks.raise();
    return summary;
}

}  // namespace fastmr::cli
