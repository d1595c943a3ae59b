#include "config.hpp"

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fastmr::cli {

namespace pt = boost::property_tree;

namespace {

void flatten(const pt::ptree& tree, const std::string& prefix, std::map<std::string, std::string>& out) {
    for (const auto& [name, child] : tree) {
        const std::string key = prefix.empty() ? name : prefix + "." + name;
        if (child.empty()) {
            out[key] = boost::algorithm::trim_copy(child.data());
        } else {
            flatten(child, key, out);
        }
    }
}

double to_number(const std::string& key, const std::string& text) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw ConfigError(key + ": expected a finite number, got '" + text + "'");
    }
    return v;
}

}  // namespace

KeyValues KeyValues::parse_string(const std::string& text) {
    KeyValues kv;
    if (text.empty()) return kv;
    std::istringstream in(text);
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config: " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    flatten(tree, "", kv.values_);
    return kv;
}

KeyValues KeyValues::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_string(text.str());
}

const std::string& KeyValues::lookup(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required key " + key);
    read_[key] = true;
    return it->second;
}

std::string KeyValues::text(const std::string& key) const { return lookup(key); }

std::string KeyValues::text_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? lookup(key) : fallback;
}

double KeyValues::number(const std::string& key) const { return to_number(key, lookup(key)); }

double KeyValues::number_or(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
}

std::size_t KeyValues::count_or(const std::string& key, std::size_t fallback) const {
    if (!has(key)) return fallback;
    const double v = number(key);
    if (v < 0.0 || v != std::floor(v)) throw ConfigError(key + ": expected a nonnegative integer");
    return static_cast<std::size_t>(v);
}

bool KeyValues::flag_or(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = lookup(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> KeyValues::numbers(const std::string& key) const {
    const std::string& v = lookup(key);
    std::vector<double> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        boost::algorithm::trim(item);
        if (!item.empty()) out.push_back(to_number(key, item));
    }
    return out;
}

std::vector<double> KeyValues::numbers_or(const std::string& key, std::vector<double> fallback) const {
    return has(key) ? numbers(key) : std::move(fallback);
}

void KeyValues::reject_unread() const {
    for (const auto& [k, v] : values_) {
        if (!read_.count(k)) throw ConfigError("unknown key " + k);
    }
}

std::string to_string(Experiment e) {
    switch (e) {
        case Experiment::SolveMerton: return "solve-merton";
        case Experiment::InspectFactor: return "inspect-factor";
        case Experiment::Expand: return "expand";
        case Experiment::Simulate: return "simulate";
        case Experiment::Residual: return "residual";
        case Experiment::Convergence: return "convergence";
        case Experiment::Compare: return "compare";
        case Experiment::PdeValue: return "pde-value";
    }
    return "unknown";
}

Experiment parse_experiment(const std::string& name) {
    for (auto e : {Experiment::SolveMerton, Experiment::InspectFactor, Experiment::Expand, Experiment::Simulate,
                   Experiment::Residual, Experiment::Convergence, Experiment::Compare, Experiment::PdeValue}) {
        if (to_string(e) == name) return e;
    }
    throw ConfigError("experiment: unknown kind '" + name + "'");
}

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

MarketMap load_market(const KeyValues& kv) {
    const std::string kind = kv.text("market.kind");
    // Positional form: market.params lists the named parameters in order.
    if (kv.has("market.params")) {
        const auto p = kv.numbers("market.params");
        auto need = [&](std::size_t n) {
            require(p.size() == n, "market.params: " + kind + " takes " + std::to_string(n) + " values");
        };
        if (kind == "constant") {
            need(2);
            return MarketMap::constant(p[0], p[1]);
        }
        if (kind == "affine") {
            need(4);
            return MarketMap::affine(p[0], p[1], p[2], p[3]);
        }
        if (kind == "sigmoid") {
            need(6);
            return MarketMap::sigmoid(p[0], p[1], p[2], p[3], p[4], p[5]);
        }
        throw ConfigError("market.params: not available for kind '" + kind + "'");
    }
    if (kind == "constant") return MarketMap::constant(kv.number("market.mu"), kv.number("market.sigma"));
    if (kind == "affine") {
        return MarketMap::affine(kv.number("market.mu0"), kv.number("market.mu1"), kv.number("market.sigma0"),
                                 kv.number_or("market.sigma1", 0.0));
    }
    if (kind == "sigmoid") {
        return MarketMap::sigmoid(kv.number("market.mu_lo"), kv.number("market.mu_hi"), kv.number("market.sigma_lo"),
                                  kv.number("market.sigma_hi"), kv.number_or("market.center", 0.0),
                                  kv.number("market.steepness"));
    }
    if (kind == "tabulated") {
        auto y = kv.numbers("market.y");
        auto mu = kv.numbers("market.mu");
        auto sigma = kv.numbers("market.sigma");
        require(y.size() >= 2 && mu.size() == y.size() && sigma.size() == y.size(),
                "market.y, market.mu, market.sigma: equal lengths >= 2 required");
        for (std::size_t i = 1; i < y.size(); ++i) require(y[i] > y[i - 1], "market.y: must be increasing");
        return MarketMap::tabulated(std::move(y), std::move(mu), std::move(sigma));
    }
    throw ConfigError("market.kind: unknown kind '" + kind + "'");
}

FactorModel load_factor(const KeyValues& kv) {
    const std::string kind = kv.text_or("factor.kind", "ou");
    require(kind == "ou", "factor.kind: only 'ou' is supported from config files");
    const double nu = kv.number("factor.nu");
    const double eps = kv.number("factor.epsilon");
    const double rho = kv.number_or("factor.rho", 0.0);
    require(nu > 0.0, "factor.nu: must be positive");
    require(eps > 0.0, "factor.epsilon: must be positive");
    require(std::abs(rho) < 1.0, "factor.rho: must lie in (-1, 1)");
    return FactorModel::ou(kv.number_or("factor.m", 0.0), nu, eps, rho);
}

Utility load_utility(const KeyValues& kv) {
    const std::string kind = kv.text("utility.kind");
    auto check_gamma = [](double g, const std::string& key) {
        require(g > 0.0 && g < 1.0, key + ": must lie in (0, 1)");
    };
    if (kind == "power") {
        const double g = kv.number("utility.gamma");
        check_gamma(g, "utility.gamma");
        return Utility::power(g);
    }
    if (kind == "mixture") {
        const auto w = kv.numbers("utility.weights");
        const auto g = kv.numbers("utility.gammas");
        require(!w.empty() && w.size() == g.size(), "utility.weights, utility.gammas: equal nonzero lengths required");
        std::vector<PowerTerm> terms;
        for (std::size_t i = 0; i < w.size(); ++i) {
            require(w[i] > 0.0, "utility.weights: must be positive");
            check_gamma(g[i], "utility.gammas");
            terms.push_back({w[i], g[i]});
        }
        return Utility::mixture(std::move(terms));
    }
    throw ConfigError("utility.kind: unknown kind '" + kind + "'");
}

StrategySpec load_strategy(const KeyValues& kv, const std::string& prefix) {
    StrategySpec s;
    s.kind = kv.text_or(prefix + ".strategy", "pi0");
    if (s.kind == "scaled_pi0") {
        s.scale = kv.number(prefix + ".scale");
    } else if (s.kind == "constant_proportion") {
        s.proportion = kv.number(prefix + ".proportion");
    } else {
        require(s.kind == "pi0" || s.kind == "zero", prefix + ".strategy: unknown strategy '" + s.kind + "'");
    }
    return s;
}

}  // namespace

std::vector<double> TableSpec::wealth() const {
    std::vector<double> x(n_x);
    const double step = std::log(x_hi / x_lo) / static_cast<double>(n_x - 1);
    for (std::size_t i = 0; i < n_x; ++i) x[i] = x_lo * std::exp(step * static_cast<double>(i));
    x.back() = x_hi;
    return x;
}

ExperimentConfig load_config(const KeyValues& kv) {
    if (!kv.has("schema_version")) throw ConfigError("missing required key schema_version");
    const double version = kv.number("schema_version");
    if (version != kSchemaVersion) {
        throw ConfigError("schema_version: expected " + std::to_string(kSchemaVersion) + ", got " +
                          kv.text("schema_version"));
    }
    ExperimentConfig c;
    c.experiment = parse_experiment(kv.text("experiment"));
    c.output_dir = kv.text_or("output_dir", "out/" + to_string(c.experiment));
    const double seed = kv.number_or("seed", 20240611.0);
    require(seed >= 0.0 && seed == std::floor(seed) && seed < 9.007199254740992e15, "seed: expected an integer");
    c.seed = static_cast<std::uint64_t>(seed);
    c.horizon = kv.number_or("horizon", 1.0);
    require(c.horizon > 0.0, "horizon: must be positive");

    c.market = load_market(kv);
    c.factor = load_factor(kv);
    c.utility = load_utility(kv);

    c.expansion.heat.horizon = c.horizon;
    c.expansion.heat.n_z = kv.count_or("merton.n_z", c.expansion.heat.n_z);
    c.expansion.heat.n_t = kv.count_or("merton.n_t", c.expansion.heat.n_t);
    c.expansion.heat.x_min_target = kv.number_or("merton.x_min", c.expansion.heat.x_min_target);
    c.expansion.heat.x_max_target = kv.number_or("merton.x_max", c.expansion.heat.x_max_target);
    require(c.expansion.heat.n_z >= 11 && c.expansion.heat.n_t >= 2, "merton.n_z, merton.n_t: grid too small");
    require(c.expansion.heat.x_min_target > 0.0 && c.expansion.heat.x_max_target > c.expansion.heat.x_min_target,
            "merton.x_min, merton.x_max: need 0 < x_min < x_max");
    c.expansion.y_sd = kv.number_or("factor_grid.n_sd", c.expansion.y_sd);
    c.expansion.y_nodes = kv.count_or("factor_grid.n_nodes", c.expansion.y_nodes);
    require(c.expansion.y_nodes >= 11, "factor_grid.n_nodes: at least 11 nodes");
    c.hjb.horizon = c.horizon;
    c.hjb.n_x = kv.count_or("merton.hjb_n_x", c.hjb.n_x);
    c.hjb.n_t = kv.count_or("merton.hjb_n_t", c.hjb.n_t);

    c.x0 = kv.number_or("point.x0", 1.0);
    c.y0 = kv.number_or("point.y0", 0.0);
    c.t0 = kv.number_or("point.t0", 0.0);
    require(c.x0 > 0.0, "point.x0: must be positive");
    require(c.t0 >= 0.0 && c.t0 <= c.horizon, "point.t0: must lie in [0, horizon]");

    const bool simulates = c.experiment == Experiment::Simulate || c.experiment == Experiment::Residual ||
                           c.experiment == Experiment::Convergence || c.experiment == Experiment::Compare;
    if (simulates) {
        c.simulation.n_paths = kv.count_or("simulation.n_paths", c.simulation.n_paths);
        c.simulation.dt_over_epsilon = kv.number_or("simulation.dt_over_epsilon", c.simulation.dt_over_epsilon);
        c.simulation.antithetic = kv.flag_or("simulation.antithetic", true);
        c.simulation.absorb_at_zero = kv.flag_or("simulation.absorb_at_zero", true);
        c.simulation.threads = static_cast<unsigned>(kv.count_or("simulation.threads", 0));
        require(c.simulation.n_paths >= 2, "simulation.n_paths: at least 2 paths");
        require(c.simulation.dt_over_epsilon > 0.0 && c.simulation.dt_over_epsilon <= 1.0 / 20.0,
                "simulation.dt_over_epsilon: must lie in (0, 1/20]");
    }
    if (c.experiment == Experiment::Simulate) c.strategy = load_strategy(kv, "simulation");

    if (c.experiment == Experiment::Convergence) {
        c.convergence.epsilons = kv.numbers_or("convergence.epsilons", c.convergence.epsilons);
        c.convergence.method = kv.text_or("convergence.method", c.convergence.method);
        require(c.convergence.epsilons.size() >= 3, "convergence.epsilons: at least 3 values");
        require(c.convergence.method == "pde" || c.convergence.method == "mc" || c.convergence.method == "both",
                "convergence.method: expected pde, mc or both");
    }
    if (c.experiment == Experiment::Compare) {
        c.compare.epsilons = kv.numbers_or("compare.epsilons", c.compare.epsilons);
        c.compare.base_scale = kv.number_or("compare.base_scale", 1.0);
        c.compare.delta = kv.number_or("compare.delta", 0.5);
        c.compare.alphas = kv.numbers_or("compare.alphas", {});
        c.compare.method = kv.text_or("compare.method", "mc");
        require(!c.compare.epsilons.empty(), "compare.epsilons: at least one value");
        require(c.compare.method == "mc" || c.compare.method == "pde", "compare.method: expected mc or pde");
        require(!c.compare.alphas.empty() || c.compare.base_scale != 1.0,
                "compare.alphas: needed unless compare.base_scale differs from 1");
        for (double a : c.compare.alphas) require(a > 0.0, "compare.alphas: must be positive");
    }
    const bool uses_pde = c.experiment == Experiment::PdeValue || c.experiment == Experiment::Convergence ||
                          c.experiment == Experiment::Compare;
    if (uses_pde) {
        auto& g = c.pde.grid;
        g.z_spacing = kv.number_or("pde.z_spacing", g.z_spacing);
        g.n_y = kv.count_or("pde.n_y", g.n_y);
        g.y_sd = kv.number_or("pde.y_sd", g.y_sd);
        g.steps_per_epsilon = kv.number_or("pde.steps_per_epsilon", g.steps_per_epsilon);
        g.min_steps = kv.count_or("pde.min_steps", g.min_steps);
        g.theta = kv.number_or("pde.theta", g.theta);
        g.upwind = kv.flag_or("pde.upwind", g.upwind);
        require(g.z_spacing > 0.0, "pde.z_spacing: must be positive");
        require(g.n_y >= 5, "pde.n_y: at least 5 nodes");
        require(g.theta >= 0.5 && g.theta <= 1.0, "pde.theta: must lie in [0.5, 1]");
    }
    if (uses_pde) c.pde.error_estimate = kv.flag_or("pde.error_estimate", true);
    if (c.experiment == Experiment::PdeValue) {
        c.pde.method = kv.text_or("pde.method", "pi0");
        require(c.pde.method == "pi0" || c.pde.method == "averaged" || c.pde.method == "loss2alpha",
                "pde.method: expected pi0, averaged or loss2alpha");
        // Read for every method so one file can serve all three via --method.
        c.pde.strategy = load_strategy(kv, "pde");
        c.pde.delta = kv.number_or("pde.delta", 0.5);
        const std::string drift = kv.text_or("pde.loss_drift", "lambda_bar_squared");
        require(drift == "lambda_bar_squared" || drift == "lambda_bar",
                "pde.loss_drift: expected lambda_bar_squared or lambda_bar");
        c.pde.loss_drift = drift == "lambda_bar" ? LossDrift::LambdaBar : LossDrift::LambdaBarSquared;
        c.pde.averaged.n_x = kv.count_or("pde.averaged_n_x", c.pde.averaged.n_x);
        c.pde.averaged.n_t = kv.count_or("pde.averaged_n_t", c.pde.averaged.n_t);
        c.pde.averaged.horizon = c.horizon;
        c.pde.averaged.epsilon = c.factor.epsilon();
    }

    if (c.experiment == Experiment::SolveMerton && kv.has("merton.sharpe")) {
        c.merton_sharpe = kv.number("merton.sharpe");
        require(*c.merton_sharpe > 0.0, "merton.sharpe: must be positive");
    }
    c.table.times = kv.numbers_or("output.times", {c.t0});
    c.table.x_lo = kv.number_or("output.x_lo", c.table.x_lo);
    c.table.x_hi = kv.number_or("output.x_hi", c.table.x_hi);
    c.table.n_x = kv.count_or("output.n_x", c.table.n_x);
    c.table.ys = kv.numbers_or("output.ys", {c.y0});
    require(c.table.x_lo > 0.0 && c.table.x_hi > c.table.x_lo, "output.x_lo, output.x_hi: need 0 < x_lo < x_hi");
    require(c.table.n_x >= 2, "output.n_x: at least 2 points");
    require(!c.table.times.empty() && !c.table.ys.empty(), "output.times, output.ys: at least one value each");
    for (double t : c.table.times) require(t >= 0.0 && t <= c.horizon, "output.times: outside [0, horizon]");
    c.pde.grid.output_times = c.table.times;
    c.pde.grid.output_times.push_back(c.t0);

    kv.reject_unread();
    for (const auto& [k, v] : kv.raw()) c.echo[k] = v;
    return c;
}

}  // namespace fastmr::cli
