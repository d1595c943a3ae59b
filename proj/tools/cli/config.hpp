#pragma once

#include "fastmr/expansion.hpp"
#include "fastmr/market_model.hpp"
#include "fastmr/merton.hpp"
#include "fastmr/simulator.hpp"
#include "fastmr/utility.hpp"
#include "fastmr/value_pde.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fastmr::cli {

inline constexpr int kSchemaVersion = 1;

/// Config problems; the message names the offending key path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat key/value view of an INI-style file. Keys are "section.name".
class KeyValues {
public:
    static KeyValues parse_file(const std::filesystem::path& path);
    static KeyValues parse_string(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string text(const std::string& key) const;
    std::string text_or(const std::string& key, const std::string& fallback) const;
    double number(const std::string& key) const;
    double number_or(const std::string& key, double fallback) const;
    std::size_t count_or(const std::string& key, std::size_t fallback) const;
    bool flag_or(const std::string& key, bool fallback) const;
    std::vector<double> numbers(const std::string& key) const;
    std::vector<double> numbers_or(const std::string& key, std::vector<double> fallback) const;

    /// Command-line overrides; replaces any value from the file.
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    /// Throws ConfigError for keys never read.
    void reject_unread() const;
    const std::map<std::string, std::string>& raw() const { return values_; }

private:
    const std::string& lookup(const std::string& key) const;

    std::map<std::string, std::string> values_;
    mutable std::map<std::string, bool> read_;
};

enum class Experiment { SolveMerton, InspectFactor, Expand, Simulate, Residual, Convergence, Compare, PdeValue };

std::string to_string(Experiment e);
Experiment parse_experiment(const std::string& name);

struct StrategySpec {
    /// pi0, scaled_pi0, constant_proportion or zero.
    std::string kind = "pi0";
    double scale = 1.0;
    double proportion = 0.0;
};

struct SimulationSpec {
    std::size_t n_paths = 100000;
    double dt_over_epsilon = 1.0 / 20.0;
    bool antithetic = true;
    bool absorb_at_zero = true;
    unsigned threads = 0;
};

struct ConvergenceSpec {
    std::vector<double> epsilons = {0.4, 0.2, 0.1, 0.05};
    /// pde, mc or both.
    std::string method = "pde";
};

struct CompareSpec {
    std::vector<double> epsilons = {0.4, 0.2, 0.1, 0.05};
    /// Base is base_scale * pi0; 1 means pi0 itself.
    double base_scale = 1.0;
    /// Correction delta * x at rate eps^alpha, one family per alpha.
    double delta = 0.5;
    std::vector<double> alphas;
    /// mc or pde.
    std::string method = "mc";
};

struct PdeSpec {
    /// pi0, averaged or loss2alpha.
    std::string method = "pi0";
    Grid3DSpec grid;
    AveragedGridSpec averaged;
    StrategySpec strategy;
    /// pi1 = delta * x for loss2alpha.
    double delta = 0.5;
    LossDrift loss_drift = LossDrift::LambdaBarSquared;
    /// Grid refinement pair for an error bar on 3D values.
    bool error_estimate = true;
};

/// Where CSV tables are sampled: times x log-spaced wealth x factor levels.
struct TableSpec {
    std::vector<double> times = {0.0};
    double x_lo = 0.1;
    double x_hi = 10.0;
    std::size_t n_x = 41;
    std::vector<double> ys;

    std::vector<double> wealth() const;
};

struct ExperimentConfig {
    Experiment experiment = Experiment::Expand;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 20240611;
    double horizon = 1.0;

    MarketMap market = MarketMap::constant(0.08, 0.2);
    FactorModel factor = FactorModel::ou(0.0, 1.0, 0.1, 0.0);
    Utility utility = Utility::power(0.5);
    /// Raw blocks echoed into summary.json.
    std::map<std::string, std::string> echo;

    ExpansionOptions expansion;
    HjbGridSpec hjb;
    /// Sharpe ratio for solve-merton; defaults to lambda_bar.
    std::optional<double> merton_sharpe;
    TableSpec table;

    double x0 = 1.0;
    double y0 = 0.0;
    double t0 = 0.0;

    StrategySpec strategy;
    SimulationSpec simulation;
    ConvergenceSpec convergence;
    CompareSpec compare;
    PdeSpec pde;
};

/// Builds and validates an experiment from key/values. Throws ConfigError.
ExperimentConfig load_config(const KeyValues& kv);

}  // namespace fastmr::cli
