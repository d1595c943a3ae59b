// fastmr: batch driver for fast mean-reverting factor portfolio experiments.
//
//   fastmr <subcommand> --config FILE [--out DIR] [--seed N] [--threads N] [--check] [--cache DIR]
//
// Exit status: 0 success, 2 config/validation error, 3 numerical failure or failed --check.

#include "commands.hpp"
#include "config.hpp"

#include "fastmr/errors.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

using namespace fastmr;
using namespace fastmr::cli;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Args {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string cache;
    std::string method;
    bool check = false;
};

void print_results(const Json& results, const std::string& prefix) {
    for (const auto& [name, v] : results.items()) {
        if (v.is_object() && v.contains("value") && v.contains("op")) {
            std::cout << "  " << prefix << name << " = " << number_text(v["value"].get<double>()) << "\n";
        } else if (v.is_object()) {
            print_results(v, prefix + name + ".");
        } else if (name == "families") {
            for (const auto& f : v) {
                std::cout << "  alpha " << number_text(f["alpha"].get<double>()) << ": "
                          << f["predicted_regime"].get<std::string>() << ", signs "
                          << f["sign_pattern"].get<std::string>()
                          << (f["consistent"].get<bool>() ? ", consistent" : ", NOT consistent") << "\n";
            }
        }
    }
}

int run(const std::string& subcommand, const Args& a) {
    KeyValues kv = KeyValues::parse_file(a.config);
    if (subcommand != "run") {
        if (kv.has("experiment") && kv.text("experiment") != subcommand) {
            throw ConfigError("experiment: config names '" + kv.text("experiment") + "' but the subcommand is '" +
                              subcommand + "'");
        }
        kv.set("experiment", subcommand);
    }
    if (!a.method.empty()) kv.set("pde.method", a.method);

    ExperimentConfig cfg;
    try {
        cfg = load_config(kv);
    } catch (const NumericError& e) {
        // Model parameters rejected by a module constructor.
        throw ConfigError(e.what());
    }
    if (!a.out.empty()) cfg.output_dir = a.out;
    if (a.seed) cfg.seed = *a.seed;
    if (a.threads) cfg.simulation.threads = *a.threads;
    if (!a.cache.empty()) cfg.expansion.cache_dir = a.cache;

    RunOptions opts;
    opts.check = a.check;
    const Json summary = run_experiment(cfg, opts);
    std::cout << to_string(cfg.experiment) << ": wrote " << (cfg.output_dir / "summary.json").string() << "\n";
    print_results(summary["results"], "");
    if (a.check) std::cout << "  checks passed: " << summary["checks"].size() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Portfolio optimization under a fast mean-reverting factor: Merton solves, asymptotic "
                 "expansion, Monte Carlo and PDE strategy values."};
    app.require_subcommand(1);

    Args args;
    const std::vector<std::pair<std::string, std::string>> subcommands = {
        {"run", "run the experiment named in the config"},
        {"solve-merton", "Merton value, marginal and risk tolerance tables"},
        {"inspect-factor", "invariant density, Poisson solution, lambda_bar and B"},
        {"expand", "v0, v1 and pi0 slices with the expansion constants"},
        {"simulate", "Monte Carlo value of one strategy"},
        {"residual", "simulated pi0 value minus v0 + sqrt(eps) v1"},
        {"convergence", "residual across epsilon and its log-log slope"},
        {"compare", "perturbed strategy families against pi0"},
        {"pde-value", "strategy value from the PDE solvers"},
    };
    for (const auto& [name, help] : subcommands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", args.config, "experiment config file")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--out", args.out, "output directory (overrides output_dir)");
        sub->add_option("--seed", args.seed, "random seed (overrides seed)");
        sub->add_option("--threads", args.threads, "simulation threads, 0 = all cores");
        sub->add_option("--cache", args.cache, "directory for cached Merton heat surfaces");
        sub->add_flag("--check", args.check, "recompute cheap invariants and fail on violation");
        if (name == "pde-value" || name == "run") {
            sub->add_option("--method", args.method, "pi0, averaged or loss2alpha")
                ->check(CLI::IsMember({"pi0", "averaged", "loss2alpha"}));
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        return run(name, args);
    } catch (const ConfigError& e) {
        std::cerr << "fastmr: config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "fastmr: numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const CheckFailure& e) {
        std::cerr << "fastmr: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "fastmr: " << e.what() << "\n";
        return 1;
    }
}
