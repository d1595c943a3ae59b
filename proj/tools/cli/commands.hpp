#pragma once

#include "config.hpp"
#include "output.hpp"

#include <stdexcept>

namespace fastmr::cli {

/// An invariant recomputed under --check did not hold.
class CheckFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunOptions {
    bool check = false;
};

/// Runs one experiment, writes summary.json and CSV files into cfg.output_dir
/// and returns the summary. Throws ConfigError, NumericError or CheckFailure.
Json run_experiment(const ExperimentConfig& cfg, const RunOptions& options);

}  // namespace fastmr::cli
