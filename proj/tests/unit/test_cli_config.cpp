#include "cli/config.hpp"

#include <gtest/gtest.h>

#include <string>

using namespace fastmr::cli;

namespace {

const std::string kBase = R"(schema_version = 1
experiment = expand
seed = 5

[market]
kind = affine
mu0 = 0.0
mu1 = 1.0
sigma0 = 1.0

[factor]
m = 0.1
nu = 0.4
rho = -0.5
epsilon = 0.1

[utility]
kind = power
gamma = 0.5
)";

std::string message_of(const std::string& text) {
    try {
        load_config(KeyValues::parse_string(text));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(CliConfig, LoadsBaseExperiment) {
    const auto c = load_config(KeyValues::parse_string(kBase));
    EXPECT_EQ(c.experiment, Experiment::Expand);
    EXPECT_EQ(c.seed, 5u);
    EXPECT_DOUBLE_EQ(c.factor.ou_mean(), 0.1);
    EXPECT_DOUBLE_EQ(c.factor.epsilon(), 0.1);
    EXPECT_DOUBLE_EQ(c.market.lambda(0.3), 0.3);
    EXPECT_TRUE(c.utility.is_power());
    EXPECT_EQ(c.echo.at("factor.nu"), "0.4");
}

TEST(CliConfig, MissingKeyNamesThePath) {
    std::string text = kBase;
    text.erase(text.find("nu = 0.4\n"), 9);
    EXPECT_NE(message_of(text).find("factor.nu"), std::string::npos);
}

TEST(CliConfig, UnknownKeyRejected) {
    EXPECT_NE(message_of(kBase + "[simulation]\nn_paths = 10\n").find("simulation.n_paths"), std::string::npos);
    EXPECT_NE(message_of(kBase + "typo = 1\n").find("typo"), std::string::npos);
}

TEST(CliConfig, SchemaVersionMustMatch) {
    std::string text = kBase;
    text.replace(0, 18, "schema_version = 7");
    EXPECT_NE(message_of(text).find("schema_version"), std::string::npos);
    text.erase(0, text.find('\n') + 1);
    EXPECT_NE(message_of(text).find("schema_version"), std::string::npos);
}

TEST(CliConfig, PositionalMarketParams) {
    std::string text = kBase;
    const auto at = text.find("mu0");
    text.replace(at, text.find("[factor]") - at, "params = 0.02, 0.5, 0.2, 0.0\n\n");
    const auto c = load_config(KeyValues::parse_string(text));
    EXPECT_DOUBLE_EQ(c.market.mu(1.0), 0.52);
    EXPECT_DOUBLE_EQ(c.market.sigma(1.0), 0.2);
}

TEST(CliConfig, ListsAndRanges) {
    auto c = load_config(KeyValues::parse_string(
        kBase + "[output]\ntimes = 0, 0.25 ,0.5\nys = -1, 1\n"));
    EXPECT_EQ(c.table.times, (std::vector<double>{0.0, 0.25, 0.5}));
    EXPECT_EQ(c.table.ys.size(), 2u);
    const auto x = c.table.wealth();
    EXPECT_DOUBLE_EQ(x.front(), c.table.x_lo);
    EXPECT_DOUBLE_EQ(x.back(), c.table.x_hi);
    EXPECT_NE(message_of(kBase + "[output]\ntimes = 0, 2\n").find("output.times"), std::string::npos);
    EXPECT_NE(message_of(kBase + "[output]\nn_x = 2.5\n").find("output.n_x"), std::string::npos);
}

TEST(CliConfig, BadValuesNameTheKey) {
    std::string text = kBase;
    text.replace(text.find("gamma = 0.5"), 11, "gamma = 1.5");
    EXPECT_NE(message_of(text).find("utility.gamma"), std::string::npos);
    text = kBase;
    text.replace(text.find("epsilon = 0.1"), 13, "epsilon = abc");
    EXPECT_NE(message_of(text).find("factor.epsilon"), std::string::npos);
}

TEST(CliConfig, ExperimentBlocksRequired) {
    std::string text = kBase;
    text.replace(text.find("experiment = expand"), 19, "experiment = compare");
    // compare needs alphas unless the base is rescaled
    EXPECT_NE(message_of(text).find("compare.alphas"), std::string::npos);
    const auto c = load_config(KeyValues::parse_string(text + "[compare]\nalphas = 0.25\n"));
    EXPECT_EQ(c.compare.alphas.size(), 1u);
    EXPECT_NE(message_of(kBase + "[pde]\nmethod = pi0\n").find("pde.method"), std::string::npos);
}

TEST(CliConfig, PdeMethodReadsEveryPdeKey) {
    std::string text = kBase;
    text.replace(text.find("experiment = expand"), 19, "experiment = pde-value");
    text += "[pde]\nmethod = loss2alpha\nstrategy = scaled_pi0\nscale = 0.5\ndelta = 0.25\nloss_drift = lambda_bar\n";
    const auto c = load_config(KeyValues::parse_string(text));
    EXPECT_EQ(c.pde.method, "loss2alpha");
    EXPECT_DOUBLE_EQ(c.pde.delta, 0.25);
    EXPECT_DOUBLE_EQ(c.pde.strategy.scale, 0.5);
    EXPECT_EQ(c.pde.loss_drift, fastmr::LossDrift::LambdaBar);
}
