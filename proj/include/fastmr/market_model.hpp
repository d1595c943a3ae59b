#pragma once

#include "fastmr/numerics.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fastmr {

/// Return and volatility of the risky asset as functions of the factor level y.
class MarketMap {
public:
    struct Constant {
        double mu;
        double sigma;
    };
    /// mu(y) = mu0 + mu1*y, sigma(y) = sigma0 + sigma1*y.
    struct Affine {
        double mu0;
        double mu1;
        double sigma0;
        double sigma1;
    };
    /// Both maps move between a low and a high level along a logistic in y.
    struct Sigmoid {
        double mu_lo;
        double mu_hi;
        double sigma_lo;
        double sigma_hi;
        double center;
        double steepness;
    };
    struct Tabulated {
        numerics::MonotoneCubic mu;
        numerics::MonotoneCubic sigma;
    };

    static MarketMap constant(double mu, double sigma);
    static MarketMap affine(double mu0, double mu1, double sigma0, double sigma1);
    static MarketMap sigmoid(double mu_lo, double mu_hi, double sigma_lo, double sigma_hi,
                             double center, double steepness);
    static MarketMap tabulated(std::vector<double> y, std::vector<double> mu, std::vector<double> sigma);

    double mu(double y) const;
    double sigma(double y) const;
    /// mu/sigma without the positivity check; see sharpe() for the checked form.
    double lambda(double y) const { return mu(y) / sigma(y); }

    std::string kind() const;
    /// True when lambda does not depend on y.
    bool has_constant_sharpe() const;

private:
    using Repr = std::variant<Constant, Affine, Sigmoid, Tabulated>;
    explicit MarketMap(Repr repr) : repr_(std::move(repr)) {}

    Repr repr_;
};

/// Fast factor dY = b(Y)/eps dt + a(Y)/sqrt(eps) dW^Y, corr(dW, dW^Y) = rho.
class FactorModel {
public:
    /// Ornstein-Uhlenbeck: b(y) = m - y, a(y) = nu*sqrt(2); invariant law N(m, nu^2).
    static FactorModel ou(double m, double nu, double epsilon, double rho);
    /// Arbitrary drift/diffusion. center and scale locate the bulk of the
    /// invariant law for default grid construction.
    static FactorModel general(std::function<double(double)> b, std::function<double(double)> a,
                               double epsilon, double rho, double center, double scale);

    double b(double y) const;
    double a(double y) const;

    double epsilon() const { return epsilon_; }
    double rho() const { return rho_; }
    bool is_ou() const { return !b_; }
    double ou_mean() const { return m_; }
    double ou_nu() const { return nu_; }
    double center() const { return m_; }
    double scale() const { return nu_; }

    FactorModel with_epsilon(double epsilon) const;
    FactorModel with_rho(double rho) const;

private:
    FactorModel() = default;
    void check() const;

    double m_ = 0.0;
    double nu_ = 1.0;
    double epsilon_ = 1.0;
    double rho_ = 0.0;
    std::function<double(double)> b_;
    std::function<double(double)> a_;
};

/// Uniform grid in y used for ergodic averages and Poisson solves.
class YGrid {
public:
    static YGrid uniform(double lo, double hi, std::size_t n);
    /// [center - n_sd*scale, center + n_sd*scale]; defaults: 8 sd, 801 nodes.
    static YGrid for_factor(const FactorModel& factor, double n_sd = 8.0, std::size_t n = 801);

    std::span<const double> nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }
    double spacing() const { return h_; }
    double lo() const { return nodes_.front(); }
    double hi() const { return nodes_.back(); }
    /// Trapezoid weights.
    std::vector<double> weights() const;

private:
    std::vector<double> nodes_;
    double h_ = 0.0;
};

/// Checked Sharpe ratio mu(y)/sigma(y).
double sharpe(const MarketMap& map, double y);

struct Violation {
    double y;
    std::string what;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool passed() const { return violations.empty(); }
    std::string summary() const;
};

/// Scans every grid node for sigma > 0, a > 0 and finite mu, sigma, lambda, b.
ValidationReport validate_model(const MarketMap& map, const FactorModel& factor, const YGrid& grid);

}  // namespace fastmr
