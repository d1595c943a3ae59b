#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fastmr {

/// One term c * x^gamma / gamma of a power-mixture utility.
struct PowerTerm {
    double c;
    double gamma;
};

/// Investor preferences: power or positive mixtures of power utilities with
/// exponents in (0,1). U(0+) = 0, Inada conditions hold, AE[U] < 1.
class Utility {
public:
    static Utility power(double gamma);
    static Utility mixture(std::vector<PowerTerm> terms);

    double u(double x) const { return derivative(0, x); }
    double u1(double x) const { return derivative(1, x); }
    double u2(double x) const { return derivative(2, x); }
    /// k-th derivative, analytic for every k >= 0.
    double derivative(int k, double x) const;

    /// I(y) with U'(I(y)) = y.
    double inverse_marginal(double y) const;
    /// R(x) = -U'(x)/U''(x).
    double terminal_risk_tolerance(double x) const;
    /// Taylor coefficients r_j = R^{(j)}(x)/j! for j = 0..order.
    std::vector<double> risk_tolerance_taylor(double x, int order) const;

    bool is_power() const { return kind_ == Kind::Power; }
    double power_gamma() const { return terms_.front().gamma; }
    std::span<const PowerTerm> terms() const { return terms_; }
    /// max_i 1/(1 - gamma_i): the slope bound R(x) <= K x.
    double risk_tolerance_slope_bound() const;

    std::string kind() const { return kind_ == Kind::Power ? "power" : "mixture"; }
    /// Stable 64-bit fingerprint of the parameters (cache key).
    std::uint64_t fingerprint() const;

private:
    enum class Kind { Power, Mixture };
    Utility(Kind kind, std::vector<PowerTerm> terms);

    Kind kind_;
    std::vector<PowerTerm> terms_;
};

namespace taylor {

/// Truncated power series arithmetic on coefficient vectors of equal length.
std::vector<double> multiply(std::span<const double> a, std::span<const double> b);
std::vector<double> divide(std::span<const double> a, std::span<const double> b);
/// Series of f(x0 + delta(s)) given f's Taylor coefficients at x0 and a
/// series delta with delta[0] == 0.
std::vector<double> compose(std::span<const double> f, std::span<const double> delta);

}  // namespace taylor

/// Derivatives d^k/dz^k of z -> I(e^{-z}) at the point z with x = I(e^{-z}),
/// k = 0..order. Uses dx/dz = R(x).
std::vector<double> inverse_marginal_z_derivatives(const Utility& utility, double x, int order);

}  // namespace fastmr
