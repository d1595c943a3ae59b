#include "fastmr/utility.hpp"

#include "fastmr/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

namespace fastmr {

Utility::Utility(Kind kind, std::vector<PowerTerm> terms) : kind_(kind), terms_(std::move(terms)) {
    if (terms_.empty()) throw NumericError(Errc::InvalidArgument, "utility needs at least one term");
    for (const auto& t : terms_) {
        if (!(t.gamma > 0.0 && t.gamma < 1.0)) {
            std::ostringstream os;
            os << "power exponent must lie in (0,1), got " << t.gamma;
            throw NumericError(Errc::InvalidArgument, os.str());
        }
        if (!(t.c > 0.0)) throw NumericError(Errc::InvalidArgument, "mixture weights must be positive");
    }
}

Utility Utility::power(double gamma) { return Utility(Kind::Power, {{1.0, gamma}}); }

Utility Utility::mixture(std::vector<PowerTerm> terms) { return Utility(Kind::Mixture, std::move(terms)); }

double Utility::derivative(int k, double x) const {
    double total = 0.0;
    for (const auto& t : terms_) {
        double coef = t.c / t.gamma;
        for (int j = 0; j < k; ++j) coef *= (t.gamma - j);
        total += coef * std::pow(x, t.gamma - k);
    }
    return total;
}

double Utility::inverse_marginal(double y) const {
    if (!(y > 0.0)) throw NumericError(Errc::InvalidArgument, "inverse marginal needs y > 0");
    if (is_power()) {
        const double g = terms_.front().gamma;
        return std::pow(y / terms_.front().c, 1.0 / (g - 1.0));
    }
    // f(s) = log U'(e^s) - log y is strictly decreasing in s.
    const double log_y = std::log(y);
    auto f = [&](double s) { return std::log(u1(std::exp(s))) - log_y; };
    double lo = -1.0;
    double hi = 1.0;
    while (f(lo) < 0.0) {
        lo *= 2.0;
        if (lo < -700.0) throw NumericError(Errc::NonconvergedInverse, "cannot bracket I(y) from below");
    }
    while (f(hi) > 0.0) {
        hi *= 2.0;
        if (hi > 700.0) throw NumericError(Errc::NonconvergedInverse, "cannot bracket I(y) from above");
    }
    double s = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double x = std::exp(s);
        const double fs = f(s);
        if (fs > 0.0) lo = s; else hi = s;
        // d/ds log U'(e^s) = x U''/U' = -x/R
        const double slope = x * u2(x) / u1(x);
        double next = s - fs / slope;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - s) < 1e-15 * std::max(1.0, std::abs(s)) || hi - lo < 1e-15) {
            return std::exp(next);
        }
        s = next;
    }
    throw NumericError(Errc::NonconvergedInverse, "hybrid Newton did not converge");
}

double Utility::terminal_risk_tolerance(double x) const {
    if (!(x > 0.0)) throw NumericError(Errc::InvalidArgument, "risk tolerance needs x > 0");
    const double d2 = u2(x);
    if (!std::isfinite(d2) || !(std::abs(d2) > std::numeric_limits<double>::min()) || d2 >= 0.0) {
        throw NumericError(Errc::DegenerateSecondDerivative, "U'' vanished or is not negative");
    }
    return -u1(x) / d2;
}

std::vector<double> Utility::risk_tolerance_taylor(double x, int order) const {
    std::vector<double> a(order + 1);
    std::vector<double> b(order + 1);
    double fact = 1.0;
    for (int j = 0; j <= order; ++j) {
        if (j > 0) fact *= j;
        a[j] = -derivative(j + 1, x) / fact;
        b[j] = derivative(j + 2, x) / fact;
    }
    if (!(b[0] < 0.0) || !std::isfinite(b[0])) {
        throw NumericError(Errc::DegenerateSecondDerivative, "U'' vanished or is not negative");
    }
    return taylor::divide(a, b);
}

double Utility::risk_tolerance_slope_bound() const {
    double k = 0.0;
    for (const auto& t : terms_) k = std::max(k, 1.0 / (1.0 - t.gamma));
    return k;
}

std::uint64_t Utility::fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffU;
            h *= 1099511628211ULL;
        }
    };
    mix(kind_ == Kind::Power ? 1 : 2);
    for (const auto& t : terms_) {
        mix(std::bit_cast<std::uint64_t>(t.c));
        mix(std::bit_cast<std::uint64_t>(t.gamma));
    }
    return h;
}

namespace taylor {

std::vector<double> multiply(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j <= k; ++j) out[k] += a[j] * b[k - j];
    }
    return out;
}

std::vector<double> divide(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    std::vector<double> q(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double s = a[k];
        for (std::size_t j = 1; j <= k; ++j) s -= b[j] * q[k - j];
        q[k] = s / b[0];
    }
    return q;
}

std::vector<double> compose(std::span<const double> f, std::span<const double> delta) {
    const std::size_t n = delta.size();
    std::vector<double> out(n, 0.0);
    // Horner: f0 + delta*(f1 + delta*(f2 + ...))
    for (std::size_t j = f.size(); j-- > 0;) {
        out = multiply(out, delta);
        out[0] += f[j];
    }
    return out;
}

}  // namespace taylor

std::vector<double> inverse_marginal_z_derivatives(const Utility& utility, double x, int order) {
    // Picard iteration on power series: delta(s) = int_0^s R(x + delta(u)) du.
    const std::vector<double> r = utility.risk_tolerance_taylor(x, std::max(order - 1, 0));
    std::vector<double> delta(order + 1, 0.0);
    for (int it = 0; it < order; ++it) {
        const std::vector<double> integrand = taylor::compose(r, delta);
        std::vector<double> next(order + 1, 0.0);
        for (int k = 1; k <= order; ++k) next[k] = integrand[k - 1] / k;
        delta = std::move(next);
    }
    std::vector<double> out(order + 1);
    out[0] = x;
    double fact = 1.0;
    for (int k = 1; k <= order; ++k) {
        fact *= k;
        out[k] = delta[k] * fact;
    }
    return out;
}

}  // namespace fastmr
