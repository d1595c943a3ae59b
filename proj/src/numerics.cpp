#include "fastmr/numerics.hpp"

#include "fastmr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fastmr::numerics {

void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                       std::span<const double> upper, std::span<double> rhs,
                       std::span<double> scratch) {
    const std::size_t n = diag.size();
    if (n == 0) return;
    double denom = diag[0];
    scratch[0] = upper[0] / denom;
    rhs[0] /= denom;
    for (std::size_t i = 1; i < n; ++i) {
        denom = diag[i] - lower[i] * scratch[i - 1];
        scratch[i] = (i + 1 < n) ? upper[i] / denom : 0.0;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for (std::size_t i = n - 1; i-- > 0;) {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

double trapezoid(std::span<const double> f, double h) {
    if (f.size() < 2) return 0.0;
    double interior = 0.0;
    for (std::size_t i = 1; i + 1 < f.size(); ++i) interior += f[i];
    return h * (0.5 * (f.front() + f.back()) + interior);
}

namespace {

double cell_integral(std::span<const double> f, std::size_t i, double h) {
    const std::size_t n = f.size();
    if (i == 0 || i + 2 >= n) return 0.5 * h * (f[i] + f[i + 1]);
    return h / 24.0 * (-f[i - 1] + 13.0 * f[i] + 13.0 * f[i + 1] - f[i + 2]);
}

}  // namespace

std::vector<double> cumulative_integral(std::span<const double> f, double h) {
    std::vector<double> out(f.size(), 0.0);
    for (std::size_t i = 0; i + 1 < f.size(); ++i) out[i + 1] = out[i] + cell_integral(f, i, h);
    return out;
}

std::vector<double> cumulative_integral_from_right(std::span<const double> f, double h) {
    std::vector<double> out(f.size(), 0.0);
    for (std::size_t i = f.size() - 1; i-- > 0;) out[i] = out[i + 1] + cell_integral(f, i, h);
    return out;
}

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

MeanStd mean_std(std::span<const double> v) {
    MeanStd out;
    if (v.empty()) return out;
    const double shift = v[0];
    std::vector<double> d(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) d[i] = v[i] - shift;
    const double n = static_cast<double>(v.size());
    const double mean_d = pairwise_sum(d) / n;
    out.mean = shift + mean_d;
    if (v.size() > 1) {
        for (double& x : d) x = (x - mean_d) * (x - mean_d);
        out.std = std::sqrt(pairwise_sum(d) / (n - 1.0));
    }
    return out;
}

QuadratureRule gauss_hermite_normal(int n) {
    // Newton iteration on physicists' Hermite polynomials, then rescale to
    // the standard normal weight.
    QuadratureRule rule;
    rule.nodes.assign(n, 0.0);
    rule.weights.assign(n, 0.0);
    const double pim4 = std::pow(std::numbers::pi, -0.25);
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0) {
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
        } else if (i == 1) {
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * rule.nodes[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * rule.nodes[1];
        } else {
            z = 2.0 * z - rule.nodes[i - 2];
        }
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = pim4;
            double p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        rule.nodes[i] = z;
        rule.nodes[n - 1 - i] = -z;
        rule.weights[i] = 2.0 / (pp * pp);
        rule.weights[n - 1 - i] = rule.weights[i];
    }
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] *= std::numbers::sqrt2;
        rule.weights[i] /= std::sqrt(std::numbers::pi);
    }
    return rule;
}

double hermite_cubic(double x0, double x1, double f0, double f1, double d0, double d1, double x) {
    const double h = x1 - x0;
    const double s = (x - x0) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    const double h10 = s3 - 2.0 * s2 + s;
    const double h01 = -2.0 * s3 + 3.0 * s2;
    const double h11 = s3 - s2;
    return h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1;
}

std::size_t bracket(std::span<const double> grid, double x) {
    const std::size_t n = grid.size();
    if (n < 2 || x <= grid[0]) return 0;
    if (x >= grid[n - 1]) return n - 2;
    const auto it = std::upper_bound(grid.begin(), grid.end(), x);
    return static_cast<std::size_t>(it - grid.begin()) - 1;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = lo;
        return out;
    }
    const double h = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) out[i] = lo + h * static_cast<double>(i);
    out[n - 1] = hi;
    return out;
}

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) {
        throw NumericError(Errc::InvalidArgument, "monotone cubic needs >= 2 matching nodes");
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!(x_[i + 1] > x_[i])) throw NumericError(Errc::InvalidArgument, "interpolation nodes must increase");
    }
    std::vector<double> delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
    d_.assign(n, 0.0);
    d_[0] = delta[0];
    d_[n - 1] = delta[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (delta[i - 1] * delta[i] <= 0.0) {
            d_[i] = 0.0;
        } else {
            // weighted harmonic mean (Fritsch-Butland)
            const double h0 = x_[i] - x_[i - 1];
            const double h1 = x_[i + 1] - x_[i];
            const double w1 = 2.0 * h1 + h0;
            const double w2 = h1 + 2.0 * h0;
            d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
}

std::size_t MonotoneCubic::interval(double x) const { return bracket(x_, x); }

double MonotoneCubic::operator()(double x) const {
    const std::size_t i = interval(x);
    return hermite_cubic(x_[i], x_[i + 1], y_[i], y_[i + 1], d_[i], d_[i + 1], x);
}

double MonotoneCubic::derivative(double x) const {
    const std::size_t i = interval(x);
    const double h = x_[i + 1] - x_[i];
    const double s = (x - x_[i]) / h;
    const double s2 = s * s;
    const double dh00 = (6.0 * s2 - 6.0 * s) / h;
    const double dh10 = 3.0 * s2 - 4.0 * s + 1.0;
    const double dh01 = (-6.0 * s2 + 6.0 * s) / h;
    const double dh11 = 3.0 * s2 - 2.0 * s;
    return dh00 * y_[i] + dh10 * d_[i] + dh01 * y_[i + 1] + dh11 * d_[i + 1];
}

}  // namespace fastmr::numerics
