#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace fastmr::numerics {

/// Solves a tridiagonal system in place (Thomas algorithm).
/// lower[0] and upper[n-1] are ignored. The solution overwrites rhs.
/// scratch must hold at least n doubles.
void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                       std::span<const double> upper, std::span<double> rhs,
                       std::span<double> scratch);

/// Composite trapezoid rule on a uniform grid with spacing h.
double trapezoid(std::span<const double> f, double h);

/// Running integral F[i] = int_{x_0}^{x_i} f on a uniform grid, fourth order in
/// the interior (cubic Lagrange per cell), trapezoid on the two end cells.
std::vector<double> cumulative_integral(std::span<const double> f, double h);

/// Same as cumulative_integral but accumulated from the right end:
/// F[i] = int_{x_i}^{x_{n-1}} f.
std::vector<double> cumulative_integral_from_right(std::span<const double> f, double h);

/// Sum in fixed pairwise order. Result depends only on the input order.
double pairwise_sum(std::span<const double> v);

/// Mean and sample standard deviation computed with a shift by v[0], so a
/// constant input returns that constant exactly and zero deviation.
struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};
MeanStd mean_std(std::span<const double> v);

/// Gauss-Hermite rule for the standard normal weight exp(-u^2/2)/sqrt(2 pi).
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
QuadratureRule gauss_hermite_normal(int n);

/// Cubic Hermite interpolation on [x0, x1] with end values and slopes.
double hermite_cubic(double x0, double x1, double f0, double f1, double d0, double d1, double x);

/// Shape-preserving piecewise cubic interpolant (Fritsch-Carlson slopes).
class MonotoneCubic {
public:
    MonotoneCubic() = default;
    MonotoneCubic(std::vector<double> x, std::vector<double> y);

    double operator()(double x) const;
    double derivative(double x) const;

    std::span<const double> nodes() const { return x_; }
    std::span<const double> values() const { return y_; }

private:
    std::size_t interval(double x) const;

    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> d_;
};

/// Index i with grid[i] <= x < grid[i+1] for a sorted grid, clamped to
/// [0, n-2].
std::size_t bracket(std::span<const double> grid, double x);

std::vector<double> linspace(double lo, double hi, std::size_t n);

}  // namespace fastmr::numerics
