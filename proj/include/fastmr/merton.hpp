#pragma once

#include "fastmr/utility.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace fastmr {

/// Grid for the heat-equation route. A NaN z bound means "choose from the
/// wealth targets".
struct HeatGridSpec {
    double horizon = 1.0;
    std::size_t n_z = 1601;
    std::size_t n_t = 400;
    double x_min_target = 1e-3;
    double x_max_target = 1e3;
    double z_min = std::numeric_limits<double>::quiet_NaN();
    double z_max = std::numeric_limits<double>::quiet_NaN();
};

/// Solution H(z,t) of H_t + lambda^2/2 H_zz = 0, H(z,T) = I(e^{-z}), together
/// with z-derivatives up to order 4 (each solves the same equation).
class HeatSurface {
public:
    static constexpr int kOrders = 5;

    HeatSurface(double sharpe, double horizon, std::vector<double> z, std::vector<double> t);

    double sharpe() const { return sharpe_; }
    double horizon() const { return horizon_; }
    std::span<const double> z() const { return z_; }
    std::span<const double> t() const { return t_; }
    std::size_t n_z() const { return z_.size(); }
    std::size_t n_t() const { return t_.size(); }
    double dz() const { return z_[1] - z_[0]; }
    double dt() const { return t_[1] - t_[0]; }

    /// d^k H / dz^k at time node n, space node j.
    double d(int k, std::size_t n, std::size_t j) const { return data_[k][n * z_.size() + j]; }
    double& d(int k, std::size_t n, std::size_t j) { return data_[k][n * z_.size() + j]; }
    std::span<const double> slice(int k, std::size_t n) const {
        return std::span<const double>(data_[k]).subspan(n * z_.size(), z_.size());
    }

private:
    double sharpe_;
    double horizon_;
    std::vector<double> z_;
    std::vector<double> t_;
    std::array<std::vector<double>, kOrders> data_;
};

/// Backward Crank-Nicolson solve (Rannacher start) with exact Gaussian
/// convolution at the two z boundaries.
HeatSurface solve_heat(const Utility& utility, double sharpe, const HeatGridSpec& grid);

/// H(z,t) = E[I(exp(-z - lambda sqrt(T-t) Z))], Z ~ N(0,1), by Gauss-Hermite.
/// Returns derivative orders 0..HeatSurface::kOrders-1.
std::array<double, HeatSurface::kOrders> heat_by_convolution(const Utility& utility, double sharpe,
                                                             double tau, double z, int n_quad = 64);

/// Read interface shared by the heat route, the direct HJB route and the
/// closed form.
class MertonSolution {
public:
    virtual ~MertonSolution() = default;

    virtual double sharpe() const = 0;
    virtual double horizon() const = 0;
    virtual double value(double t, double x) const = 0;
    virtual double marginal(double t, double x) const = 0;
    virtual double risk_tolerance(double t, double x) const = 0;
    virtual double x_min(double t) const = 0;
    virtual double x_max(double t) const = 0;
};

/// A field on the (t_n, z_j) nodes of a HeatMertonSolution; node (n, j) sits
/// at wealth x = H(z_j, t_n).
struct Surface {
    std::size_t n_t = 0;
    std::size_t n_z = 0;
    std::vector<double> values;
    /// Set when derivative stencils fell back to one-sided forms at the z edges.
    bool one_sided_edges = false;

    double at(std::size_t n, std::size_t j) const { return values[n * n_z + j]; }
    double& at(std::size_t n, std::size_t j) { return values[n * n_z + j]; }
};

/// Merton value assembled from a HeatSurface:
///   x = H(z,t), R = H_z, M_x = exp(-z - lambda^2 (T-t)/2),
///   M(t, H(z,t)) = U(H(z,T)) + lambda^2/2 int_t^T M_x (H_zz + H_z)(z,s) ds.
class HeatMertonSolution final : public MertonSolution {
public:
    HeatMertonSolution(std::shared_ptr<const HeatSurface> heat, Utility utility);

    double sharpe() const override { return heat_->sharpe(); }
    double horizon() const override { return heat_->horizon(); }
    double value(double t, double x) const override;
    double marginal(double t, double x) const override;
    double risk_tolerance(double t, double x) const override;
    double x_min(double t) const override;
    double x_max(double t) const override;

    /// dR/dx and R * d^2R/dx^2 at (t, x).
    double risk_tolerance_dx(double t, double x) const;
    double risk_tolerance_rxx(double t, double x) const;
    /// D_1^k M at (t, x), k = 0..4, from the H derivatives.
    double d1_power(int k, double t, double x) const;

    /// Node level access.
    const HeatSurface& heat() const { return *heat_; }
    const Utility& utility() const { return utility_; }
    std::size_t n_t() const { return heat_->n_t(); }
    std::size_t n_z() const { return heat_->n_z(); }
    double node_t(std::size_t n) const { return heat_->t()[n]; }
    double node_z(std::size_t j) const { return heat_->z()[j]; }
    double node_x(std::size_t n, std::size_t j) const { return heat_->d(0, n, j); }
    double node_value(std::size_t n, std::size_t j) const { return m_[n * n_z() + j]; }
    double node_marginal(std::size_t n, std::size_t j) const;
    double node_risk_tolerance(std::size_t n, std::size_t j) const { return heat_->d(1, n, j); }
    double node_risk_tolerance_dx(std::size_t n, std::size_t j) const;
    double node_d1_power(int k, std::size_t n, std::size_t j) const;

    /// z with H(z, t_n) = x, by bracketing and Newton on the Hermite cubic.
    double z_of_x(std::size_t n, double x) const;

    Surface value_surface() const;
    /// A node surface at (t, x): Catmull-Rom in z at the two bracketing time
    /// levels, linear in t.
    double surface_value(const Surface& s, double t, double x) const;
    template <class F>
    Surface tabulate(F&& f) const {
        Surface s{n_t(), n_z(), std::vector<double>(n_t() * n_z()), false};
        for (std::size_t n = 0; n < n_t(); ++n) {
            for (std::size_t j = 0; j < n_z(); ++j) s.at(n, j) = f(n, j);
        }
        return s;
    }

    /// max over interior nodes of |L M| / (|lambda^2 M_z| + |lambda^2/2 M_zz|)
    /// with L = d_t + lambda^2/2 d_zz + lambda^2 d_z and finite differences,
    /// restricted to nodes with x in [x_lo, x_hi].
    double pde_residual(double x_lo, double x_hi) const;

private:
    struct Located {
        std::size_t n0;
        std::size_t n1;
        double w;  // weight of n1
    };
    Located locate_time(double t) const;
    void check_range(double t, double x) const;
    /// Hermite interpolation of H^(k) at fractional position z at node n.
    double heat_at(int k, std::size_t n, double z) const;
    double value_at_node_level(std::size_t n, double z) const;
    template <class Q>
    double interpolate(double t, double x, Q&& q) const;

    std::shared_ptr<const HeatSurface> heat_;
    Utility utility_;
    std::vector<double> m_;
};

HeatMertonSolution build_merton(std::shared_ptr<const HeatSurface> heat, const Utility& utility);

/// D_k f = R^k d^k f / dx^k on the node grid of sol, using d/dx = (1/H_z) d/dz
/// and centered differences in z (one-sided second-order at the edges).
Surface apply_Dk(const HeatMertonSolution& sol, int k, const Surface& f);

/// Classical power-utility Merton value.
class ClosedFormPowerSolution final : public MertonSolution {
public:
    ClosedFormPowerSolution(double gamma, double sharpe, double horizon);

    double sharpe() const override { return sharpe_; }
    double horizon() const override { return horizon_; }
    double value(double t, double x) const override;
    double marginal(double t, double x) const override;
    double risk_tolerance(double t, double x) const override;
    double x_min(double) const override { return 0.0; }
    double x_max(double) const override { return std::numeric_limits<double>::infinity(); }

private:
    double gamma_;
    double sharpe_;
    double horizon_;
};

ClosedFormPowerSolution closed_form_power(double gamma, double sharpe, double horizon);

struct HjbGridSpec {
    double horizon = 1.0;
    double x_min = 1e-4;
    double x_max = 1e4;
    std::size_t n_x = 1201;
    std::size_t n_t = 800;
    int max_policy_iterations = 50;
    double policy_tolerance = 1e-10;
};

/// Fully implicit policy-iteration solve of M_t = lambda^2/2 M_x^2 / M_xx on a
/// uniform log-wealth grid; far-field values by log-linear extrapolation.
class DirectHjbSolution final : public MertonSolution {
public:
    DirectHjbSolution(double sharpe, double horizon, std::vector<double> s, std::vector<double> t,
                      std::vector<double> m, std::vector<double> mx, std::vector<double> r_over_x);

    double sharpe() const override { return sharpe_; }
    double horizon() const override { return horizon_; }
    double value(double t, double x) const override;
    double marginal(double t, double x) const override;
    double risk_tolerance(double t, double x) const override;
    double x_min(double) const override { return std::exp(s_.front()); }
    double x_max(double) const override { return std::exp(s_.back()); }

    int total_policy_iterations() const { return iterations_; }
    void set_total_policy_iterations(int n) { iterations_ = n; }

private:
    double interp(const std::vector<double>& field, double t, double s) const;
    void check_range(double t, double x) const;

    double sharpe_;
    double horizon_;
    std::vector<double> s_;
    std::vector<double> t_;
    std::vector<double> m_;
    std::vector<double> mx_;
    std::vector<double> r_;
    int iterations_ = 0;
};

DirectHjbSolution solve_hjb_direct(const Utility& utility, double sharpe, const HjbGridSpec& grid);

/// Fast lookup of R(t, x) for path simulation: per time node, cubic Hermite
/// in log-wealth on a uniform grid; linear in t; R/x frozen beyond the ends.
class RiskToleranceTable {
public:
    RiskToleranceTable(const HeatMertonSolution& sol, double x_lo, double x_hi, std::size_t n_x);

    double operator()(double t, double x) const;
    double horizon() const { return horizon_; }

private:
    double at_level(std::size_t n, double log_x, double x) const;

    double horizon_;
    double dt_;
    double log_lo_;
    double dlog_;
    std::size_t n_x_;
    std::size_t n_t_;
    std::vector<double> r_;       // R
    std::vector<double> slope_;   // dR/dlog x = x R_x
};

/// On-disk cache of heat surfaces keyed by (utility, lambda, grid).
class MertonCache {
public:
    static constexpr int kFormatVersion = 1;

    explicit MertonCache(std::filesystem::path root) : root_(std::move(root)) {}

    std::filesystem::path path_for(const Utility& utility, double sharpe, const HeatGridSpec& grid) const;
    std::shared_ptr<const HeatSurface> load(const Utility& utility, double sharpe, const HeatGridSpec& grid) const;
    void store(const Utility& utility, const HeatGridSpec& grid, const HeatSurface& heat) const;
    /// Load if present, otherwise solve and store.
    std::shared_ptr<const HeatSurface> get(const Utility& utility, double sharpe, const HeatGridSpec& grid) const;

private:
    std::filesystem::path root_;
};

}  // namespace fastmr
