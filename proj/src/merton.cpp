#include "fastmr/merton.hpp"

#include "fastmr/errors.hpp"
#include "fastmr/numerics.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fastmr {

namespace {

double terminal_z(const Utility& utility, double x) { return -std::log(utility.u1(x)); }

double inverse_at_z(const Utility& utility, double z) {
    if (utility.is_power()) return std::exp(z / (1.0 - utility.power_gamma()));
    return utility.inverse_marginal(std::exp(-z));
}

std::array<double, HeatSurface::kOrders> terminal_jet(const Utility& utility, double z) {
    const double x = inverse_at_z(utility, z);
    const std::vector<double> d = inverse_marginal_z_derivatives(utility, x, HeatSurface::kOrders - 1);
    std::array<double, HeatSurface::kOrders> out{};
    std::copy(d.begin(), d.end(), out.begin());
    return out;
}

// Catmull-Rom style cubic on a uniform row, pos in index units.
double cubic_row(std::span<const double> v, double pos) {
    const std::size_t n = v.size();
    if (pos <= 0.0) return v[0];
    if (pos >= static_cast<double>(n - 1)) return v[n - 1];
    const std::size_t i = std::min(static_cast<std::size_t>(pos), n - 2);
    const double w = pos - static_cast<double>(i);
    const double f0 = v[i];
    const double f1 = v[i + 1];
    if (i == 0 || i + 2 >= n) return f0 + w * (f1 - f0);
    const double fm = v[i - 1];
    const double f2 = v[i + 2];
    return f0 + 0.5 * w * (f1 - fm + w * (2.0 * fm - 5.0 * f0 + 4.0 * f1 - f2 + w * (3.0 * (f0 - f1) + f2 - fm)));
}

double centered_slope(std::span<const double> v, std::size_t i, double h) {
    const std::size_t n = v.size();
    if (i == 0) return (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    if (i == n - 1) return (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    return (v[i + 1] - v[i - 1]) / (2.0 * h);
}

void require(bool ok, const char* what) {
    if (!ok) throw NumericError(Errc::InvalidArgument, what);
}

}  // namespace

HeatSurface::HeatSurface(double sharpe, double horizon, std::vector<double> z, std::vector<double> t)
    : sharpe_(sharpe), horizon_(horizon), z_(std::move(z)), t_(std::move(t)) {
    for (auto& d : data_) d.assign(z_.size() * t_.size(), 0.0);
}

std::array<double, HeatSurface::kOrders> heat_by_convolution(const Utility& utility, double sharpe,
                                                             double tau, double z, int n_quad) {
    if (tau <= 0.0) return terminal_jet(utility, z);
    static thread_local int cached_n = 0;
    static thread_local numerics::QuadratureRule rule;
    if (cached_n != n_quad) {
        rule = numerics::gauss_hermite_normal(n_quad);
        cached_n = n_quad;
    }
    const double spread = sharpe * std::sqrt(tau);
    std::array<double, HeatSurface::kOrders> acc{};
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const auto jet = terminal_jet(utility, z + spread * rule.nodes[q]);
        for (int k = 0; k < HeatSurface::kOrders; ++k) acc[k] += rule.weights[q] * jet[k];
    }
    return acc;
}

HeatSurface solve_heat(const Utility& utility, double sharpe, const HeatGridSpec& grid) {
    require(sharpe > 0.0 && std::isfinite(sharpe), "solve_heat: sharpe ratio must be positive");
    require(grid.horizon > 0.0, "solve_heat: horizon must be positive");
    require(grid.n_z >= 8 && grid.n_t >= 4, "solve_heat: grid too small");
    require(grid.x_min_target > 0.0 && grid.x_max_target > grid.x_min_target, "solve_heat: bad wealth targets");

    const double T = grid.horizon;
    auto h_at = [&](double tau, double z) { return heat_by_convolution(utility, sharpe, tau, z)[0]; };

    double z_lo = grid.z_min;
    double z_hi = grid.z_max;
    if (std::isnan(z_lo)) {
        z_lo = terminal_z(utility, grid.x_min_target) - 0.25;
        int guard = 0;
        while (h_at(T, z_lo) > 0.5 * grid.x_min_target) {
            z_lo -= 0.25;
            if (++guard > 2000) throw NumericError(Errc::BoundaryTooNarrow, "solve_heat: cannot reach x_min_target");
        }
    }
    if (std::isnan(z_hi)) z_hi = terminal_z(utility, 2.0 * grid.x_max_target) + 0.25;
    if (!(z_hi > z_lo)) throw NumericError(Errc::BoundaryTooNarrow, "solve_heat: empty z range");
    // The image of [z_lo, z_hi] must contain the wealth targets at every t.
    if (h_at(T, z_lo) > grid.x_min_target || h_at(0.0, z_hi) < grid.x_max_target) {
        throw NumericError(Errc::BoundaryTooNarrow, "solve_heat: z range does not cover the wealth targets");
    }

    HeatSurface heat(sharpe, T, numerics::linspace(z_lo, z_hi, grid.n_z), numerics::linspace(0.0, T, grid.n_t + 1));
    const std::size_t nz = heat.n_z();
    const std::size_t last = heat.n_t() - 1;
    const double h = heat.dz();
    const double dt = heat.dt();
    const double kappa = 0.5 * sharpe * sharpe;

    for (std::size_t j = 0; j < nz; ++j) {
        const auto jet = terminal_jet(utility, heat.z()[j]);
        for (int k = 0; k < HeatSurface::kOrders; ++k) heat.d(k, last, j) = jet[k];
    }

    const std::size_t ni = nz - 2;
    std::vector<double> lower(ni), diag(ni), upper(ni), rhs(ni), scratch(ni);
    std::vector<double> cur(nz), next(nz);

    // One backward step of size step with weight theta on the new level.
    auto step = [&](std::vector<double>& u, double step_size, double theta, double lo_val, double hi_val) {
        const double r = kappa * step_size / (h * h);
        for (std::size_t i = 0; i < ni; ++i) {
            const std::size_t j = i + 1;
            lower[i] = -theta * r;
            upper[i] = -theta * r;
            diag[i] = 1.0 + 2.0 * theta * r;
            rhs[i] = u[j] + (1.0 - theta) * r * (u[j - 1] - 2.0 * u[j] + u[j + 1]);
        }
        rhs[0] += theta * r * lo_val;
        rhs[ni - 1] += theta * r * hi_val;
        numerics::solve_tridiagonal(lower, diag, upper, rhs, scratch);
        u[0] = lo_val;
        for (std::size_t i = 0; i < ni; ++i) u[i + 1] = rhs[i];
        u[nz - 1] = hi_val;
    };

    // Boundary values at every level, all orders at once.
    std::vector<std::array<double, HeatSurface::kOrders>> lo(heat.n_t()), hi(heat.n_t());
    for (std::size_t n = 0; n < heat.n_t(); ++n) {
        const double tau = T - heat.t()[n];
        lo[n] = heat_by_convolution(utility, sharpe, tau, z_lo);
        hi[n] = heat_by_convolution(utility, sharpe, tau, z_hi);
    }

    for (int k = 0; k < HeatSurface::kOrders; ++k) {
        for (std::size_t j = 0; j < nz; ++j) cur[j] = heat.d(k, last, j);
        for (std::size_t n = last; n-- > 0;) {
            const std::size_t steps_done = last - n;
            if (steps_done <= 2) {
                // Rannacher start: two implicit half steps replace each of the
                // first two Crank-Nicolson steps.
                const double tau_mid = T - heat.t()[n] - 0.5 * dt;
                const auto lo_mid = heat_by_convolution(utility, sharpe, tau_mid, z_lo);
                const auto hi_mid = heat_by_convolution(utility, sharpe, tau_mid, z_hi);
                step(cur, 0.5 * dt, 1.0, lo_mid[k], hi_mid[k]);
                step(cur, 0.5 * dt, 1.0, lo[n][k], hi[n][k]);
            } else {
                step(cur, dt, 0.5, lo[n][k], hi[n][k]);
            }
            for (std::size_t j = 0; j < nz; ++j) heat.d(k, n, j) = cur[j];
        }
    }

    for (std::size_t n = 0; n < heat.n_t(); ++n) {
        for (std::size_t j = 0; j < nz; ++j) {
            const double hz = heat.d(1, n, j);
            const bool ok = std::isfinite(heat.d(0, n, j)) && hz > 0.0 &&
                            (j == 0 || heat.d(0, n, j) > heat.d(0, n, j - 1));
            if (!ok) {
                std::ostringstream msg;
                msg << "solve_heat: H(., t) not increasing at t=" << heat.t()[n] << " z=" << heat.z()[j];
                throw NumericError(Errc::MonotonicityLoss, msg.str());
            }
        }
    }
    return heat;
}

// ---------------------------------------------------------------------------

HeatMertonSolution::HeatMertonSolution(std::shared_ptr<const HeatSurface> heat, Utility utility)
    : heat_(std::move(heat)), utility_(std::move(utility)) {
    const std::size_t nt = heat_->n_t();
    const std::size_t nz = heat_->n_z();
    const double lam2 = heat_->sharpe() * heat_->sharpe();
    const double T = heat_->horizon();
    m_.assign(nt * nz, 0.0);
    std::vector<double> f(nt);
    for (std::size_t j = 0; j < nz; ++j) {
        const double z = heat_->z()[j];
        for (std::size_t n = 0; n < nt; ++n) {
            const double tau = T - heat_->t()[n];
            f[n] = 0.5 * lam2 * std::exp(-z - 0.5 * lam2 * tau) * (heat_->d(2, n, j) + heat_->d(1, n, j));
        }
        const std::vector<double> acc = numerics::cumulative_integral_from_right(f, heat_->dt());
        const double terminal = utility_.u(heat_->d(0, nt - 1, j));
        for (std::size_t n = 0; n < nt; ++n) m_[n * nz + j] = terminal + acc[n];
    }
}

HeatMertonSolution build_merton(std::shared_ptr<const HeatSurface> heat, const Utility& utility) {
    if (!heat) throw NumericError(Errc::InvalidArgument, "build_merton: null heat surface");
    return HeatMertonSolution(std::move(heat), utility);
}

double HeatMertonSolution::node_marginal(std::size_t n, std::size_t j) const {
    const double lam2 = sharpe() * sharpe();
    return std::exp(-node_z(j) - 0.5 * lam2 * (horizon() - node_t(n)));
}

double HeatMertonSolution::node_risk_tolerance_dx(std::size_t n, std::size_t j) const {
    return heat_->d(2, n, j) / heat_->d(1, n, j);
}

double HeatMertonSolution::node_d1_power(int k, std::size_t n, std::size_t j) const {
    if (k < 0 || k > 4) throw NumericError(Errc::InvalidArgument, "node_d1_power: order must be 0..4");
    if (k == 0) return node_value(n, j);
    // D_1 = d/dz and M_z = e^{-z-c} H_z.
    static constexpr int binom[4][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {1, 2, 1, 0}, {1, 3, 3, 1}};
    double s = 0.0;
    double sign = 1.0;
    for (int i = 0; i < k; ++i) {
        s += sign * binom[k - 1][i] * heat_->d(k - i, n, j);
        sign = -sign;
    }
    return node_marginal(n, j) * s;
}

double HeatMertonSolution::heat_at(int k, std::size_t n, double z) const {
    const auto zs = heat_->z();
    const double h = heat_->dz();
    const double pos = (z - zs.front()) / h;
    const std::size_t j = std::min(static_cast<std::size_t>(std::max(pos, 0.0)), n_z() - 2);
    const auto row = heat_->slice(k, n);
    double d0;
    double d1;
    if (k + 1 < HeatSurface::kOrders) {
        d0 = heat_->d(k + 1, n, j);
        d1 = heat_->d(k + 1, n, j + 1);
    } else {
        d0 = centered_slope(row, j, h);
        d1 = centered_slope(row, j + 1, h);
    }
    return numerics::hermite_cubic(zs[j], zs[j + 1], row[j], row[j + 1], d0, d1, z);
}

double HeatMertonSolution::z_of_x(std::size_t n, double x) const {
    const auto row = heat_->slice(0, n);
    const auto zs = heat_->z();
    const std::size_t j = numerics::bracket(row, x);
    const double z0 = zs[j];
    const double z1 = zs[j + 1];
    const double d0 = heat_->d(1, n, j);
    const double d1 = heat_->d(1, n, j + 1);
    double z = z0 + (x - row[j]) / (row[j + 1] - row[j]) * (z1 - z0);
    for (int it = 0; it < 30; ++it) {
        const double f = numerics::hermite_cubic(z0, z1, row[j], row[j + 1], d0, d1, z) - x;
        const double slope = heat_at(1, n, z);
        const double nz = std::clamp(z - f / slope, z0, z1);
        if (std::abs(nz - z) <= 1e-15 * (1.0 + std::abs(z))) {
            z = nz;
            break;
        }
        z = nz;
    }
    return z;
}

HeatMertonSolution::Located HeatMertonSolution::locate_time(double t) const {
    const double dt = heat_->dt();
    const std::size_t last = n_t() - 1;
    double pos = std::clamp(t / dt, 0.0, static_cast<double>(last));
    std::size_t n0 = std::min(static_cast<std::size_t>(pos), last - 1);
    double w = pos - static_cast<double>(n0);
    if (w > 1.0 - 1e-12) {
        ++n0;
        w = 0.0;
    }
    if (w < 1e-12) w = 0.0;
    return {n0, std::min(n0 + 1, last), w};
}

double HeatMertonSolution::x_min(double t) const {
    const auto loc = locate_time(t);
    return std::max(node_x(loc.n0, 0), node_x(loc.n1, 0));
}

double HeatMertonSolution::x_max(double t) const {
    const auto loc = locate_time(t);
    return std::min(node_x(loc.n0, n_z() - 1), node_x(loc.n1, n_z() - 1));
}

void HeatMertonSolution::check_range(double t, double x) const {
    const double T = horizon();
    if (!(t >= -1e-12 && t <= T + 1e-12)) {
        std::ostringstream msg;
        msg << "merton: t=" << t << " outside [0, " << T << "]";
        throw NumericError(Errc::OutOfRange, msg.str());
    }
    if (t >= T) return;
    if (!(x >= x_min(t) && x <= x_max(t))) {
        std::ostringstream msg;
        msg << "merton: x=" << x << " outside solved range [" << x_min(t) << ", " << x_max(t) << "] at t=" << t;
        throw NumericError(Errc::OutOfRange, msg.str());
    }
}

template <class Q>
double HeatMertonSolution::interpolate(double t, double x, Q&& q) const {
    const auto loc = locate_time(t);
    const double a = q(loc.n0, z_of_x(loc.n0, x));
    if (loc.w == 0.0) return a;
    const double b = q(loc.n1, z_of_x(loc.n1, x));
    return (1.0 - loc.w) * a + loc.w * b;
}

double HeatMertonSolution::value_at_node_level(std::size_t n, double z) const {
    const auto zs = heat_->z();
    const double pos = (z - zs.front()) / heat_->dz();
    const std::size_t j = std::min(static_cast<std::size_t>(std::max(pos, 0.0)), n_z() - 2);
    const double s0 = node_marginal(n, j) * heat_->d(1, n, j);
    const double s1 = node_marginal(n, j + 1) * heat_->d(1, n, j + 1);
    return numerics::hermite_cubic(zs[j], zs[j + 1], node_value(n, j), node_value(n, j + 1), s0, s1, z);
}

double HeatMertonSolution::value(double t, double x) const {
    check_range(t, x);
    if (t >= horizon()) return utility_.u(x);
    return interpolate(t, x, [this](std::size_t n, double z) { return value_at_node_level(n, z); });
}

double HeatMertonSolution::marginal(double t, double x) const {
    check_range(t, x);
    if (t >= horizon()) return utility_.u1(x);
    const double lam2 = sharpe() * sharpe();
    return interpolate(t, x, [&](std::size_t n, double z) {
        return std::exp(-z - 0.5 * lam2 * (horizon() - node_t(n)));
    });
}

double HeatMertonSolution::risk_tolerance(double t, double x) const {
    check_range(t, x);
    if (t >= horizon()) return utility_.terminal_risk_tolerance(x);
    return interpolate(t, x, [this](std::size_t n, double z) { return heat_at(1, n, z); });
}

double HeatMertonSolution::risk_tolerance_dx(double t, double x) const {
    check_range(t, x);
    return interpolate(t, x, [this](std::size_t n, double z) { return heat_at(2, n, z) / heat_at(1, n, z); });
}

double HeatMertonSolution::risk_tolerance_rxx(double t, double x) const {
    check_range(t, x);
    return interpolate(t, x, [this](std::size_t n, double z) {
        const double h1 = heat_at(1, n, z);
        const double rx = heat_at(2, n, z) / h1;
        return heat_at(3, n, z) / h1 - rx * rx;
    });
}

double HeatMertonSolution::d1_power(int k, double t, double x) const {
    if (k < 0 || k > 4) throw NumericError(Errc::InvalidArgument, "d1_power: order must be 0..4");
    if (k == 0) return value(t, x);
    check_range(t, x);
    static constexpr int binom[4][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {1, 2, 1, 0}, {1, 3, 3, 1}};
    const double lam2 = sharpe() * sharpe();
    const double tt = std::min(t, horizon());
    return interpolate(tt, x, [&](std::size_t n, double z) {
        double s = 0.0;
        double sign = 1.0;
        for (int i = 0; i < k; ++i) {
            s += sign * binom[k - 1][i] * heat_at(k - i, n, z);
            sign = -sign;
        }
        return std::exp(-z - 0.5 * lam2 * (horizon() - node_t(n))) * s;
    });
}

Surface HeatMertonSolution::value_surface() const {
    return tabulate([this](std::size_t n, std::size_t j) { return node_value(n, j); });
}

double HeatMertonSolution::surface_value(const Surface& s, double t, double x) const {
    if (s.n_t != n_t() || s.n_z != n_z()) {
        throw NumericError(Errc::InvalidArgument, "surface_value: surface does not match the solution grid");
    }
    check_range(t, x);
    const double tt = std::min(t, horizon());
    return interpolate(tt, x, [&](std::size_t n, double z) {
        const double pos = (z - node_z(0)) / heat_->dz();
        return cubic_row(std::span<const double>(s.values).subspan(n * n_z(), n_z()), pos);
    });
}

double HeatMertonSolution::pde_residual(double x_lo, double x_hi) const {
    const double lam2 = sharpe() * sharpe();
    const double h = heat_->dz();
    const double dt = heat_->dt();
    double worst = 0.0;
    for (std::size_t n = 1; n + 1 < n_t(); ++n) {
        for (std::size_t j = 1; j + 1 < n_z(); ++j) {
            const double x = node_x(n, j);
            if (x < x_lo || x > x_hi) continue;
            const double mt = (node_value(n + 1, j) - node_value(n - 1, j)) / (2.0 * dt);
            const double mz = (node_value(n, j + 1) - node_value(n, j - 1)) / (2.0 * h);
            const double mzz = (node_value(n, j + 1) - 2.0 * node_value(n, j) + node_value(n, j - 1)) / (h * h);
            const double res = mt + 0.5 * lam2 * mzz + lam2 * mz;
            const double scale = std::abs(lam2 * mz) + std::abs(0.5 * lam2 * mzz);
            worst = std::max(worst, std::abs(res) / scale);
        }
    }
    return worst;
}

Surface apply_Dk(const HeatMertonSolution& sol, int k, const Surface& f) {
    if (k < 0) throw NumericError(Errc::InvalidArgument, "apply_Dk: negative order");
    if (f.n_t != sol.n_t() || f.n_z != sol.n_z()) {
        throw NumericError(Errc::InvalidArgument, "apply_Dk: surface does not match the solution grid");
    }
    Surface out = f;
    if (k == 0) return out;
    const std::size_t nz = f.n_z;
    const double h = sol.heat().dz();
    std::vector<double> row(nz);
    for (std::size_t n = 0; n < f.n_t; ++n) {
        for (std::size_t j = 0; j < nz; ++j) row[j] = f.at(n, j);
        for (int p = 0; p < k; ++p) {
            std::vector<double> next(nz);
            for (std::size_t j = 0; j < nz; ++j) next[j] = centered_slope(row, j, h) / sol.node_risk_tolerance(n, j);
            row.swap(next);
        }
        for (std::size_t j = 0; j < nz; ++j) out.at(n, j) = std::pow(sol.node_risk_tolerance(n, j), k) * row[j];
    }
    out.one_sided_edges = true;
    return out;
}

// ---------------------------------------------------------------------------

ClosedFormPowerSolution::ClosedFormPowerSolution(double gamma, double sharpe, double horizon)
    : gamma_(gamma), sharpe_(sharpe), horizon_(horizon) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw NumericError(Errc::InvalidArgument, "closed_form_power: gamma in (0,1)");
    require(horizon > 0.0, "closed_form_power: horizon must be positive");
}

double ClosedFormPowerSolution::value(double t, double x) const {
    const double g = gamma_;
    return std::pow(x, g) / g * std::exp(0.5 * sharpe_ * sharpe_ * g / (1.0 - g) * (horizon_ - t));
}

double ClosedFormPowerSolution::marginal(double t, double x) const {
    const double g = gamma_;
    return std::pow(x, g - 1.0) * std::exp(0.5 * sharpe_ * sharpe_ * g / (1.0 - g) * (horizon_ - t));
}

double ClosedFormPowerSolution::risk_tolerance(double, double x) const { return x / (1.0 - gamma_); }

ClosedFormPowerSolution closed_form_power(double gamma, double sharpe, double horizon) {
    return ClosedFormPowerSolution(gamma, sharpe, horizon);
}

// ---------------------------------------------------------------------------

DirectHjbSolution::DirectHjbSolution(double sharpe, double horizon, std::vector<double> s, std::vector<double> t,
                                     std::vector<double> m, std::vector<double> mx, std::vector<double> r_over_x)
    : sharpe_(sharpe),
      horizon_(horizon),
      s_(std::move(s)),
      t_(std::move(t)),
      m_(std::move(m)),
      mx_(std::move(mx)),
      r_(std::move(r_over_x)) {}

void DirectHjbSolution::check_range(double t, double x) const {
    if (!(t >= -1e-12 && t <= horizon_ + 1e-12) || !(x >= x_min(t) && x <= x_max(t))) {
        std::ostringstream msg;
        msg << "hjb: (t, x) = (" << t << ", " << x << ") outside the solved domain";
        throw NumericError(Errc::OutOfRange, msg.str());
    }
}

double DirectHjbSolution::interp(const std::vector<double>& field, double t, double s) const {
    const std::size_t ns = s_.size();
    const std::size_t last = t_.size() - 1;
    const double dt = t_[1] - t_[0];
    const double pos_t = std::clamp(t / dt, 0.0, static_cast<double>(last));
    const std::size_t n0 = std::min(static_cast<std::size_t>(pos_t), last - 1);
    const double w = pos_t - static_cast<double>(n0);
    const double pos_s = (s - s_.front()) / (s_[1] - s_[0]);
    const std::span<const double> all(field);
    const double a = cubic_row(all.subspan(n0 * ns, ns), pos_s);
    const double b = cubic_row(all.subspan((n0 + 1) * ns, ns), pos_s);
    return (1.0 - w) * a + w * b;
}

double DirectHjbSolution::value(double t, double x) const {
    check_range(t, x);
    return interp(m_, t, std::log(x));
}

double DirectHjbSolution::marginal(double t, double x) const {
    check_range(t, x);
    return interp(mx_, t, std::log(x));
}

double DirectHjbSolution::risk_tolerance(double t, double x) const {
    check_range(t, x);
    return x * interp(r_, t, std::log(x));
}

DirectHjbSolution solve_hjb_direct(const Utility& utility, double sharpe, const HjbGridSpec& grid) {
    require(sharpe > 0.0, "solve_hjb_direct: sharpe ratio must be positive");
    require(grid.horizon > 0.0 && grid.n_x >= 8 && grid.n_t >= 2, "solve_hjb_direct: bad grid");
    require(grid.x_min > 0.0 && grid.x_max > grid.x_min, "solve_hjb_direct: bad wealth range");

    const std::vector<double> s = numerics::linspace(std::log(grid.x_min), std::log(grid.x_max), grid.n_x);
    const std::vector<double> t = numerics::linspace(0.0, grid.horizon, grid.n_t + 1);
    const std::size_t ns = s.size();
    const std::size_t nt = t.size();
    const double h = s[1] - s[0];
    const double dt = t[1] - t[0];
    const double lam2 = sharpe * sharpe;

    std::vector<double> m(nt * ns), mx(nt * ns), r(nt * ns);
    std::vector<double> cur(ns), old(ns), rr(ns);
    for (std::size_t i = 0; i < ns; ++i) {
        const double x = std::exp(s[i]);
        cur[i] = utility.u(x);
        rr[i] = utility.terminal_risk_tolerance(x) / x;
    }

    auto policy_from = [&](const std::vector<double>& v, double time) {
        for (std::size_t i = 1; i + 1 < ns; ++i) {
            const double vs = (v[i + 1] - v[i - 1]) / (2.0 * h);
            const double vss = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
            const double curv = vss - vs;  // x^2 M_xx
            if (!(curv < 0.0)) {
                std::ostringstream msg;
                msg << "solve_hjb_direct: value lost concavity at t=" << time << " x=" << std::exp(s[i]);
                throw NumericError(Errc::ConvexityLoss, msg.str());
            }
            rr[i] = -vs / curv;
        }
        rr[0] = rr[1];
        rr[ns - 1] = rr[ns - 2];
    };
    auto store = [&](std::size_t n, const std::vector<double>& v) {
        for (std::size_t i = 0; i < ns; ++i) {
            m[n * ns + i] = v[i];
            r[n * ns + i] = rr[i];
            mx[n * ns + i] = centered_slope(v, i, h) / std::exp(s[i]);
        }
    };
    store(nt - 1, cur);

    const std::size_t ni = ns - 2;
    std::vector<double> lower(ni), diag(ni), upper(ni), rhs(ni), scratch(ni);
    int total_iterations = 0;
    for (std::size_t n = nt - 1; n-- > 0;) {
        old = cur;
        bool converged = false;
        for (int it = 0; it < grid.max_policy_iterations; ++it) {
            ++total_iterations;
            // Far field: log M linear in s, imposed implicitly through the
            // neighbour ratio of the current iterate.
            const double rho_lo = cur[1] / cur[2];
            const double rho_hi = cur[ns - 2] / cur[ns - 3];
            for (std::size_t q = 0; q < ni; ++q) {
                const std::size_t i = q + 1;
                const double a = 0.5 * lam2 * rr[i] * rr[i];
                const double b = lam2 * rr[i] - a;
                lower[q] = -dt * (a / (h * h) - b / (2.0 * h));
                upper[q] = -dt * (a / (h * h) + b / (2.0 * h));
                diag[q] = 1.0 + 2.0 * dt * a / (h * h);
                rhs[q] = old[i];
            }
            diag[0] += lower[0] * rho_lo;
            diag[ni - 1] += upper[ni - 1] * rho_hi;
            numerics::solve_tridiagonal(lower, diag, upper, rhs, scratch);
            double change = 0.0;
            std::vector<double> next(ns);
            for (std::size_t q = 0; q < ni; ++q) next[q + 1] = rhs[q];
            next[0] = rho_lo * next[1];
            next[ns - 1] = rho_hi * next[ns - 2];
            for (std::size_t i = 0; i < ns; ++i) change = std::max(change, std::abs(next[i] - cur[i]) / std::abs(next[i]));
            cur.swap(next);
            policy_from(cur, t[n]);
            if (change < grid.policy_tolerance) {
                converged = true;
                break;
            }
        }
        // Without convergence the last iterate is kept; the stall is at roundoff level.
        (void)converged;
        store(n, cur);
    }
    DirectHjbSolution out(sharpe, grid.horizon, s, t, std::move(m), std::move(mx), std::move(r));
    out.set_total_policy_iterations(total_iterations);
    return out;
}

// ---------------------------------------------------------------------------

RiskToleranceTable::RiskToleranceTable(const HeatMertonSolution& sol, double x_lo, double x_hi, std::size_t n_x)
    : horizon_(sol.horizon()),
      dt_(sol.heat().dt()),
      log_lo_(std::log(x_lo)),
      dlog_((std::log(x_hi) - std::log(x_lo)) / static_cast<double>(n_x - 1)),
      n_x_(n_x),
      n_t_(sol.n_t()) {
    require(n_x >= 4 && x_lo > 0.0 && x_hi > x_lo, "RiskToleranceTable: bad wealth grid");
    r_.assign(n_x_ * n_t_, 0.0);
    slope_.assign(n_x_ * n_t_, 0.0);
    const std::size_t nz = sol.n_z();
    for (std::size_t n = 0; n < n_t_; ++n) {
        const double lo = sol.node_x(n, 0);
        const double hi = sol.node_x(n, nz - 1);
        const double ratio_lo = sol.node_risk_tolerance(n, 0) / lo;
        const double ratio_hi = sol.node_risk_tolerance(n, nz - 1) / hi;
        for (std::size_t i = 0; i < n_x_; ++i) {
            const double x = std::exp(log_lo_ + dlog_ * static_cast<double>(i));
            double rv;
            double sl;
            if (x <= lo) {
                rv = ratio_lo * x;
                sl = rv;
            } else if (x >= hi) {
                rv = ratio_hi * x;
                sl = rv;
            } else {
                const double z = sol.z_of_x(n, x);
                const auto zs = sol.heat().z();
                const double pos = (z - zs.front()) / sol.heat().dz();
                const std::size_t j = std::min(static_cast<std::size_t>(std::max(pos, 0.0)), nz - 2);
                // H_z and H_zz by Hermite in z.
                const double h1 = numerics::hermite_cubic(zs[j], zs[j + 1], sol.heat().d(1, n, j),
                                                          sol.heat().d(1, n, j + 1), sol.heat().d(2, n, j),
                                                          sol.heat().d(2, n, j + 1), z);
                const double h2 = numerics::hermite_cubic(zs[j], zs[j + 1], sol.heat().d(2, n, j),
                                                          sol.heat().d(2, n, j + 1), sol.heat().d(3, n, j),
                                                          sol.heat().d(3, n, j + 1), z);
                rv = h1;
                sl = x * h2 / h1;
            }
            r_[n * n_x_ + i] = rv;
            slope_[n * n_x_ + i] = sl;
        }
    }
}

double RiskToleranceTable::at_level(std::size_t n, double log_x, double x) const {
    const double pos = (log_x - log_lo_) / dlog_;
    const std::size_t base = n * n_x_;
    if (pos <= 0.0) return r_[base] * x / std::exp(log_lo_);
    if (pos >= static_cast<double>(n_x_ - 1)) {
        return r_[base + n_x_ - 1] * x / std::exp(log_lo_ + dlog_ * static_cast<double>(n_x_ - 1));
    }
    const std::size_t i = std::min(static_cast<std::size_t>(pos), n_x_ - 2);
    const double w = pos - static_cast<double>(i);
    const double w2 = w * w;
    const double w3 = w2 * w;
    const double h00 = 2.0 * w3 - 3.0 * w2 + 1.0;
    const double h10 = w3 - 2.0 * w2 + w;
    const double h01 = -2.0 * w3 + 3.0 * w2;
    const double h11 = w3 - w2;
    return h00 * r_[base + i] + h10 * dlog_ * slope_[base + i] + h01 * r_[base + i + 1] +
           h11 * dlog_ * slope_[base + i + 1];
}

double RiskToleranceTable::operator()(double t, double x) const {
    const double log_x = std::log(x);
    const std::size_t last = n_t_ - 1;
    const double pos = std::clamp(t / dt_, 0.0, static_cast<double>(last));
    const std::size_t n0 = std::min(static_cast<std::size_t>(pos), last - 1);
    const double w = pos - static_cast<double>(n0);
    const double a = at_level(n0, log_x, x);
    if (w == 0.0) return a;
    return (1.0 - w) * a + w * at_level(n0 + 1, log_x, x);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'M', 'R', 'H', 'E', 'A', 'T', '\0'};

std::uint64_t grid_key(const Utility& utility, double sharpe, const HeatGridSpec& g) {
    std::uint64_t h = utility.fingerprint();
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffU;
            h *= 1099511628211ULL;
        }
    };
    mix(std::bit_cast<std::uint64_t>(sharpe));
    mix(std::bit_cast<std::uint64_t>(g.horizon));
    mix(g.n_z);
    mix(g.n_t);
    mix(std::bit_cast<std::uint64_t>(g.x_min_target));
    mix(std::bit_cast<std::uint64_t>(g.x_max_target));
    mix(std::bit_cast<std::uint64_t>(g.z_min));
    mix(std::bit_cast<std::uint64_t>(g.z_max));
    return h;
}

template <class T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool read_pod(std::ifstream& in, T& v) {
    return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace

std::filesystem::path MertonCache::path_for(const Utility& utility, double sharpe, const HeatGridSpec& grid) const {
    char name[64];
    std::snprintf(name, sizeof(name), "heat-%016llx.bin",
                  static_cast<unsigned long long>(grid_key(utility, sharpe, grid)));
    return root_ / ("v" + std::to_string(kFormatVersion)) / name;
}

std::shared_ptr<const HeatSurface> MertonCache::load(const Utility& utility, double sharpe,
                                                     const HeatGridSpec& grid) const {
    const auto path = path_for(utility, sharpe, grid);
    std::ifstream in(path, std::ios::binary);
    if (!in) return nullptr;
    char magic[8];
    in.read(magic, 8);
    if (!in || !std::equal(magic, magic + 8, kMagic)) return nullptr;
    std::int32_t version = 0;
    std::uint64_t key = 0;
    double s = 0.0, T = 0.0;
    std::uint64_t nz = 0, nt = 0;
    if (!read_pod(in, version) || version != kFormatVersion || !read_pod(in, key) || key != grid_key(utility, sharpe, grid) ||
        !read_pod(in, s) || !read_pod(in, T) || !read_pod(in, nz) || !read_pod(in, nt)) {
        return nullptr;
    }
    if (s != sharpe || nz != grid.n_z || nt != grid.n_t + 1) return nullptr;
    std::vector<double> z(nz), t(nt);
    in.read(reinterpret_cast<char*>(z.data()), static_cast<std::streamsize>(nz * sizeof(double)));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(nt * sizeof(double)));
    auto heat = std::make_shared<HeatSurface>(s, T, std::move(z), std::move(t));
    for (int k = 0; k < HeatSurface::kOrders; ++k) {
        for (std::size_t n = 0; n < nt; ++n) {
            for (std::size_t j = 0; j < nz; ++j) {
                if (!read_pod(in, heat->d(k, n, j))) return nullptr;
            }
        }
    }
    return heat;
}

void MertonCache::store(const Utility& utility, const HeatGridSpec& grid, const HeatSurface& heat) const {
    const auto path = path_for(utility, heat.sharpe(), grid);
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(kMagic, 8);
        write_pod(out, static_cast<std::int32_t>(kFormatVersion));
        write_pod(out, grid_key(utility, heat.sharpe(), grid));
        write_pod(out, heat.sharpe());
        write_pod(out, heat.horizon());
        write_pod(out, static_cast<std::uint64_t>(heat.n_z()));
        write_pod(out, static_cast<std::uint64_t>(heat.n_t()));
        for (double v : heat.z()) write_pod(out, v);
        for (double v : heat.t()) write_pod(out, v);
        for (int k = 0; k < HeatSurface::kOrders; ++k) {
            for (std::size_t n = 0; n < heat.n_t(); ++n) {
                for (double v : heat.slice(k, n)) write_pod(out, v);
            }
        }
    }
    std::filesystem::rename(tmp, path);
}

std::shared_ptr<const HeatSurface> MertonCache::get(const Utility& utility, double sharpe,
                                                    const HeatGridSpec& grid) const {
    if (auto hit = load(utility, sharpe, grid)) return hit;
    auto heat = std::make_shared<const HeatSurface>(solve_heat(utility, sharpe, grid));
    store(utility, grid, *heat);
    return heat;
}

}  // namespace fastmr
