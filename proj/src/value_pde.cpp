#include "fastmr/value_pde.hpp"

#include "fastmr/errors.hpp"
#include "fastmr/numerics.hpp"

#include <algorithm>
#include <sstream>

namespace fastmr {

namespace {

double catmull(std::span<const double> v, double pos) {
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

struct Quadrature {
    std::vector<double> y;
    std::vector<double> w;
};

// Every k-th density node with trapezoid weights, renormalized.
Quadrature coarse_quadrature(const InvariantDensity& density, std::size_t n_quad) {
    const auto nodes = density.grid().nodes();
    const auto phi = density.values();
    const std::size_t n = nodes.size();
    const std::size_t stride = std::max<std::size_t>(1, (n - 1) / std::max<std::size_t>(n_quad - 1, 1));
    Quadrature q;
    for (std::size_t i = 0; i < n; i += stride) {
        q.y.push_back(nodes[i]);
        q.w.push_back(phi[i]);
    }
    q.w.front() *= 0.5;
    q.w.back() *= 0.5;
    double total = 0.0;
    for (double w : q.w) total += w;
    for (double& w : q.w) w /= total;
    return q;
}

void require(bool ok, const char* what) {
    if (!ok) throw NumericError(Errc::InvalidArgument, what);
}

// Tridiagonal solve along a strided line.
struct LineSolver {
    std::vector<double> lower, diag, upper, rhs, scratch;
    explicit LineSolver(std::size_t n) : lower(n), diag(n), upper(n), rhs(n), scratch(n) {}
    void solve() { numerics::solve_tridiagonal(lower, diag, upper, rhs, scratch); }
};

}  // namespace

// ---------------------------------------------------------------------------

ValueSurface3D::ValueSurface3D(std::shared_ptr<const HeatMertonSolution> merton, std::vector<std::size_t> z_index,
                               std::vector<double> y, double epsilon, std::size_t n_steps)
    : merton_(std::move(merton)), z_index_(std::move(z_index)), y_(std::move(y)), epsilon_(epsilon), n_steps_(n_steps) {}

const ValueSlice& ValueSurface3D::slice_at(double t) const {
    for (const auto& s : slices_) {
        if (std::abs(s.t - t) <= 1e-9) return s;
    }
    std::ostringstream msg;
    msg << "ValueSurface3D: no slice stored at t=" << t;
    throw NumericError(Errc::OutOfRange, msg.str());
}

double ValueSurface3D::value(double t, double x, double y) const {
    const ValueSlice& s = slice_at(t);
    const std::size_t nz = n_z();
    const std::size_t ny = n_y();
    const double x_lo = x_at(s, 0);
    const double x_hi = x_at(s, nz - 1);
    if (!(x >= x_lo && x <= x_hi) || !(y >= y_.front() && y <= y_.back())) {
        std::ostringstream msg;
        msg << "ValueSurface3D: (x, y) = (" << x << ", " << y << ") outside the grid";
        throw NumericError(Errc::OutOfRange, msg.str());
    }
    const double z = merton_->z_of_x(s.level, x);
    const double z0 = merton_->node_z(z_index_[0]);
    const double hz = merton_->node_z(z_index_[1]) - z0;
    const double pz = (z - z0) / hz;
    const double py = (y - y_.front()) / (y_[1] - y_[0]);
    // Interpolate in y on the four neighbouring z lines, then in z.
    const std::size_t iz = std::min(static_cast<std::size_t>(std::max(pz, 0.0)), nz - 2);
    const std::size_t lo = iz == 0 ? 0 : iz - 1;
    const std::size_t hi = std::min(iz + 2, nz - 1);
    std::vector<double> col(nz, 0.0);
    for (std::size_t i = lo; i <= hi; ++i) {
        col[i] = catmull(std::span<const double>(s.values).subspan(i * ny, ny), py);
    }
    return catmull(col, pz);
}

// ---------------------------------------------------------------------------

ValueSurface3D solve_strategy_value(const MarketMap& map, const FactorModel& factor, const ExpansionBundle& bundle,
                                    const Strategy& strategy, const Grid3DSpec& grid) {
    const auto& sol = *bundle.merton;
    const double eps = factor.epsilon();
    require(eps > 0.0 && eps <= 1.0, "solve_strategy_value: epsilon must be in (0, 1]");
    require(grid.n_y >= 5 && grid.z_spacing > 0.0 && grid.steps_per_epsilon > 0.0, "solve_strategy_value: bad grid");
    require(grid.theta >= 0.5 && grid.theta <= 1.0, "solve_strategy_value: theta must be in [1/2, 1]");
    const double T = sol.horizon();
    const double lb2 = bundle.lambda_bar * bundle.lambda_bar;
    const std::size_t last = sol.n_t() - 1;

    // z window: the image of [z_lo, z_hi] contains [x_lo, x_hi] at every level.
    std::size_t j_lo = 0;
    std::size_t j_hi = sol.n_z() - 1;
    {
        double zl = sol.node_z(sol.n_z() - 1);
        double zh = sol.node_z(0);
        for (std::size_t n : {std::size_t{0}, last}) {
            zl = std::min(zl, grid.x_lo > sol.node_x(n, 0) ? sol.z_of_x(n, grid.x_lo) : sol.node_z(0));
            zh = std::max(zh, grid.x_hi < sol.node_x(n, sol.n_z() - 1) ? sol.z_of_x(n, grid.x_hi)
                                                                         : sol.node_z(sol.n_z() - 1));
        }
        const double h = sol.heat().dz();
        j_lo = static_cast<std::size_t>(std::floor((zl - sol.node_z(0)) / h));
        j_hi = std::min(sol.n_z() - 1, static_cast<std::size_t>(std::ceil((zh - sol.node_z(0)) / h)));
    }
    const auto stride = static_cast<std::size_t>(std::max(1.0, std::round(grid.z_spacing / sol.heat().dz())));
    std::vector<std::size_t> zi;
    for (std::size_t j = j_lo; j <= j_hi; j += stride) zi.push_back(j);
    if (zi.back() != j_hi && zi.back() + stride < sol.n_z()) zi.push_back(zi.back() + stride);
    const std::size_t nz = zi.size();
    require(nz >= 5, "solve_strategy_value: z window too small");
    const double hz = sol.node_z(zi[1]) - sol.node_z(zi[0]);

    const std::size_t ny = grid.n_y;
    const std::vector<double> y =
        numerics::linspace(factor.center() - grid.y_sd * factor.scale(), factor.center() + grid.y_sd * factor.scale(), ny);
    const double hy = y[1] - y[0];

    // Time-independent y data.
    std::vector<double> lam(ny), sig(ny), ay(ny), by(ny), a_fac(ny);
    for (std::size_t j = 0; j < ny; ++j) {
        sig[j] = map.sigma(y[j]);
        lam[j] = sharpe(map, y[j]);
        a_fac[j] = factor.a(y[j]);
        ay[j] = 0.5 * a_fac[j] * a_fac[j] / eps;
        by[j] = factor.b(y[j]) / eps;
    }

    // Exposure q = pi sigma / R at a Merton level.
    const bool exact_pi0 = strategy.base_is_pi0();
    const double corr_scale = strategy.kind() == Strategy::Kind::Perturbed ? std::pow(eps, strategy.alpha()) : 0.0;
    auto fill_q = [&](std::size_t n, std::vector<double>& q, std::vector<double>& rx) {
        const double t = sol.node_t(n);
        for (std::size_t i = 0; i < nz; ++i) {
            const double x = sol.node_x(n, zi[i]);
            const double R = sol.node_risk_tolerance(n, zi[i]);
            rx[i] = sol.node_risk_tolerance_dx(n, zi[i]);
            for (std::size_t j = 0; j < ny; ++j) {
                double qq;
                if (exact_pi0) {
                    qq = lam[j];
                    if (corr_scale != 0.0) qq += corr_scale * strategy.correction(t, x, y[j]) * sig[j] / R;
                } else {
                    qq = strategy(t, x, y[j], eps) * sig[j] / R;
                }
                q[i * ny + j] = qq;
            }
        }
    };

    const std::size_t n_steps = std::max<std::size_t>(
        grid.min_steps, static_cast<std::size_t>(std::ceil(grid.steps_per_epsilon * T / eps - 1e-9)));
    const double dtau = T / static_cast<double>(n_steps);
    const double theta = grid.theta;
    const bool strong_theta = theta >= 0.5 + std::sqrt(3.0) / 6.0 - 1e-12;

    ValueSurface3D out(bundle.merton, zi, y, eps, n_steps);

    const std::size_t N = nz * ny;
    std::vector<double> V(N), Y0(N), Y1(N), Y2(N), F(N), FV(N), A1V(N), A2V(N), A1Y(N), A2Y(N), tmp(N);
    for (std::size_t i = 0; i < nz; ++i) {
        const double u = sol.utility().u(sol.node_x(last, zi[i]));
        for (std::size_t j = 0; j < ny; ++j) V[i * ny + j] = u;
    }
    {
        ValueSlice terminal{T, last, V};
        out.add_slice(std::move(terminal));
    }

    // Output levels.
    std::vector<std::size_t> out_levels;
    for (double t : grid.output_times) {
        require(t >= 0.0 && t <= T, "solve_strategy_value: output time outside [0, T]");
        out_levels.push_back(static_cast<std::size_t>(std::lround(t / sol.heat().dt())));
    }

    // Coefficients at the two bracketing Merton levels.
    std::vector<double> q_a(N), q_b(N), rx_a(nz), rx_b(nz);
    std::size_t level_a = last;  // q_a at level_a, q_b at level_a - 1
    fill_q(last, q_a, rx_a);
    fill_q(last - 1, q_b, rx_b);
    std::vector<double> az(N), bz(N), cm(N);
    std::vector<unsigned char> upwind(N);

    const double dt_m = sol.heat().dt();
    auto boundary = [&](double t, std::size_t i) {
        const double pos = std::clamp(t / dt_m, 0.0, static_cast<double>(last));
        const std::size_t n0 = std::min(static_cast<std::size_t>(pos), last - 1);
        const double w = pos - static_cast<double>(n0);
        return (1.0 - w) * sol.node_value(n0, zi[i]) + w * sol.node_value(n0 + 1, zi[i]);
    };

    auto apply_A1 = [&](const std::vector<double>& v, std::vector<double>& o) {
        for (std::size_t j = 0; j < ny; ++j) {
            o[j] = 0.0;
            o[(nz - 1) * ny + j] = 0.0;
        }
        for (std::size_t i = 1; i + 1 < nz; ++i) {
            for (std::size_t j = 0; j < ny; ++j) {
                const std::size_t k = i * ny + j;
                const double vm = v[k - ny];
                const double v0 = v[k];
                const double vp = v[k + ny];
                double d1;
                if (!upwind[k]) d1 = (vp - vm) / (2.0 * hz);
                else d1 = bz[k] > 0.0 ? (vp - v0) / hz : (v0 - vm) / hz;
                o[k] = az[k] * (vp - 2.0 * v0 + vm) / (hz * hz) + bz[k] * d1;
            }
        }
    };
    auto apply_A2 = [&](const std::vector<double>& v, std::vector<double>& o) {
        for (std::size_t i = 0; i < nz; ++i) {
            const std::size_t base = i * ny;
            if (i == 0 || i + 1 == nz) {
                for (std::size_t j = 0; j < ny; ++j) o[base + j] = 0.0;
                continue;
            }
            o[base] = ay[0] * 2.0 * (v[base + 1] - v[base]) / (hy * hy);
            o[base + ny - 1] = ay[ny - 1] * 2.0 * (v[base + ny - 2] - v[base + ny - 1]) / (hy * hy);
            for (std::size_t j = 1; j + 1 < ny; ++j) {
                const double vm = v[base + j - 1];
                const double v0 = v[base + j];
                const double vp = v[base + j + 1];
                o[base + j] = ay[j] * (vp - 2.0 * v0 + vm) / (hy * hy) + by[j] * (vp - vm) / (2.0 * hy);
            }
        }
    };
    auto apply_A0 = [&](const std::vector<double>& v, std::vector<double>& o) {
        std::fill(o.begin(), o.end(), 0.0);
        const double inv = 1.0 / (4.0 * hz * hy);
        for (std::size_t i = 1; i + 1 < nz; ++i) {
            for (std::size_t j = 1; j + 1 < ny; ++j) {
                const std::size_t k = i * ny + j;
                o[k] = cm[k] * (v[k + ny + 1] - v[k + ny - 1] - v[k - ny + 1] + v[k - ny - 1]) * inv;
            }
        }
    };
    // (I - theta dtau A1) x = rhs along z lines, Dirichlet rows at both ends.
    LineSolver zs(nz);
    auto solve_A1 = [&](std::vector<double>& rhs_inout, double g_lo_time) {
        const double c = theta * dtau;
        for (std::size_t j = 0; j < ny; ++j) {
            zs.diag[0] = 1.0;
            zs.upper[0] = 0.0;
            zs.lower[0] = 0.0;
            zs.rhs[0] = boundary(g_lo_time, 0);
            zs.diag[nz - 1] = 1.0;
            zs.lower[nz - 1] = 0.0;
            zs.upper[nz - 1] = 0.0;
            zs.rhs[nz - 1] = boundary(g_lo_time, nz - 1);
            for (std::size_t i = 1; i + 1 < nz; ++i) {
                const std::size_t k = i * ny + j;
                double lo = az[k] / (hz * hz);
                double up = lo;
                double di = -2.0 * lo;
                if (!upwind[k]) {
                    lo -= bz[k] / (2.0 * hz);
                    up += bz[k] / (2.0 * hz);
                } else if (bz[k] > 0.0) {
                    up += bz[k] / hz;
                    di -= bz[k] / hz;
                } else {
                    lo -= bz[k] / hz;
                    di += bz[k] / hz;
                }
                zs.lower[i] = -c * lo;
                zs.upper[i] = -c * up;
                zs.diag[i] = 1.0 - c * di;
                zs.rhs[i] = rhs_inout[k];
            }
            zs.solve();
            for (std::size_t i = 0; i < nz; ++i) rhs_inout[i * ny + j] = zs.rhs[i];
        }
    };
    LineSolver ys(ny);
    auto solve_A2 = [&](std::vector<double>& rhs_inout) {
        const double c = theta * dtau;
        const double h2 = hy * hy;
        for (std::size_t i = 1; i + 1 < nz; ++i) {
            const std::size_t base = i * ny;
            ys.lower[0] = 0.0;
            ys.diag[0] = 1.0 + c * 2.0 * ay[0] / h2;
            ys.upper[0] = -c * 2.0 * ay[0] / h2;
            ys.lower[ny - 1] = -c * 2.0 * ay[ny - 1] / h2;
            ys.diag[ny - 1] = 1.0 + c * 2.0 * ay[ny - 1] / h2;
            ys.upper[ny - 1] = 0.0;
            for (std::size_t j = 1; j + 1 < ny; ++j) {
                ys.lower[j] = -c * (ay[j] / h2 - by[j] / (2.0 * hy));
                ys.upper[j] = -c * (ay[j] / h2 + by[j] / (2.0 * hy));
                ys.diag[j] = 1.0 + c * 2.0 * ay[j] / h2;
            }
            for (std::size_t j = 0; j < ny; ++j) ys.rhs[j] = rhs_inout[base + j];
            ys.solve();
            for (std::size_t j = 0; j < ny; ++j) rhs_inout[base + j] = ys.rhs[j];
        }
    };

    double prev_norm = 0.0;
    for (double v : V) prev_norm = std::max(prev_norm, std::abs(v));

    for (std::size_t step = 0; step < n_steps; ++step) {
        const double t_new = T - dtau * static_cast<double>(step + 1);
        const double t_mid = t_new + 0.5 * dtau;
        // Move the coefficient bracket so level_a - 1 <= t_mid / dt_m <= level_a.
        while (level_a > 1 && t_mid < sol.node_t(level_a - 1)) {
            --level_a;
            q_a.swap(q_b);
            rx_a.swap(rx_b);
            fill_q(level_a - 1, q_b, rx_b);
        }
        const double w = std::clamp((sol.node_t(level_a) - t_mid) / dt_m, 0.0, 1.0);
        double cfl = 0.0;
        for (std::size_t i = 0; i < nz; ++i) {
            const double rxi = (1.0 - w) * rx_a[i] + w * rx_b[i];
            for (std::size_t j = 0; j < ny; ++j) {
                const std::size_t k = i * ny + j;
                const double qq = (1.0 - w) * q_a[k] + w * q_b[k];
                az[k] = 0.5 * qq * qq;
                bz[k] = 0.5 * lb2 * rxi + qq * lam[j] - 0.5 * qq * qq * rxi;
                cm[k] = factor.rho() * a_fac[j] * qq / std::sqrt(eps);
                // Centered drift throughout: at lambda(y) = 0 the z diffusion
                // vanishes, and first-order upwinding there would bias the
                // value at y = 0 by O(h).
                upwind[k] = grid.upwind && std::abs(bz[k]) * hz > 2.0 * az[k];
                // The explicit mixed term is unconditionally stable for
                // theta >= 1/2 + sqrt(3)/6 when the discrete operator stays
                // elliptic; below that weight a CFL bound applies instead.
                const double ell = std::abs(cm[k]) / (2.0 * std::sqrt(az[k] * ay[j]) + 1e-300);
                const double courant = dtau * std::abs(cm[k]) / (hz * hy);
                cfl = std::max(cfl, strong_theta ? ell : std::max(ell, courant));
            }
        }
        if (cfl > 1.0) {
            std::ostringstream msg;
            msg << "solve_strategy_value: mixed-term stability number " << cfl << " > 1";
            throw NumericError(Errc::CFLViolation, msg.str());
        }

        // Hundsdorfer-Verwer step in tau = T - t.
        apply_A0(V, F);
        apply_A1(V, A1V);
        apply_A2(V, A2V);
        for (std::size_t k = 0; k < N; ++k) {
            FV[k] = F[k] + A1V[k] + A2V[k];
            Y0[k] = V[k] + dtau * FV[k];
        }
        for (std::size_t k = 0; k < N; ++k) Y1[k] = Y0[k] - theta * dtau * A1V[k];
        solve_A1(Y1, t_new);
        for (std::size_t k = 0; k < N; ++k) Y2[k] = Y1[k] - theta * dtau * A2V[k];
        solve_A2(Y2);

        apply_A0(Y2, F);
        apply_A1(Y2, A1Y);
        apply_A2(Y2, A2Y);
        for (std::size_t k = 0; k < N; ++k) {
            const double FY = F[k] + A1Y[k] + A2Y[k];
            tmp[k] = Y0[k] + 0.5 * dtau * (FY - FV[k]) - theta * dtau * A1Y[k];
        }
        solve_A1(tmp, t_new);
        for (std::size_t k = 0; k < N; ++k) tmp[k] -= theta * dtau * A2Y[k];
        solve_A2(tmp);
        V.swap(tmp);

        double norm = 0.0;
        bool finite = true;
        for (double v : V) {
            finite = finite && std::isfinite(v);
            norm = std::max(norm, std::abs(v));
        }
        if (!finite || norm > prev_norm * (1.0 + 20.0 * dtau) + 1e-12) {
            std::ostringstream msg;
            msg << "solve_strategy_value: max-norm grew from " << prev_norm << " to " << norm << " at t=" << t_new;
            throw NumericError(Errc::InstabilityDetected, msg.str());
        }
        prev_norm = norm;

        for (std::size_t lvl : out_levels) {
            if (std::abs(t_new - sol.node_t(lvl)) <= 0.5 * dtau) {
                ValueSlice s{sol.node_t(lvl), lvl, V};
                out.add_slice(std::move(s));
            }
        }
    }
    return out;
}

ValueSurface3D solve_pi0_value(const MarketMap& map, const FactorModel& factor, const ExpansionBundle& bundle,
                               const Grid3DSpec& grid, double epsilon) {
    const FactorModel f = factor.with_epsilon(epsilon);
    const auto table = std::make_shared<const RiskToleranceTable>(*bundle.merton, 1e-4, 1e4, 64);
    return solve_strategy_value(map, f, bundle, Strategy::pi0(table, map), grid);
}

// ---------------------------------------------------------------------------

LogGridSurface::LogGridSurface(std::vector<double> s, std::vector<double> t, std::vector<double> values)
    : s_(std::move(s)), t_(std::move(t)), v_(std::move(values)) {}

double LogGridSurface::value(double t, double x) const {
    const double s = std::log(x);
    if (!(s >= s_.front() && s <= s_.back()) || !(t >= t_.front() - 1e-12 && t <= t_.back() + 1e-12)) {
        std::ostringstream msg;
        msg << "LogGridSurface: (t, x) = (" << t << ", " << x << ") outside the grid";
        throw NumericError(Errc::OutOfRange, msg.str());
    }
    const std::size_t ns = s_.size();
    const std::size_t last = t_.size() - 1;
    const double dt = t_[1] - t_[0];
    const double pos_t = std::clamp((t - t_.front()) / dt, 0.0, static_cast<double>(last));
    const std::size_t n0 = std::min(static_cast<std::size_t>(pos_t), last - 1);
    const double w = pos_t - static_cast<double>(n0);
    const double pos = (s - s_.front()) / (s_[1] - s_[0]);
    const std::span<const double> all(v_);
    const double a = catmull(all.subspan(n0 * ns, ns), pos);
    if (w == 0.0) return a;
    return (1.0 - w) * a + w * catmull(all.subspan((n0 + 1) * ns, ns), pos);
}

LogGridSurface solve_averaged_v0(const Strategy& pi_tilde0, const MarketMap& map, const InvariantDensity& density,
                                 const Utility& utility, const AveragedGridSpec& grid) {
    require(grid.n_x >= 8 && grid.n_t >= 2 && grid.horizon > 0.0, "solve_averaged_v0: bad grid");
    require(grid.x_min > 0.0 && grid.x_max > grid.x_min, "solve_averaged_v0: bad wealth range");
    const std::vector<double> s = numerics::linspace(std::log(grid.x_min), std::log(grid.x_max), grid.n_x);
    const std::vector<double> t = numerics::linspace(0.0, grid.horizon, grid.n_t + 1);
    const std::size_t ns = s.size();
    const std::size_t nt = t.size();
    const double h = s[1] - s[0];
    const double dt = t[1] - t[0];
    const Quadrature quad = coarse_quadrature(density, grid.n_quad);
    std::vector<double> mu(quad.y.size()), sig(quad.y.size());
    for (std::size_t q = 0; q < quad.y.size(); ++q) {
        mu[q] = map.mu(quad.y[q]);
        sig[q] = map.sigma(quad.y[q]);
    }

    // Per level: diffusion and drift coefficients in s.
    auto coefficients = [&](std::size_t n, std::vector<double>& diff, std::vector<double>& drift) {
        for (std::size_t i = 0; i < ns; ++i) {
            const double x = std::exp(s[i]);
            double var = 0.0;
            double mean = 0.0;
            for (std::size_t q = 0; q < quad.y.size(); ++q) {
                const double pi = pi_tilde0(t[n], x, quad.y[q], grid.epsilon);
                var += quad.w[q] * sig[q] * sig[q] * pi * pi;
                mean += quad.w[q] * pi * mu[q];
            }
            const double a = 0.5 * var / (x * x);
            diff[i] = a;
            drift[i] = mean / x - a;
        }
    };

    std::vector<double> values(nt * ns);
    std::vector<double> cur(ns);
    for (std::size_t i = 0; i < ns; ++i) cur[i] = utility.u(std::exp(s[i]));
    std::copy(cur.begin(), cur.end(), values.begin() + static_cast<std::ptrdiff_t>((nt - 1) * ns));

    std::vector<double> d_new(ns), r_new(ns), d_old(ns), r_old(ns);
    coefficients(nt - 1, d_old, r_old);
    const std::size_t ni = ns - 2;
    LineSolver ls(ni);
    auto op = [&](const std::vector<double>& v, const std::vector<double>& d, const std::vector<double>& r,
                  std::size_t i) {
        return d[i] * (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h) + r[i] * (v[i + 1] - v[i - 1]) / (2.0 * h);
    };
    for (std::size_t n = nt - 1; n-- > 0;) {
        coefficients(n, d_new, r_new);
        const double rho_lo = cur[0] / cur[1];
        const double rho_hi = cur[ns - 1] / cur[ns - 2];
        for (std::size_t q = 0; q < ni; ++q) {
            const std::size_t i = q + 1;
            const double a = d_new[i] / (h * h);
            const double b = r_new[i] / (2.0 * h);
            ls.lower[q] = -0.5 * dt * (a - b);
            ls.upper[q] = -0.5 * dt * (a + b);
            ls.diag[q] = 1.0 + dt * a;
            ls.rhs[q] = cur[i] + 0.5 * dt * op(cur, d_old, r_old, i);
        }
        ls.diag[0] += ls.lower[0] * rho_lo;
        ls.diag[ni - 1] += ls.upper[ni - 1] * rho_hi;
        ls.solve();
        for (std::size_t q = 0; q < ni; ++q) cur[q + 1] = ls.rhs[q];
        cur[0] = rho_lo * cur[1];
        cur[ns - 1] = rho_hi * cur[ns - 2];
        for (double v : cur) {
            if (!std::isfinite(v)) throw NumericError(Errc::InstabilityDetected, "solve_averaged_v0: non-finite value");
        }
        std::copy(cur.begin(), cur.end(), values.begin() + static_cast<std::ptrdiff_t>(n * ns));
        d_old.swap(d_new);
        r_old.swap(r_new);
    }
    return LogGridSurface(s, t, std::move(values));
}

// ---------------------------------------------------------------------------

LossSurface solve_loss_2alpha(const StrategyFn& pi_tilde1, const MarketMap& map, const ExpansionBundle& bundle,
                              LossDrift drift, std::size_t n_quad) {
    const auto& sol = *bundle.merton;
    const std::size_t nt = sol.n_t();
    const std::size_t nz = sol.n_z();
    const double lb2 = bundle.lambda_bar * bundle.lambda_bar;
    const double kappa = drift == LossDrift::LambdaBarSquared ? lb2 : bundle.lambda_bar;
    const double h = sol.heat().dz();
    const double dt = sol.heat().dt();
    const Quadrature quad = coarse_quadrature(*bundle.density, n_quad);
    std::vector<double> sig2(quad.y.size());
    for (std::size_t q = 0; q < quad.y.size(); ++q) sig2[q] = std::pow(map.sigma(quad.y[q]), 2);

    // Source 1/2 <sigma^2 pi1^2> v0_xx with v0_xx = -M_x / R.
    auto source = [&](std::size_t n, std::vector<double>& out) {
        for (std::size_t j = 0; j < nz; ++j) {
            const double x = sol.node_x(n, j);
            double m2 = 0.0;
            for (std::size_t q = 0; q < quad.y.size(); ++q) {
                const double p = pi_tilde1(sol.node_t(n), x, quad.y[q]);
                m2 += quad.w[q] * sig2[q] * p * p;
            }
            out[j] = -0.5 * m2 * sol.node_marginal(n, j) / sol.node_risk_tolerance(n, j);
        }
    };

    Surface result{nt, nz, std::vector<double>(nt * nz, 0.0), false};
    std::vector<double> cur(nz, 0.0), s_old(nz), s_new(nz);
    source(nt - 1, s_old);
    const std::size_t ni = nz - 2;
    LineSolver ls(ni);
    const double a = 0.5 * lb2 / (h * h);
    const double b = kappa / (2.0 * h);
    for (std::size_t n = nt - 1; n-- > 0;) {
        source(n, s_new);
        for (std::size_t q = 0; q < ni; ++q) {
            const std::size_t i = q + 1;
            const double lv = a * (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]) + b * (cur[i + 1] - cur[i - 1]);
            ls.lower[q] = -0.5 * dt * (a - b);
            ls.upper[q] = -0.5 * dt * (a + b);
            ls.diag[q] = 1.0 + dt * a;
            ls.rhs[q] = cur[i] + 0.5 * dt * lv + 0.5 * dt * (s_old[i] + s_new[i]);
        }
        ls.solve();
        cur[0] = 0.0;
        cur[nz - 1] = 0.0;
        for (std::size_t q = 0; q < ni; ++q) cur[q + 1] = ls.rhs[q];
        for (std::size_t j = 0; j < nz; ++j) {
            if (!std::isfinite(cur[j])) throw NumericError(Errc::InstabilityDetected, "solve_loss_2alpha: non-finite value");
            result.at(n, j) = cur[j];
        }
        s_old.swap(s_new);
    }
    return LossSurface{bundle.merton, std::move(result)};
}

}  // namespace fastmr
