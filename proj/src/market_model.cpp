#include "fastmr/market_model.hpp"

#include "fastmr/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace fastmr {

namespace {

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

MarketMap MarketMap::constant(double mu, double sigma) { return MarketMap(Constant{mu, sigma}); }

MarketMap MarketMap::affine(double mu0, double mu1, double sigma0, double sigma1) {
    return MarketMap(Affine{mu0, mu1, sigma0, sigma1});
}

MarketMap MarketMap::sigmoid(double mu_lo, double mu_hi, double sigma_lo, double sigma_hi, double center,
                             double steepness) {
    return MarketMap(Sigmoid{mu_lo, mu_hi, sigma_lo, sigma_hi, center, steepness});
}

MarketMap MarketMap::tabulated(std::vector<double> y, std::vector<double> mu, std::vector<double> sigma) {
    std::vector<double> y2 = y;
    return MarketMap(Tabulated{numerics::MonotoneCubic(std::move(y), std::move(mu)),
                               numerics::MonotoneCubic(std::move(y2), std::move(sigma))});
}

double MarketMap::mu(double y) const {
    return std::visit(Overloaded{
                          [](const Constant& c) { return c.mu; },
                          [y](const Affine& a) { return a.mu0 + a.mu1 * y; },
                          [y](const Sigmoid& s) {
                              return s.mu_lo + (s.mu_hi - s.mu_lo) * logistic(s.steepness * (y - s.center));
                          },
                          [y](const Tabulated& t) { return t.mu(y); },
                      },
                      repr_);
}

double MarketMap::sigma(double y) const {
    return std::visit(Overloaded{
                          [](const Constant& c) { return c.sigma; },
                          [y](const Affine& a) { return a.sigma0 + a.sigma1 * y; },
                          [y](const Sigmoid& s) {
                              return s.sigma_lo +
                                     (s.sigma_hi - s.sigma_lo) * logistic(s.steepness * (y - s.center));
                          },
                          [y](const Tabulated& t) { return t.sigma(y); },
                      },
                      repr_);
}

std::string MarketMap::kind() const {
    return std::visit(Overloaded{
                          [](const Constant&) { return std::string("constant"); },
                          [](const Affine&) { return std::string("affine"); },
                          [](const Sigmoid&) { return std::string("sigmoid"); },
                          [](const Tabulated&) { return std::string("tabulated"); },
                      },
                      repr_);
}

bool MarketMap::has_constant_sharpe() const {
    return std::visit(Overloaded{
                          [](const Constant&) { return true; },
                          [](const Affine& a) {
                              // (mu0 + mu1 y)/(sigma0 + sigma1 y) is constant iff the vectors are parallel
                              return a.mu0 * a.sigma1 == a.mu1 * a.sigma0;
                          },
                          [](const Sigmoid& s) {
                              return (s.mu_hi - s.mu_lo) * s.sigma_lo == (s.sigma_hi - s.sigma_lo) * s.mu_lo;
                          },
                          [](const Tabulated&) { return false; },
                      },
                      repr_);
}

FactorModel FactorModel::ou(double m, double nu, double epsilon, double rho) {
    FactorModel f;
    f.m_ = m;
    f.nu_ = nu;
    f.epsilon_ = epsilon;
    f.rho_ = rho;
    if (!(nu > 0.0)) throw NumericError(Errc::InvalidArgument, "OU factor needs nu > 0");
    f.check();
    return f;
}

FactorModel FactorModel::general(std::function<double(double)> b, std::function<double(double)> a,
                                 double epsilon, double rho, double center, double scale) {
    FactorModel f;
    f.b_ = std::move(b);
    f.a_ = std::move(a);
    f.m_ = center;
    f.nu_ = scale;
    f.epsilon_ = epsilon;
    f.rho_ = rho;
    if (!f.b_ || !f.a_) throw NumericError(Errc::InvalidArgument, "factor maps must be callable");
    f.check();
    return f;
}

void FactorModel::check() const {
    if (!(epsilon_ > 0.0)) throw NumericError(Errc::InvalidArgument, "epsilon must be positive");
    if (!(std::abs(rho_) < 1.0)) throw NumericError(Errc::InvalidArgument, "|rho| must be < 1");
}

double FactorModel::b(double y) const { return b_ ? b_(y) : m_ - y; }

double FactorModel::a(double y) const { return a_ ? a_(y) : nu_ * std::numbers::sqrt2; }

FactorModel FactorModel::with_epsilon(double epsilon) const {
    FactorModel f = *this;
    f.epsilon_ = epsilon;
    f.check();
    return f;
}

FactorModel FactorModel::with_rho(double rho) const {
    FactorModel f = *this;
    f.rho_ = rho;
    f.check();
    return f;
}

YGrid YGrid::uniform(double lo, double hi, std::size_t n) {
    if (n < 3 || !(hi > lo)) throw NumericError(Errc::InvalidArgument, "YGrid needs n >= 3 and hi > lo");
    YGrid g;
    g.nodes_ = numerics::linspace(lo, hi, n);
    g.h_ = (hi - lo) / static_cast<double>(n - 1);
    return g;
}

YGrid YGrid::for_factor(const FactorModel& factor, double n_sd, std::size_t n) {
    return uniform(factor.center() - n_sd * factor.scale(), factor.center() + n_sd * factor.scale(), n);
}

std::vector<double> YGrid::weights() const {
    std::vector<double> w(nodes_.size(), h_);
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

double sharpe(const MarketMap& map, double y) {
    const double s = map.sigma(y);
    if (!(s > 0.0)) {
        std::ostringstream os;
        os << "sigma(" << y << ") = " << s;
        throw NumericError(Errc::NonPositiveVolatility, os.str());
    }
    return map.mu(y) / s;
}

std::string ValidationReport::summary() const {
    if (passed()) return "pass";
    std::ostringstream os;
    os << violations.size() << " violation(s); first at y=" << violations.front().y << ": "
       << violations.front().what;
    return os.str();
}

ValidationReport validate_model(const MarketMap& map, const FactorModel& factor, const YGrid& grid) {
    ValidationReport report;
    for (double y : grid.nodes()) {
        const double s = map.sigma(y);
        const double m = map.mu(y);
        const double a = factor.a(y);
        const double b = factor.b(y);
        if (!std::isfinite(s) || !(s > 0.0)) report.violations.push_back({y, "sigma <= 0"});
        if (!std::isfinite(m)) report.violations.push_back({y, "mu not finite"});
        if (!std::isfinite(a) || !(a > 0.0)) report.violations.push_back({y, "a <= 0"});
        if (!std::isfinite(b)) report.violations.push_back({y, "b not finite"});
        if (s > 0.0 && !std::isfinite(m / s)) report.violations.push_back({y, "lambda not finite"});
    }
    return report;
}

}  // namespace fastmr
