#pragma once

// Semi-closed-form European option prices under the Heston model.
//
//   dS = r S dt + sqrt(v) S dW1
//   dv = kappa (theta_bar - v) dt + xi sqrt(v) dW2,   d<W1,W2> = rho dt
//
// Calls are priced with the Lewis single-integral representation
//
//   C = S - sqrt(S K) exp(-r T / 2) / pi
//           * int_0^inf Re[exp(i u k) phi(u - i/2)] / (u^2 + 1/4) du,
//   k = ln(S / K) + r T,
//
// where phi is the characteristic function of ln(S_T / S) - r T. The
// characteristic function uses the rotation-free ("little trap") branch and
// is rewritten so that every 1/xi^2 factor is cancelled analytically; the
// xi -> 0 limit is evaluated without loss of precision.

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "deephedge/bs.hpp"
#include "deephedge/errors.hpp"

namespace deephedge::heston {

using cplx = std::complex<double>;

struct HestonParams {
    double s0 = 100.0;
    double v0 = 0.04;
    double kappa = 2.0;
    double theta_bar = 0.04;
    double xi = 0.5;
    double rho = -0.7;
    double rate = 0.02;

    double feller_ratio() const { return 2.0 * kappa * theta_bar / (xi * xi); }

    void validate() const {
        if (!(s0 > 0.0) || !(v0 > 0.0) || !(kappa > 0.0) || !(theta_bar > 0.0) || !(xi > 0.0) ||
            !(rho > -1.0 && rho < 1.0) || !std::isfinite(rate)) {
            throw DomainError("invalid Heston parameters");
        }
    }
};

namespace detail {

// log(1 + z) / z, accurate for small |z|.
inline cplx log1p_over(cplx z) {
    if (std::abs(z) < 1e-5) {
        return 1.0 - z * (0.5 - z * (1.0 / 3.0 - z * 0.25));
    }
    return std::log(1.0 + z) / z;
}

// exp(z) - 1 without cancellation for small |z|.
inline cplx expm1(cplx z) {
    const double s = std::sin(0.5 * z.imag());
    return {std::expm1(z.real()) * std::cos(z.imag()) - 2.0 * s * s,
            std::exp(z.real()) * std::sin(z.imag())};
}

}  // namespace detail

// E[exp(i u X_T)] with X_T = ln(S_T / S_0) - r T, for complex u, starting
// from instantaneous variance `variance`.
inline cplx characteristic_function(const HestonParams& p, double variance, double ttm, cplx u) {
    const cplx i(0.0, 1.0);
    const double xi2 = p.xi * p.xi;
    const cplx a = i * u + u * u;
    const cplx b = p.kappa - p.rho * p.xi * i * u;
    const cplx d = std::sqrt(b * b + xi2 * a);
    const cplx bpd = b + d;
    // h = (b - d) / xi^2 and q = g / xi^2 with g = (b - d) / (b + d).
    const cplx h = -a / bpd;
    const cplx q = h / bpd;
    const cplx g = xi2 * q;
    const cplx e = std::exp(-d * ttm);
    const cplx one_minus_e = -detail::expm1(-d * ttm);
    const cplx denom = 1.0 - g * e;

    const cplx big_d = h * one_minus_e / denom;
    // ln((1 - g e) / (1 - g)) = log1p(z) with z = g (1 - e) / (1 - g).
    const cplx w = q * one_minus_e / (1.0 - g);
    const cplx big_c = p.kappa * p.theta_bar * (h * ttm - 2.0 * w * detail::log1p_over(xi2 * w));
    return std::exp(big_c + big_d * variance);
}

// Fixed 16-point Gauss-Legendre rule on [-1, 1].
struct GaussLegendre16 {
    std::array<double, 16> nodes{};
    std::array<double, 16> weights{};

    GaussLegendre16() {
        constexpr int n = 16;
        for (int k = 0; k < n / 2; ++k) {
            double x = std::cos(std::numbers::pi * (k + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int j = 2; j <= n; ++j) {
                    const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            const double wgt = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[k] = -x;
            nodes[n - 1 - k] = x;
            weights[k] = wgt;
            weights[n - 1 - k] = wgt;
        }
    }

    static const GaussLegendre16& instance() {
        static const GaussLegendre16 rule;
        return rule;
    }
};

struct IntegrationOptions {
    double abs_tolerance = 1e-13;
    int max_depth = 30;
    int max_panels = 60;
};

// Adaptive Gauss-Legendre integration of a vector-valued integrand over
// [0, inf). The half-line is covered by geometrically growing panels
// [0, L], [L, 2L], [2L, 4L], ...; each panel is bisected until the 16-point
// estimate agrees with the sum over its halves for every component.
// `f(u, out)` writes one value per component into `out`.
template <class F>
std::vector<double> integrate_half_line(F&& f, std::size_t components, double scale,
                                        const IntegrationOptions& opt = {}) {
    const auto& rule = GaussLegendre16::instance();
    std::vector<double> scratch(components);

    // Returns the largest integral of |f| over components, which bounds the
    // rounding error of the estimate.
    auto panel = [&](double a, double b, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        const double mid = 0.5 * (a + b);
        const double half = 0.5 * (b - a);
        double mass = 0.0;
        for (int k = 0; k < 16; ++k) {
            f(mid + half * rule.nodes[k], scratch);
            double m = 0.0;
            for (std::size_t j = 0; j < components; ++j) {
                out[j] += rule.weights[k] * scratch[j];
                m = std::max(m, std::abs(scratch[j]));
            }
            mass += rule.weights[k] * m;
        }
        for (auto& v : out) v *= half;
        return mass * half;
    };

    std::vector<double> total(components, 0.0);

    // Recursive bisection with the tolerance split between halves.
    auto adapt = [&](auto&& self, double a, double b, const std::vector<double>& whole, double tol,
                     int depth, std::vector<double>& acc) -> void {
        const double m = 0.5 * (a + b);
        std::vector<double> left(components), right(components);
        const double mass = panel(a, m, left) + panel(m, b, right);
        double err = 0.0;
        for (std::size_t j = 0; j < components; ++j) {
            err = std::max(err, std::abs(whole[j] - left[j] - right[j]));
        }
        const double noise = 64.0 * std::numeric_limits<double>::epsilon() * mass;
        if (err <= std::max(tol, noise)) {
            for (std::size_t j = 0; j < components; ++j) acc[j] += left[j] + right[j];
            return;
        }
        if (depth >= opt.max_depth) {
            throw NonConvergenceError("Heston pricing integral did not converge");
        }
        self(self, a, m, left, 0.5 * tol, depth + 1, acc);
        self(self, m, b, right, 0.5 * tol, depth + 1, acc);
    };

    double a = 0.0;
    double b = scale;
    const double panel_tol = opt.abs_tolerance;
    for (int p = 0; p < opt.max_panels; ++p) {
        std::vector<double> whole(components), contribution(components, 0.0);
        panel(a, b, whole);
        adapt(adapt, a, b, whole, panel_tol, 0, contribution);
        double size = 0.0;
        for (std::size_t j = 0; j < components; ++j) {
            total[j] += contribution[j];
            size = std::max(size, std::abs(contribution[j]));
        }
        f(b, scratch);
        double edge = 0.0;
        for (double v : scratch) edge = std::max(edge, std::abs(v));
        if (size <= panel_tol && edge * b <= panel_tol) return total;
        a = b;
        b *= 2.0;
    }
    throw NonConvergenceError("Heston pricing integral: tail did not decay");
}

// Call prices for several strikes at one maturity, sharing characteristic
// function evaluations across strikes.
inline std::vector<double> call_prices(const HestonParams& p, double spot, double variance,
                                       double ttm, std::span<const double> strikes,
                                       const IntegrationOptions& opt = {}) {
    if (!(spot > 0.0) || !(ttm > 0.0)) throw DomainError("heston call_prices: invalid spot/ttm");
    for (double k : strikes) {
        if (!(k > 0.0)) throw DomainError("heston call_prices: strike must be positive");
    }
    const std::size_t n = strikes.size();
    std::vector<double> log_m(n);
    for (std::size_t j = 0; j < n; ++j) log_m[j] = std::log(spot / strikes[j]) + p.rate * ttm;

    const double v_ref = std::max({variance, p.theta_bar, 1e-4});
    const double scale = std::max(1.0, 1.0 / std::sqrt(v_ref * ttm));

    auto integrand = [&](double u, std::vector<double>& out) {
        const cplx phi = characteristic_function(p, std::max(variance, 0.0), ttm, cplx(u, -0.5));
        const double inv = 1.0 / (u * u + 0.25);
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = u * log_m[j];
            out[j] = (std::cos(ang) * phi.real() - std::sin(ang) * phi.imag()) * inv;
        }
    };
    const std::vector<double> integrals = integrate_half_line(integrand, n, scale, opt);

    std::vector<double> prices(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double factor = std::sqrt(spot * strikes[j]) * std::exp(-0.5 * p.rate * ttm) /
                              std::numbers::pi;
        prices[j] = spot - factor * integrals[j];
    }
    return prices;
}

inline double option_price(const HestonParams& p, double spot, double variance, double strike,
                           double ttm, bs::OptionKind kind) {
    const double strikes[1] = {strike};
    const double call = call_prices(p, spot, variance, ttm, strikes)[0];
    if (kind == bs::OptionKind::call) return call;
    return call - spot + strike * std::exp(-p.rate * ttm);
}

}  // namespace deephedge::heston
