#pragma once

// Closed-form Black-Scholes analytics for European options with a flat
// continuously-compounded rate and no dividends.
//
// Units: ttm in years (ACT/365), vol annualized, vega per unit of vol
// (not per vol point), theta per year. Theta is the derivative with respect
// to calendar time, so it is minus the derivative with respect to ttm and is
// usually negative for long options.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "deephedge/errors.hpp"

namespace deephedge::bs {

enum class OptionKind { call, put };

inline char kind_code(OptionKind k) { return k == OptionKind::call ? 'C' : 'P'; }

struct EuroOptionTerms {
    double spot = 0.0;
    double strike = 0.0;
    double ttm = 0.0;
    double rate = 0.0;
    double vol = 0.0;
    OptionKind kind = OptionKind::call;
};

struct GreekSet {
    double price = 0.0;
    double delta = 0.0;
    double gamma = 0.0;
    double vega = 0.0;
    double theta = 0.0;
};

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Standard normal CDF through the complementary error function, which keeps
// full relative accuracy in both tails.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

inline double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

namespace detail {

inline void check_market(double spot, double strike, double ttm) {
    if (!(spot > 0.0) || !(strike > 0.0) || !(ttm > 0.0) || !std::isfinite(spot) ||
        !std::isfinite(strike) || !std::isfinite(ttm)) {
        std::ostringstream os;
        os << "invalid option terms: spot=" << spot << " strike=" << strike << " ttm=" << ttm;
        throw DomainError(os.str());
    }
}

// Below this total standard deviation the lognormal density is numerically a
// point mass and the zero-vol limit is returned instead.
inline constexpr double kMinStdDev = 1e-12;

}  // namespace detail

inline GreekSet price_greeks(const EuroOptionTerms& t) {
    detail::check_market(t.spot, t.strike, t.ttm);
    if (!(t.vol > 0.0) || !std::isfinite(t.vol) || !std::isfinite(t.rate)) {
        std::ostringstream os;
        os << "invalid option terms: vol=" << t.vol << " rate=" << t.rate;
        throw DomainError(os.str());
    }

    const double df = std::exp(-t.rate * t.ttm);
    const double fwd_strike = t.strike * df;
    const double sd = t.vol * std::sqrt(t.ttm);
    const bool call = t.kind == OptionKind::call;
    GreekSet g;

    if (sd < detail::kMinStdDev) {
        // Intrinsic limit against the discounted strike. Delta is the payoff
        // derivative, one-half at the kink.
        const double fwd_intrinsic = t.spot - fwd_strike;
        double call_delta = fwd_intrinsic > 0.0 ? 1.0 : (fwd_intrinsic < 0.0 ? 0.0 : 0.5);
        if (call) {
            g.price = std::max(fwd_intrinsic, 0.0);
            g.delta = call_delta;
            g.theta = fwd_intrinsic > 0.0 ? -t.rate * fwd_strike : 0.0;
        } else {
            g.price = std::max(-fwd_intrinsic, 0.0);
            g.delta = call_delta - 1.0;
            g.theta = fwd_intrinsic < 0.0 ? t.rate * fwd_strike : 0.0;
        }
        return g;
    }

    const double d1 = (std::log(t.spot / t.strike) + (t.rate + 0.5 * t.vol * t.vol) * t.ttm) / sd;
    const double d2 = d1 - sd;
    const double pdf1 = norm_pdf(d1);
    const double decay = -t.spot * pdf1 * t.vol / (2.0 * std::sqrt(t.ttm));

    g.gamma = pdf1 / (t.spot * sd);
    g.vega = t.spot * pdf1 * std::sqrt(t.ttm);
    if (call) {
        g.price = t.spot * norm_cdf(d1) - fwd_strike * norm_cdf(d2);
        g.delta = norm_cdf(d1);
        g.theta = decay - t.rate * fwd_strike * norm_cdf(d2);
    } else {
        g.price = fwd_strike * norm_cdf(-d2) - t.spot * norm_cdf(-d1);
        g.delta = -norm_cdf(-d1);
        g.theta = decay + t.rate * fwd_strike * norm_cdf(-d2);
    }
    // Cancellation can leave a tiny negative price deep out of the money.
    g.price = std::max(g.price, 0.0);
    return g;
}

inline double price(const EuroOptionTerms& t) { return price_greeks(t).price; }

struct ImpliedVolOptions {
    double initial_guess = 0.2;
    double lower = 1e-6;
    double upper = 5.0;
    int max_iterations = 100;
    double price_tolerance = 1e-10;  // scaled by max(1, target)
};

// Inverts the Black-Scholes price for volatility. `terms.vol` is ignored.
//
// The root is sought on the out-of-the-money side of the forward (the other
// side is mapped through put-call parity), in log-price space, where Newton's
// method stays well conditioned even for tiny time values. Newton steps that
// leave the current bracket fall back to bisection.
inline double implied_vol(double target_price, EuroOptionTerms terms,
                          const ImpliedVolOptions& opt = {}) {
    detail::check_market(terms.spot, terms.strike, terms.ttm);
    if (!std::isfinite(target_price)) throw DomainError("implied_vol: non-finite target price");

    const double fwd_strike = terms.strike * std::exp(-terms.rate * terms.ttm);
    const bool call = terms.kind == OptionKind::call;
    const double lower_bound = call ? std::max(terms.spot - fwd_strike, 0.0)
                                    : std::max(fwd_strike - terms.spot, 0.0);
    const double upper_bound = call ? terms.spot : fwd_strike;
    if (!(target_price > lower_bound) || !(target_price < upper_bound)) {
        std::ostringstream os;
        os.precision(17);
        os << "implied_vol: target " << target_price << " outside no-arbitrage bounds ("
           << lower_bound << ", " << upper_bound << ")";
        throw OutOfBoundsError(os.str());
    }

    // Map to the out-of-the-money option, whose price carries the time value
    // without an intrinsic offset.
    const bool use_call = fwd_strike >= terms.spot;
    double otm_target = target_price;
    if (use_call != call) {
        otm_target = call ? target_price - (terms.spot - fwd_strike)
                          : target_price + (terms.spot - fwd_strike);
    }
    if (!(otm_target > 0.0)) {
        throw OutOfBoundsError("implied_vol: time value not resolvable in double precision");
    }
    terms.kind = use_call ? OptionKind::call : OptionKind::put;
    const double log_target = std::log(otm_target);

    auto objective = [&](double vol, double& slope) {
        terms.vol = vol;
        const GreekSet g = price_greeks(terms);
        if (g.price <= 0.0) {
            slope = std::numeric_limits<double>::infinity();
            return -std::numeric_limits<double>::infinity();
        }
        slope = g.vega / g.price;
        return std::log(g.price) - log_target;
    };

    double lo = opt.lower;
    double hi = opt.upper;
    double slope = 0.0;
    if (objective(hi, slope) < 0.0) {
        throw NonConvergenceError("implied_vol: target above price at the upper vol bracket");
    }
    if (objective(lo, slope) > 0.0) {
        throw NonConvergenceError("implied_vol: target below price at the lower vol bracket");
    }

    double vol = std::clamp(opt.initial_guess, lo, hi);
    bool converged = false;
    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        const double f = objective(vol, slope);
        if (f == 0.0) {
            converged = true;
            break;
        }
        if (f < 0.0) lo = vol; else hi = vol;

        double next = vol - f / slope;
        if (!std::isfinite(next) || next <= lo || next >= hi) next = 0.5 * (lo + hi);
        const double step = std::abs(next - vol);
        vol = next;
        if (step <= 1e-15 * (1.0 + vol) || hi - lo <= 1e-15 * (1.0 + vol)) {
            converged = true;
            break;
        }
    }

    terms.kind = call ? OptionKind::call : OptionKind::put;
    terms.vol = vol;
    const double err = std::abs(price(terms) - target_price);
    if (!converged || err > opt.price_tolerance * std::max(1.0, target_price)) {
        std::ostringstream os;
        os.precision(17);
        os << "implied_vol: no convergence (vol=" << vol << ", price error=" << err << ")";
        throw NonConvergenceError(os.str());
    }
    return vol;
}

}  // namespace deephedge::bs
