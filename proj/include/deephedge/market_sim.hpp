#pragma once

// Synthetic option-market panels.
//
// Calendar: trading days indexed from 0, 252 per year, 21 per month. On every
// roll day (date_index a multiple of 21) a cohort of contracts is listed with
// strikes round(moneyness * spot) and expiries 21 * months trading days
// ahead. A contract is identified by (kind, strike, expiry day); listings from
// different cohorts that coincide are the same contract. Every listed
// contract is quoted daily until its expiry day, which is never quoted.
//
// Time to maturity is converted to ACT/365 calendar days as
// trading_days * 365 / 252.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "deephedge/bs.hpp"
#include "deephedge/errors.hpp"
#include "deephedge/heston.hpp"
#include "deephedge/quote.hpp"
#include "deephedge/rng.hpp"

namespace deephedge::sim {

inline constexpr int kTradingDaysPerYear = 252;
inline constexpr int kTradingDaysPerMonth = 21;

struct GbmParams {
    double s0 = 100.0;
    double drift = 0.0;
    double vol = 0.2;
    double rate = 0.0;

    void validate() const {
        if (!(s0 > 0.0) || !(vol > 0.0) || !std::isfinite(drift) || !std::isfinite(rate)) {
            throw DomainError("invalid GBM parameters");
        }
    }
};

using heston::HestonParams;

struct Lattice {
    std::vector<double> moneyness{0.80, 0.85, 0.90, 0.95, 1.00, 1.05, 1.10, 1.15, 1.20};
    std::vector<int> expiry_months{1, 2, 3, 6, 12, 24};
    int substeps_per_day = 8;  // Heston only

    void validate() const {
        if (moneyness.empty() || expiry_months.empty()) throw DomainError("lattice is empty");
        for (double m : moneyness) {
            if (!(m > 0.0)) throw DomainError("lattice moneyness must be positive");
        }
        for (int e : expiry_months) {
            if (e < 1) throw DomainError("lattice expiry months must be >= 1");
        }
        if (substeps_per_day < 1) throw DomainError("substeps_per_day must be >= 1");
    }
};

struct ContractKey {
    long strike = 0;
    int expiry_day = 0;

    auto operator<=>(const ContractKey&) const = default;
};

inline std::string contract_id(OptionKind kind, long strike, int expiry_day) {
    return std::string(1, bs::kind_code(kind)) + std::to_string(strike) + "-E" +
           std::to_string(expiry_day);
}

inline double trading_to_calendar_days(int trading_days) {
    return trading_days * kDaysPerYear / kTradingDaysPerYear;
}

// Contracts (strike, expiry) alive on each day for a spot path. The strike of
// a listing uses the spot on its roll day.
inline std::vector<std::vector<ContractKey>> listed_contracts(const std::vector<double>& spots,
                                                              const Lattice& lattice) {
    const int days = static_cast<int>(spots.size());
    std::vector<std::vector<ContractKey>> per_day(days);
    std::set<ContractKey> alive;
    for (int t = 0; t < days; ++t) {
        if (t % kTradingDaysPerMonth == 0) {
            for (int months : lattice.expiry_months) {
                for (double m : lattice.moneyness) {
                    const long k = std::lround(m * spots[t]);
                    if (k <= 0) continue;
                    alive.insert({k, t + months * kTradingDaysPerMonth});
                }
            }
        }
        std::erase_if(alive, [t](const ContractKey& c) { return c.expiry_day <= t; });
        per_day[t].assign(alive.begin(), alive.end());
    }
    return per_day;
}

// Exact lognormal daily steps.
inline std::vector<double> simulate_gbm_path(const GbmParams& p, int days, std::uint64_t seed) {
    p.validate();
    if (days < 1) throw DomainError("calendar must have at least one day");
    const rng::CounterRng gen(seed);
    const double dt = 1.0 / kTradingDaysPerYear;
    const double mu = (p.drift - 0.5 * p.vol * p.vol) * dt;
    const double sd = p.vol * std::sqrt(dt);
    std::vector<double> s(days);
    double log_s = std::log(p.s0);
    s[0] = p.s0;
    for (int t = 1; t < days; ++t) {
        log_s += mu + sd * gen.normal(0, static_cast<std::uint64_t>(t));
        s[t] = std::exp(log_s);
    }
    return s;
}

struct HestonPath {
    std::vector<double> spot;
    std::vector<double> variance;
};

// Full-truncation Euler on log spot with `substeps_per_day` steps per day and
// risk-neutral drift.
inline HestonPath simulate_heston_path(const HestonParams& p, int days, int substeps_per_day,
                                       std::uint64_t seed) {
    p.validate();
    if (days < 1) throw DomainError("calendar must have at least one day");
    const rng::CounterRng gen(seed);
    const double dt = 1.0 / (static_cast<double>(kTradingDaysPerYear) * substeps_per_day);
    const double sqrt_dt = std::sqrt(dt);
    const double rho_c = std::sqrt(1.0 - p.rho * p.rho);
    HestonPath path{std::vector<double>(days), std::vector<double>(days)};
    double log_s = std::log(p.s0);
    double v = p.v0;
    path.spot[0] = p.s0;
    path.variance[0] = v;
    std::uint64_t n = 0;
    for (int t = 1; t < days; ++t) {
        for (int k = 0; k < substeps_per_day; ++k, ++n) {
            const double z1 = gen.normal(0, n);
            const double z2 = p.rho * z1 + rho_c * gen.normal(1, n);
            const double vp = std::max(v, 0.0);
            const double sv = std::sqrt(vp) * sqrt_dt;
            log_s += (p.rate - 0.5 * vp) * dt + sv * z1;
            v += p.kappa * (p.theta_bar - vp) * dt + p.xi * sv * z2;
        }
        path.spot[t] = std::exp(log_s);
        path.variance[t] = v;
    }
    return path;
}

struct Panel {
    std::vector<MarketSnapshot> snapshots;
    std::size_t dropped_unpriceable = 0;

    std::vector<OptionQuote> quotes() const {
        std::vector<OptionQuote> out;
        for (const auto& s : snapshots) out.insert(out.end(), s.quotes.begin(), s.quotes.end());
        return out;
    }
};

namespace detail {

inline OptionQuote make_quote(const MarketSnapshot& snap, OptionKind kind, const ContractKey& c,
                              double rate, double vol) {
    OptionQuote q;
    q.contract_id = contract_id(kind, c.strike, c.expiry_day);
    q.date_index = snap.date_index;
    q.kind = kind;
    q.spot = snap.spot;
    q.strike = static_cast<double>(c.strike);
    q.ttm_days = trading_to_calendar_days(c.expiry_day - snap.date_index);
    const bs::GreekSet g = bs::price_greeks({q.spot, q.strike, q.ttm(), rate, vol, kind});
    q.mid = g.price;
    q.implied_vol = vol;
    q.delta_bs = g.delta;
    q.gamma_bs = g.gamma;
    q.vega_bs = g.vega;
    q.theta_bs = g.theta;
    q.vix_proxy = snap.vix_proxy;
    q.index_return = snap.index_return;
    return q;
}

inline void check_calendar(int days) {
    if (days < 2) throw DomainError("calendar must have at least two trading days");
}

// Runs fn(day) over [0, days) on up to `threads` workers. Each day writes only
// its own slot, so the result does not depend on the thread count.
template <class Fn>
void for_each_day(int days, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(days)));
    if (threads == 1) {
        for (int t = 0; t < days; ++t) fn(t);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int t = static_cast<int>(w); t < days; t += static_cast<int>(threads)) fn(t);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace detail

inline Panel simulate_gbm_panel(const GbmParams& params, int days, const Lattice& lattice,
                                std::uint64_t seed) {
    params.validate();
    lattice.validate();
    detail::check_calendar(days);
    const std::vector<double> spots = simulate_gbm_path(params, days, seed);
    const auto listed = listed_contracts(spots, lattice);

    Panel panel;
    panel.snapshots.resize(days);
    for (int t = 0; t < days; ++t) {
        MarketSnapshot& snap = panel.snapshots[t];
        snap.date_index = t;
        snap.spot = spots[t];
        snap.instantaneous_vol = params.vol;
        snap.vix_proxy = params.vol;
        snap.index_return = t == 0 ? 0.0 : std::log(spots[t] / spots[t - 1]);
        for (const auto& c : listed[t]) {
            for (OptionKind kind : {OptionKind::call, OptionKind::put}) {
                snap.quotes.push_back(detail::make_quote(snap, kind, c, params.rate, params.vol));
            }
        }
    }
    return panel;
}

// Smallest out-of-the-money price, relative to spot, from which an implied
// vol is extracted; below it the quote is dropped as unpriceable.
inline constexpr double kMinRelativeTimeValue = 1e-9;

// Black-Scholes implied vol of a Heston price, extracted from the
// out-of-the-money side. Returns a negative value when not resolvable.
inline double heston_implied_vol(double spot, double strike, double ttm, double rate,
                                 double call_price) {
    const double fwd_strike = strike * std::exp(-rate * ttm);
    const bool use_call = fwd_strike >= spot;
    const double otm = use_call ? call_price : call_price - spot + fwd_strike;
    if (!(otm > kMinRelativeTimeValue * spot)) return -1.0;
    try {
        return bs::implied_vol(otm, {spot, strike, ttm, rate, 0.0,
                                     use_call ? OptionKind::call : OptionKind::put});
    } catch (const Error&) {
        return -1.0;
    }
}

inline constexpr double kVixHorizonDays = 30.0;

inline Panel simulate_heston_panel(const HestonParams& params, int days, const Lattice& lattice,
                                   std::uint64_t seed, unsigned threads = 1) {
    params.validate();
    lattice.validate();
    detail::check_calendar(days);
    const HestonPath path = simulate_heston_path(params, days, lattice.substeps_per_day, seed);
    const auto listed = listed_contracts(path.spot, lattice);

    Panel panel;
    panel.snapshots.resize(days);
    std::vector<std::size_t> dropped(days, 0);

    detail::for_each_day(days, threads, [&](int t) {
        MarketSnapshot& snap = panel.snapshots[t];
        const double spot = path.spot[t];
        const double var = std::max(path.variance[t], 0.0);
        snap.date_index = t;
        snap.spot = spot;
        snap.instantaneous_vol = std::sqrt(var);
        snap.index_return = t == 0 ? 0.0 : std::log(spot / path.spot[t - 1]);

        const double vix_ttm = kVixHorizonDays / kDaysPerYear;
        const double atm[1] = {spot};
        const double vix_call = heston::call_prices(params, spot, var, vix_ttm, atm)[0];
        snap.vix_proxy = heston_implied_vol(spot, spot, vix_ttm, params.rate, vix_call);
        if (!(snap.vix_proxy > 0.0)) {
            throw NonConvergenceError("vix proxy not resolvable on day " + std::to_string(t));
        }

        // Group strikes by expiry so one integral serves the whole smile.
        std::map<int, std::vector<long>> by_expiry;
        for (const auto& c : listed[t]) by_expiry[c.expiry_day].push_back(c.strike);
        for (const auto& [expiry, strikes] : by_expiry) {
            const double ttm_days = trading_to_calendar_days(expiry - t);
            const double ttm = ttm_days / kDaysPerYear;
            std::vector<double> ks(strikes.begin(), strikes.end());
            const std::vector<double> calls = heston::call_prices(params, spot, var, ttm, ks);
            for (std::size_t j = 0; j < ks.size(); ++j) {
                const double iv = heston_implied_vol(spot, ks[j], ttm, params.rate, calls[j]);
                if (!(iv > 0.0)) {
                    dropped[t] += 2;
                    continue;
                }
                for (OptionKind kind : {OptionKind::call, OptionKind::put}) {
                    snap.quotes.push_back(
                        detail::make_quote(snap, kind, {strikes[j], expiry}, params.rate, iv));
                }
            }
        }
        // Same contract order as the GBM panel: strike, then expiry, then kind.
        std::stable_sort(snap.quotes.begin(), snap.quotes.end(),
                         [](const OptionQuote& a, const OptionQuote& b) {
                             return std::tie(a.strike, a.ttm_days) < std::tie(b.strike, b.ttm_days);
                         });
    });
    for (auto d : dropped) panel.dropped_unpriceable += d;
    return panel;
}

}  // namespace deephedge::sim
