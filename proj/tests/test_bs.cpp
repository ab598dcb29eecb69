#include <cmath>
#include <iostream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "deephedge/bs.hpp"
#include "bs_checks.hpp"

using namespace deephedge;
using bs::EuroOptionTerms;
using bs::OptionKind;

namespace {

EuroOptionTerms terms(double s, double k, double t, double r, double v, OptionKind kind) {
    return {s, k, t, r, v, kind};
}

double rel_err(double a, double b, double floor) {
    return std::abs(a - b) / std::max(std::abs(b), floor);
}

}  // namespace

// Oracle: 40-digit quadrature of the payoff against the lognormal density.
TEST(BlackScholes, AtmCallMatchesQuadrature) {
    const auto g = bs::price_greeks(terms(100, 100, 1, 0, 0.2, OptionKind::call));
    EXPECT_NEAR(g.price, 7.965567455405796293, 1e-12);
    EXPECT_NEAR(g.delta, 0.53982783727702898367, 1e-15);
}

TEST(BlackScholes, RatedCallAndPutMatchQuadrature) {
    const double c = bs::price(terms(100, 110, 0.5, 0.05, 0.3, OptionKind::call));
    const double p = bs::price(terms(100, 110, 0.5, 0.05, 0.3, OptionKind::put));
    EXPECT_NEAR(c, 5.587093785625630817, 1e-12);
    EXPECT_NEAR(p, 12.871184108742224366, 1e-12);
}

TEST(BlackScholes, NormCdfTails) {
    EXPECT_DOUBLE_EQ(bs::norm_cdf(0.0), 0.5);
    EXPECT_NEAR(bs::norm_cdf(-10.0) / 7.6198530241605260659e-24, 1.0, 1e-14);
    EXPECT_NEAR(bs::norm_cdf(1.0) + bs::norm_cdf(-1.0), 1.0, 1e-16);
}

TEST(BlackScholes, ZeroVolLimit) {
    const auto atm = bs::price_greeks(terms(100, 100, 1, 0, 1e-300, OptionKind::call));
    EXPECT_EQ(atm.price, 0.0);
    EXPECT_EQ(atm.delta, 0.5);
    const auto itm = bs::price_greeks(terms(101, 100, 1, 0, 1e-300, OptionKind::call));
    EXPECT_EQ(itm.price, 1.0);
    EXPECT_EQ(itm.delta, 1.0);
    const auto otm_put = bs::price_greeks(terms(101, 100, 1, 0, 1e-300, OptionKind::put));
    EXPECT_EQ(otm_put.price, 0.0);
    EXPECT_EQ(otm_put.delta, 0.0);
    const auto atm_put = bs::price_greeks(terms(100, 100, 1, 0, 1e-300, OptionKind::put));
    EXPECT_EQ(atm_put.delta, -0.5);
}

TEST(BlackScholes, SmallVolApproachesIntrinsic) {
    const auto g = bs::price_greeks(terms(100, 100, 1, 0, 1e-9, OptionKind::call));
    EXPECT_NEAR(g.price, 0.0, 1e-6);
    EXPECT_NEAR(g.delta, 0.5, 1e-6);
}

TEST(BlackScholes, RejectsInvalidTerms) {
    EXPECT_THROW(bs::price(terms(0, 100, 1, 0, 0.2, OptionKind::call)), DomainError);
    EXPECT_THROW(bs::price(terms(100, -1, 1, 0, 0.2, OptionKind::call)), DomainError);
    EXPECT_THROW(bs::price(terms(100, 100, 0, 0, 0.2, OptionKind::call)), DomainError);
    EXPECT_THROW(bs::price(terms(100, 100, 1, 0, 0, OptionKind::call)), DomainError);
    EXPECT_THROW(bs::price(terms(100, 100, 1, 0, NAN, OptionKind::call)), DomainError);
}

TEST(BlackScholes, ParityOnRandomDraws) {
    const auto r = checks::parity_draws(1000, 20240611);
    EXPECT_EQ(r.checked, 1000u);
    EXPECT_LE(r.worst, 1e-10);
}

TEST(BlackScholes, GreekSignsAndRanges) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const auto t = terms(100, 50 + 100 * u(gen), 0.05 + 2 * u(gen), 0.03 * u(gen),
                             0.05 + u(gen), OptionKind::call);
        auto p = t;
        p.kind = OptionKind::put;
        const auto gc = bs::price_greeks(t);
        const auto gp = bs::price_greeks(p);
        EXPECT_GE(gc.delta, 0.0);
        EXPECT_LE(gc.delta, 1.0);
        EXPECT_GE(gp.delta, -1.0);
        EXPECT_LE(gp.delta, 0.0);
        EXPECT_GE(gc.gamma, 0.0);
        EXPECT_GE(gc.vega, 0.0);
        EXPECT_NEAR(gc.delta - gp.delta, 1.0, 1e-14);
    }
}

TEST(BlackScholes, FiniteDifferenceGreeks) {
    const auto r = checks::greek_differences();
    EXPECT_LE(r.worst, 1e-5) << r.worst_at.strike << ' ' << r.worst_at.ttm << ' ' << r.worst_at.vol;
}

TEST(BlackScholes, ThetaIsCalendarTimeDerivative) {
    for (auto kind : {OptionKind::call, OptionKind::put}) {
        for (double k : {80.0, 100.0, 125.0}) {
            auto x = terms(100, k, 0.75, 0.03, 0.25, kind);
            const double h = 1e-5;
            auto up = x, dn = x;
            up.ttm += h;
            dn.ttm -= h;
            const double fd = -(bs::price(up) - bs::price(dn)) / (2 * h);
            EXPECT_LT(rel_err(bs::price_greeks(x).theta, fd, 1e-2), 1e-6) << k;
        }
    }
}

TEST(BlackScholes, MonotoneInVolAndSpot) {
    double prev = 0.0;
    for (double v = 0.02; v < 2.0; v += 0.02) {
        const double p = bs::price(terms(100, 120, 1, 0.01, v, OptionKind::call));
        EXPECT_GT(p, prev);
        prev = p;
    }
    double prev_delta = 0.0;
    for (double s = 50; s < 200; s += 1) {
        const double d = bs::price_greeks(terms(s, 100, 1, 0.01, 0.3, OptionKind::call)).delta;
        EXPECT_GT(d, prev_delta);
        prev_delta = d;
    }
}

TEST(ImpliedVol, RoundTripSimple) {
    auto t = terms(100, 100, 1, 0, 0.3, OptionKind::call);
    const double p = bs::price(t);
    EXPECT_NEAR(bs::implied_vol(p, t), 0.3, 1e-8);
}

TEST(ImpliedVol, SurfaceSweep) {
    for (int vi = 1; vi <= 20; ++vi) {
        const double v = 0.05 * vi;
        for (double m : {0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.2}) {
            for (auto kind : {OptionKind::call, OptionKind::put}) {
                auto t = terms(100, 100 / m, 1.0, 0.0, v, kind);
                const double p = bs::price(t);
                EXPECT_NEAR(bs::implied_vol(p, t), v, 1e-8) << v << ' ' << m;
            }
        }
    }
}

TEST(ImpliedVol, InvariantGrid) {
    const auto r = checks::implied_vol_grid();
    EXPECT_GT(r.checked, 4000u);
    EXPECT_LE(r.worst, 1e-8) << r.worst_at.strike << ' ' << r.worst_at.ttm << ' ' << r.worst_at.vol;
    EXPECT_LE(r.worst_ill, 1.0);
    EXPECT_LT(r.ill_conditioned, r.checked / 5);
    std::cout << "checked " << r.checked << ", ill-conditioned " << r.ill_conditioned
              << ", skipped " << r.skipped << '\n';
}

TEST(ImpliedVol, OutOfBounds) {
    auto t = terms(100, 90, 1, 0, 0.2, OptionKind::call);
    EXPECT_THROW(bs::implied_vol(9.0, t), OutOfBoundsError);   // below intrinsic
    EXPECT_THROW(bs::implied_vol(10.0, t), OutOfBoundsError);  // at intrinsic
    EXPECT_THROW(bs::implied_vol(100.0, t), OutOfBoundsError); // at spot
    t.kind = OptionKind::put;
    EXPECT_THROW(bs::implied_vol(-1.0, t), OutOfBoundsError);
    EXPECT_THROW(bs::implied_vol(95.0, t), OutOfBoundsError);  // above discounted strike
}

TEST(ImpliedVol, NonConvergenceOnTinyIterationCap) {
    auto t = terms(100, 130, 1, 0, 0.2, OptionKind::call);
    const double p = bs::price(t);
    bs::ImpliedVolOptions opt;
    opt.max_iterations = 1;
    opt.initial_guess = 4.0;
    EXPECT_THROW(bs::implied_vol(p, t, opt), NonConvergenceError);
}
