#pragma once

// Heston oracle checks shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "deephedge/bs.hpp"
#include "deephedge/errors.hpp"
#include "deephedge/heston.hpp"

namespace checks {

struct LimitResult {
    double worst_rel = 0.0;
    std::size_t points = 0;
};

// Heston with tiny vol-of-vol and v0 = theta_bar = 0.04 against
// Black-Scholes at vol 0.2 over strikes 80..120 and expiries of
// 1, 2, 3, 6, 12 and 24 months, calls and puts.
inline LimitResult heston_degenerate_limit(double rho, double xi = 1e-6) {
    deephedge::heston::HestonParams p;
    p.v0 = 0.04;
    p.theta_bar = 0.04;
    p.xi = xi;
    p.rho = rho;
    LimitResult r;
    for (int months : {1, 2, 3, 6, 12, 24}) {
        const double ttm = months / 12.0;
        for (int k = 80; k <= 120; k += 5) {
            for (auto kind : {deephedge::bs::OptionKind::call, deephedge::bs::OptionKind::put}) {
                const double h = deephedge::heston::option_price(p, 100.0, p.v0, k, ttm, kind);
                const double b = deephedge::bs::price({100.0, double(k), ttm, p.rate, 0.2, kind});
                r.worst_rel = std::max(r.worst_rel, std::abs(h - b) / b);
                ++r.points;
            }
        }
    }
    return r;
}

struct McResult {
    double analytic = 0.0;
    double mc_price = 0.0;
    double std_error = 0.0;
    double z_score = 0.0;
    std::size_t paths = 0;
    std::uint64_t seed = 0;
};

// Compares the semi-analytic call price with the cached Monte-Carlo value
// (generated by tests/tools/heston_mc_oracle).
inline McResult heston_mc_oracle(const std::string& fixture) {
    std::ifstream in(fixture);
    if (!in) throw deephedge::IoError("missing fixture " + fixture);
    const auto j = nlohmann::json::parse(in);
    deephedge::heston::HestonParams p;
    const auto& jp = j.at("params");
    p.s0 = jp.at("s0");
    p.v0 = jp.at("v0");
    p.kappa = jp.at("kappa");
    p.theta_bar = jp.at("theta_bar");
    p.xi = jp.at("xi");
    p.rho = jp.at("rho");
    p.rate = jp.at("rate");
    McResult r;
    r.analytic = deephedge::heston::option_price(p, p.s0, p.v0, j.at("strike"), j.at("ttm"),
                                                 deephedge::bs::OptionKind::call);
    r.mc_price = j.at("price");
    r.std_error = j.at("std_error");
    r.paths = j.at("paths");
    r.seed = j.at("seed");
    r.z_score = (r.analytic - r.mc_price) / r.std_error;
    return r;
}

}  // namespace checks
