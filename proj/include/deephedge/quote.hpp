#pragma once

#include <string>
#include <vector>

#include "deephedge/bs.hpp"

namespace deephedge {

using bs::OptionKind;

inline constexpr double kDaysPerYear = 365.0;  // ACT/365 year fractions

// One option observation. Time to maturity is stored in calendar days so that
// the canonical CSV round-trips exactly; ttm() derives the year fraction.
struct OptionQuote {
    std::string contract_id;
    int date_index = 0;
    OptionKind kind = OptionKind::call;
    double spot = 0.0;
    double strike = 0.0;
    double ttm_days = 0.0;
    double mid = 0.0;
    double implied_vol = 0.0;
    double delta_bs = 0.0;
    double gamma_bs = 0.0;
    double vega_bs = 0.0;
    double theta_bs = 0.0;
    double vix_proxy = 0.0;
    double index_return = 0.0;

    double ttm() const { return ttm_days / kDaysPerYear; }
    double moneyness() const { return spot / strike; }

    bool operator==(const OptionQuote&) const = default;
};

struct MarketSnapshot {
    int date_index = 0;
    double spot = 0.0;
    double instantaneous_vol = 0.0;
    double vix_proxy = 0.0;
    double index_return = 0.0;
    std::vector<OptionQuote> quotes;
};

}  // namespace deephedge
