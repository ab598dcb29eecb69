#pragma once

// From quote panels to supervised hedging samples: filters, delta and
// maturity buckets, feature sets, pairing at a horizon, chronological splits
// and feature normalization.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "deephedge/errors.hpp"
#include "deephedge/quote.hpp"
#include "deephedge/rng.hpp"

namespace deephedge::pipeline {

// ---------------------------------------------------------------- filters

struct FilterPolicy {
    int min_ttm_days = 14;
    std::array<double, 2> call_delta_range{0.05, 0.95};
    std::array<double, 2> put_delta_range{-0.95, -0.05};
    std::vector<std::string> require_fields{"date_index", "contract_id", "kind",     "spot",
                                            "strike",     "ttm_days",    "mid",      "implied_vol",
                                            "delta_bs",   "gamma_bs",    "vega_bs",  "theta_bs"};

    void validate() const {
        auto ok = [](const std::array<double, 2>& r) {
            return r[0] >= -1.0 && r[1] <= 1.0 && r[0] <= r[1];
        };
        if (!ok(call_delta_range) || !ok(put_delta_range)) {
            throw DomainError("filter delta ranges must lie within [-1, 1]");
        }
        if (min_ttm_days < 0) throw DomainError("min_ttm_days must be >= 0");
    }
};

inline bool passes_filter(const OptionQuote& q, const FilterPolicy& policy) {
    if (!(q.ttm_days >= policy.min_ttm_days)) return false;
    const auto& r = q.kind == OptionKind::call ? policy.call_delta_range : policy.put_delta_range;
    return q.delta_bs >= r[0] && q.delta_bs <= r[1];
}

inline std::vector<OptionQuote> apply_filters(const std::vector<OptionQuote>& quotes,
                                              const FilterPolicy& policy) {
    policy.validate();
    std::vector<OptionQuote> out;
    out.reserve(quotes.size());
    for (const auto& q : quotes) {
        if (passes_filter(q, policy)) out.push_back(q);
    }
    return out;
}

// ---------------------------------------------------------------- buckets

// Delta bucket d (stored in tenths, d10 = 10 d) holds deltas in
// [d - 0.05, d + 0.05) on the signed axis. The filter keeps the closed ends
// 0.95 (calls) and -0.05 (puts), which fall just outside that grid; they are
// assigned to the adjacent buckets 0.9 and -0.1.
inline int assign_delta_bucket(double delta) {
    if (!(delta >= -0.95 && delta <= 0.95) || (delta > -0.05 && delta < 0.05)) {
        throw OutOfBoundsError("delta " + std::to_string(delta) + " outside bucketed range");
    }
    if (delta == 0.95) return 9;
    if (delta == -0.05) return -1;
    // Compare against the decimal boundaries as doubles so that inputs
    // written as decimals land on the documented side.
    int k = static_cast<int>(std::floor(delta * 10.0 + 0.5));
    while (delta < (2 * k - 1) / 20.0) --k;
    while (delta >= (2 * k + 1) / 20.0) ++k;
    return k;
}

inline std::string bucket_label(int d10) {
    std::string s = d10 < 0 ? "-0." : "0.";
    s += std::to_string(std::abs(d10));
    return s;
}

enum class TtmBucket { m0_1, m1_3, m3_6, m6_12, y1_2, y2_plus };

inline constexpr std::array<TtmBucket, 6> kTtmBuckets{TtmBucket::m0_1, TtmBucket::m1_3,
                                                      TtmBucket::m3_6, TtmBucket::m6_12,
                                                      TtmBucket::y1_2, TtmBucket::y2_plus};

// Lower-inclusive year boundaries: [0, 1/12), [1/12, 1/4), [1/4, 1/2),
// [1/2, 1), [1, 2), [2, inf).
inline TtmBucket assign_ttm_bucket(double ttm_years) {
    if (!(ttm_years > 0.0)) throw DomainError("ttm must be positive");
    if (ttm_years < 1.0 / 12.0) return TtmBucket::m0_1;
    if (ttm_years < 0.25) return TtmBucket::m1_3;
    if (ttm_years < 0.5) return TtmBucket::m3_6;
    if (ttm_years < 1.0) return TtmBucket::m6_12;
    if (ttm_years < 2.0) return TtmBucket::y1_2;
    return TtmBucket::y2_plus;
}

inline std::string_view ttm_label(TtmBucket b) {
    switch (b) {
        case TtmBucket::m0_1: return "0-1m";
        case TtmBucket::m1_3: return "1-3m";
        case TtmBucket::m3_6: return "3-6m";
        case TtmBucket::m6_12: return "6m-1y";
        case TtmBucket::y1_2: return "1-2y";
        case TtmBucket::y2_plus: return ">2y";
    }
    return "?";
}

inline TtmBucket parse_ttm_label(std::string_view s) {
    for (auto b : kTtmBuckets) {
        if (ttm_label(b) == s) return b;
    }
    throw FormatError("unknown ttm bucket label '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- features

inline const std::vector<std::string>& feature_models() {
    static const std::vector<std::string> names{"Fea2", "Fea3", "Fea4",   "Fea5",
                                                "Fea6", "Fea7", "Fea3-CL"};
    return names;
}

// Ordered feature columns of a model. "sentiment" is the VIX proxy for calls
// and the previous-day index return for puts. Moneyness is spot / strike.
inline std::vector<std::string> feature_columns(std::string_view model) {
    static const std::vector<std::string> ladder{"ttm",      "delta_bs", "moneyness", "implied_vol",
                                                 "theta_bs", "vega_bs",  "gamma_bs"};
    if (model == "Fea3-CL") return {"ttm", "delta_bs", "sentiment"};
    for (int n = 2; n <= 7; ++n) {
        if (model == "Fea" + std::to_string(n)) {
            return {ladder.begin(), ladder.begin() + n};
        }
    }
    throw DomainError("unknown feature model '" + std::string(model) + "'");
}

inline double feature_value(const OptionQuote& q, std::string_view column) {
    if (column == "ttm") return q.ttm();
    if (column == "delta_bs") return q.delta_bs;
    if (column == "moneyness") return q.moneyness();
    if (column == "implied_vol") return q.implied_vol;
    if (column == "theta_bs") return q.theta_bs;
    if (column == "vega_bs") return q.vega_bs;
    if (column == "gamma_bs") return q.gamma_bs;
    if (column == "sentiment") return q.kind == OptionKind::call ? q.vix_proxy : q.index_return;
    throw DomainError("unknown feature column '" + std::string(column) + "'");
}

struct NormStat {
    double mean = 0.0;
    double sd = 1.0;

    bool operator==(const NormStat&) const = default;
};

struct FeatureSpec {
    std::string model_name;
    std::vector<std::string> columns;
    std::vector<NormStat> norm_stats;  // empty until fitted

    bool fitted() const { return norm_stats.size() == columns.size() && !columns.empty(); }
    std::size_t dim() const { return columns.size(); }

    bool operator==(const FeatureSpec&) const = default;
};

inline FeatureSpec make_feature_spec(std::string_view model) {
    return FeatureSpec{std::string(model), feature_columns(model), {}};
}

// ---------------------------------------------------------------- samples

struct HedgeSample {
    OptionQuote quote;  // start-of-period observation
    double dv = 0.0;
    double ds = 0.0;
    int bucket = 0;  // delta bucket in tenths
    TtmBucket ttm_bucket = TtmBucket::m0_1;
    std::vector<double> features;

    double delta_bs() const { return quote.delta_bs; }
    int date_index() const { return quote.date_index; }

    bool operator==(const HedgeSample&) const = default;
};

struct SampleBuild {
    std::vector<HedgeSample> samples;
    std::size_t skipped_no_forward = 0;
    std::size_t skipped_nonfinite = 0;
};

class QuoteIndex {
public:
    explicit QuoteIndex(const std::vector<OptionQuote>& panel) : panel_(&panel) {
        index_.reserve(panel.size());
        for (std::size_t i = 0; i < panel.size(); ++i) {
            index_.emplace(key(panel[i].contract_id, panel[i].date_index), i);
        }
    }

    const OptionQuote* find(const std::string& contract, int date) const {
        auto it = index_.find(key(contract, date));
        return it == index_.end() ? nullptr : &(*panel_)[it->second];
    }

private:
    static std::string key(const std::string& contract, int date) {
        return contract + '#' + std::to_string(date);
    }

    const std::vector<OptionQuote>* panel_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline std::vector<double> raw_features(const OptionQuote& q, const FeatureSpec& spec) {
    std::vector<double> x(spec.columns.size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = feature_value(q, spec.columns[j]);
    return x;
}

// Pairs each start quote at date t with the same contract at t + horizon
// (trading days) in `panel`. Start quotes are expected to be filtered; the
// forward observation is looked up in the whole panel, since leaving the
// filter window does not remove a contract's price. Features are raw
// (normalization is applied by the model).
inline SampleBuild build_hedge_samples(const std::vector<OptionQuote>& starts,
                                       const std::vector<OptionQuote>& panel, int horizon_days,
                                       const FeatureSpec& spec) {
    if (horizon_days < 1) throw DomainError("horizon must be at least one trading day");
    const QuoteIndex index(panel);
    SampleBuild out;
    out.samples.reserve(starts.size());
    for (const auto& q : starts) {
        const OptionQuote* fwd = index.find(q.contract_id, q.date_index + horizon_days);
        if (fwd == nullptr) {
            ++out.skipped_no_forward;
            continue;
        }
        HedgeSample s;
        s.quote = q;
        s.dv = fwd->mid - q.mid;
        s.ds = fwd->spot - q.spot;
        s.features = raw_features(q, spec);
        const bool finite = std::isfinite(s.dv) && std::isfinite(s.ds) &&
                            std::all_of(s.features.begin(), s.features.end(),
                                        [](double v) { return std::isfinite(v); });
        if (!finite) {
            ++out.skipped_nonfinite;
            continue;
        }
        s.bucket = assign_delta_bucket(q.delta_bs);
        s.ttm_bucket = assign_ttm_bucket(q.ttm());
        out.samples.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------- splits

struct SplitPlan {
    int train_end_date = 0;
    double val_fraction = 0.2;
    std::uint64_t val_seed = 0;
};

struct Split {
    std::vector<HedgeSample> train;
    std::vector<HedgeSample> val;
    std::vector<HedgeSample> test;
};

// Test: date_index > train_end_date. The earlier samples are partitioned at
// random into validation (round(n * val_fraction)) and training; each part
// keeps the input order.
inline Split make_split(const std::vector<HedgeSample>& samples, const SplitPlan& plan) {
    if (!(plan.val_fraction > 0.0 && plan.val_fraction < 1.0)) {
        throw DomainError("val_fraction must lie in (0, 1)");
    }
    Split out;
    std::vector<std::size_t> early;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].date_index() > plan.train_end_date) {
            out.test.push_back(samples[i]);
        } else {
            early.push_back(i);
        }
    }
    const auto n_val = static_cast<std::size_t>(std::llround(early.size() * plan.val_fraction));
    rng::SeqRng gen(plan.val_seed);
    std::vector<std::size_t> order = gen.permutation(early.size());
    std::vector<char> is_val(early.size(), 0);
    for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = 1;
    for (std::size_t i = 0; i < early.size(); ++i) {
        (is_val[i] ? out.val : out.train).push_back(samples[early[i]]);
    }
    if (out.train.empty() || out.val.empty() || out.test.empty()) {
        throw EmptyPartitionError("split produced an empty partition (train=" +
                                  std::to_string(out.train.size()) +
                                  ", val=" + std::to_string(out.val.size()) +
                                  ", test=" + std::to_string(out.test.size()) + ")");
    }
    return out;
}

// ---------------------------------------------------------------- normalization

// Per-column z-score statistics from the training split. A constant column
// (possible for implied vol under a constant-volatility model) keeps sd = 1
// so it is centred but not scaled.
inline FeatureSpec fit_normalization(FeatureSpec spec, const std::vector<HedgeSample>& train) {
    if (train.empty()) throw EmptyPartitionError("cannot fit normalization on an empty split");
    const std::size_t d = spec.columns.size();
    std::vector<double> mean(d, 0.0), m2(d, 0.0);
    std::size_t n = 0;
    for (const auto& s : train) {
        if (s.features.size() != d) throw SpecMismatchError("feature count differs from spec");
        ++n;
        for (std::size_t j = 0; j < d; ++j) {
            const double delta = s.features[j] - mean[j];
            mean[j] += delta / static_cast<double>(n);
            m2[j] += delta * (s.features[j] - mean[j]);
        }
    }
    spec.norm_stats.assign(d, {});
    for (std::size_t j = 0; j < d; ++j) {
        const double sd = std::sqrt(m2[j] / static_cast<double>(n));
        spec.norm_stats[j] = {mean[j], sd > 1e-12 * std::max(1.0, std::abs(mean[j])) ? sd : 1.0};
    }
    return spec;
}

}  // namespace deephedge::pipeline
