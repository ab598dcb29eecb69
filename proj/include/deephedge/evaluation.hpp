#pragma once

// Gain ratios against the Black-Scholes delta benchmark:
//
//   gain = 1 - sum (dV - h dS)^2 / sum (dV - delta_bs dS)^2
//
// overall, per delta bucket and per maturity category, plus the closed-form
// least-squares constant correction used as a baseline.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "deephedge/csv.hpp"
#include "deephedge/errors.hpp"
#include "deephedge/learner.hpp"
#include "deephedge/pipeline.hpp"

namespace deephedge::eval {

using pipeline::HedgeSample;
using pipeline::TtmBucket;

inline constexpr std::size_t kLowCountThreshold = 30;

struct GroupStat {
    std::size_t count = 0;
    double model_sse = 0.0;
    double benchmark_sse = 0.0;
    double gain = 0.0;  // NaN when the benchmark SSE is zero
    bool low_count = false;
};

// Gains are formed from mean squared errors so that the overall figure is
// exactly 1 - model_mse / benchmark_mse.
inline double gain_from(double model_sse, double benchmark_sse, std::size_t n) {
    if (!(benchmark_sse > 0.0)) return std::nan("");
    const double nn = static_cast<double>(n);
    return 1.0 - (model_sse / nn) / (benchmark_sse / nn);
}

inline void check_aligned(const learn::Vector& hedges, const std::vector<HedgeSample>& samples) {
    if (static_cast<std::size_t>(hedges.size()) != samples.size()) {
        throw ShapeError("hedge ratios and samples are not aligned");
    }
}

inline double gain_ratio(const learn::Vector& hedges, const std::vector<HedgeSample>& samples) {
    check_aligned(hedges, samples);
    if (samples.empty()) throw DegenerateError("gain ratio of an empty sample set");
    double model = 0.0, bench = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const double em = s.dv - hedges(static_cast<Eigen::Index>(i)) * s.ds;
        const double eb = s.dv - s.delta_bs() * s.ds;
        model += em * em;
        bench += eb * eb;
    }
    if (!(bench > 0.0)) throw DegenerateError("benchmark hedging error is zero");
    return gain_from(model, bench, samples.size());
}

struct GainReport {
    std::string model_name;
    int horizon_days = 1;
    GroupStat overall;
    std::map<int, GroupStat> per_bucket;      // delta bucket in tenths
    std::map<TtmBucket, GroupStat> per_ttm;
    double benchmark_mse = 0.0;
    double model_mse = 0.0;
};

// Per-group SSEs. The overall SSEs are the sums of the delta-bucket SSEs in
// bucket order, so the partition identity holds exactly.
inline GainReport report_from_hedges(const std::string& model_name, int horizon_days,
                                     const learn::Vector& hedges,
                                     const std::vector<HedgeSample>& samples) {
    check_aligned(hedges, samples);
    if (samples.empty()) throw DegenerateError("report on an empty test set");
    GainReport r;
    r.model_name = model_name;
    r.horizon_days = horizon_days;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const double em = s.dv - hedges(static_cast<Eigen::Index>(i)) * s.ds;
        const double eb = s.dv - s.delta_bs() * s.ds;
        for (GroupStat* g : {&r.per_bucket[s.bucket], &r.per_ttm[s.ttm_bucket]}) {
            ++g->count;
            g->model_sse += em * em;
            g->benchmark_sse += eb * eb;
        }
    }
    auto finish = [](GroupStat& g) {
        g.gain = gain_from(g.model_sse, g.benchmark_sse, g.count);
        g.low_count = g.count < kLowCountThreshold;
    };
    for (auto& [b, g] : r.per_bucket) {
        finish(g);
        r.overall.count += g.count;
        r.overall.model_sse += g.model_sse;
        r.overall.benchmark_sse += g.benchmark_sse;
    }
    for (auto& [b, g] : r.per_ttm) finish(g);
    if (!(r.overall.benchmark_sse > 0.0)) throw DegenerateError("benchmark hedging error is zero");
    const double n = static_cast<double>(r.overall.count);
    r.model_mse = r.overall.model_sse / n;
    r.benchmark_mse = r.overall.benchmark_sse / n;
    r.overall.gain = 1.0 - r.model_mse / r.benchmark_mse;
    r.overall.low_count = r.overall.count < kLowCountThreshold;
    return r;
}

inline GainReport bucketed_report(const std::string& model_name, int horizon_days,
                                  const learn::TrainedModel& model,
                                  const std::vector<HedgeSample>& test_samples) {
    return report_from_hedges(model_name, horizon_days, learn::predict_hedge(model, test_samples),
                              test_samples);
}

// ---------------------------------------------------------------- OLS oracle

enum class Grouping { global, per_bucket };

struct OracleFit {
    Grouping grouping = Grouping::global;
    std::map<int, double> correction;  // key 0 for the global fit
    double in_sample_gain = 0.0;

    double correction_for(int bucket) const {
        const auto it = correction.find(grouping == Grouping::global ? 0 : bucket);
        if (it == correction.end()) {
            throw DegenerateError("no oracle correction for bucket " + pipeline::bucket_label(bucket));
        }
        return it->second;
    }
};

inline learn::Vector oracle_hedges(const OracleFit& fit, const std::vector<HedgeSample>& samples) {
    learn::Vector h(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        h(static_cast<Eigen::Index>(i)) = samples[i].delta_bs() + fit.correction_for(samples[i].bucket);
    }
    return h;
}

// c = sum (dV - delta_bs dS) dS / sum dS^2 per group: the least-squares
// constant residual.
inline OracleFit ols_oracle(const std::vector<HedgeSample>& samples, Grouping grouping) {
    if (samples.empty()) throw DegenerateError("oracle fit on an empty sample set");
    std::map<int, std::pair<double, double>> sums;
    for (const auto& s : samples) {
        auto& [num, den] = sums[grouping == Grouping::global ? 0 : s.bucket];
        num += (s.dv - s.delta_bs() * s.ds) * s.ds;
        den += s.ds * s.ds;
    }
    OracleFit fit;
    fit.grouping = grouping;
    for (const auto& [g, nd] : sums) {
        if (!(nd.second > 0.0)) {
            throw DegenerateError("oracle group " + std::to_string(g) + " has zero sum of dS^2");
        }
        fit.correction[g] = nd.first / nd.second;
    }
    fit.in_sample_gain = gain_ratio(oracle_hedges(fit, samples), samples);
    return fit;
}

// ---------------------------------------------------------------- output

inline std::string format_gain(const GroupStat& g) {
    if (std::isnan(g.gain)) return "n/a";
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << g.gain;
    if (g.low_count) os << '*';
    return os.str();
}

// Machine-readable report at full precision.
inline void write_report_csv(std::ostream& out, const std::vector<GainReport>& reports) {
    out << "model,horizon_days,group_type,group,gain,count,model_sse,benchmark_sse,low_count\n";
    auto row = [&](const GainReport& r, const char* type, const std::string& group,
                   const GroupStat& g) {
        out << r.model_name << ',' << r.horizon_days << ',' << type << ',' << group << ','
            << csv::format_double(g.gain) << ',' << g.count << ','
            << csv::format_double(g.model_sse) << ',' << csv::format_double(g.benchmark_sse) << ','
            << (g.low_count ? 1 : 0) << '\n';
    };
    for (const auto& r : reports) {
        row(r, "overall", "all", r.overall);
        for (const auto& [b, g] : r.per_bucket) row(r, "delta_bucket", pipeline::bucket_label(b), g);
        for (const auto& [b, g] : r.per_ttm) row(r, "ttm_bucket", std::string(pipeline::ttm_label(b)), g);
    }
}

// Delta buckets ordered by |d| (0.1, 0.2, ... or -0.1, -0.2, ...).
inline std::vector<int> bucket_rows(const std::vector<GainReport>& reports) {
    std::vector<int> rows;
    for (const auto& r : reports) {
        for (const auto& [b, g] : r.per_bucket) {
            if (std::find(rows.begin(), rows.end(), b) == rows.end()) rows.push_back(b);
        }
    }
    std::sort(rows.begin(), rows.end(), [](int a, int b) {
        return std::abs(a) != std::abs(b) ? std::abs(a) < std::abs(b) : a > b;
    });
    return rows;
}

// Plain-text table: delta buckets as rows, models as columns, then an
// overall row and a maturity-category block. '*' marks fewer than 30 samples.
inline void write_report_table(std::ostream& out, const std::vector<GainReport>& reports,
                               const std::string& title = {}) {
    constexpr int w0 = 14, w = 12;
    if (!title.empty()) out << title << '\n';
    auto rule = [&] { out << std::string(w0 + w * reports.size(), '-') << '\n'; };
    rule();
    out << std::left << std::setw(w0) << "delta bucket" << std::right;
    for (const auto& r : reports) out << std::setw(w) << r.model_name;
    out << '\n';
    rule();
    for (int b : bucket_rows(reports)) {
        out << std::left << std::setw(w0) << pipeline::bucket_label(b) << std::right;
        for (const auto& r : reports) {
            const auto it = r.per_bucket.find(b);
            out << std::setw(w) << (it == r.per_bucket.end() ? "-" : format_gain(it->second));
        }
        out << '\n';
    }
    out << std::left << std::setw(w0) << "Overall" << std::right;
    for (const auto& r : reports) out << std::setw(w) << format_gain(r.overall);
    out << '\n';
    rule();
    out << std::left << std::setw(w0) << "maturity" << std::right << '\n';
    for (auto tb : pipeline::kTtmBuckets) {
        bool any = false;
        for (const auto& r : reports) any = any || r.per_ttm.count(tb);
        if (!any) continue;
        out << std::left << std::setw(w0) << pipeline::ttm_label(tb) << std::right;
        for (const auto& r : reports) {
            const auto it = r.per_ttm.find(tb);
            out << std::setw(w) << (it == r.per_ttm.end() ? "-" : format_gain(it->second));
        }
        out << '\n';
    }
    rule();
    out << "samples: ";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        out << (i ? ", " : "") << reports[i].model_name << "=" << reports[i].overall.count;
    }
    out << "\n* fewer than " << kLowCountThreshold << " samples\n";
}

}  // namespace deephedge::eval
