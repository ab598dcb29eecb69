#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "deephedge/evaluation.hpp"
#include "deephedge/market_sim.hpp"

using namespace deephedge;
using learn::Vector;
using pipeline::HedgeSample;

namespace {

HedgeSample sample(double dv, double ds, double delta, double ttm_days = 60) {
    HedgeSample s;
    s.quote.kind = delta > 0 ? OptionKind::call : OptionKind::put;
    s.quote.delta_bs = delta;
    s.quote.ttm_days = ttm_days;
    s.dv = dv;
    s.ds = ds;
    s.bucket = pipeline::assign_delta_bucket(delta);
    s.ttm_bucket = pipeline::assign_ttm_bucket(ttm_days / kDaysPerYear);
    return s;
}

std::vector<HedgeSample> gbm_samples() {
    const auto panel = sim::simulate_gbm_panel({}, 200, sim::Lattice{}, 31).quotes();
    return pipeline::build_hedge_samples(pipeline::apply_filters(panel, {}), panel, 1,
                                         pipeline::make_feature_spec("Fea2"))
        .samples;
}

Vector deltas(const std::vector<HedgeSample>& s) {
    Vector h(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) h(static_cast<Eigen::Index>(i)) = s[i].delta_bs();
    return h;
}

}  // namespace

TEST(GainRatio, Identities) {
    const auto s = gbm_samples();
    EXPECT_EQ(eval::gain_ratio(deltas(s), s), 0.0);
    Vector exact(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) exact(static_cast<Eigen::Index>(i)) = s[i].dv / s[i].ds;
    EXPECT_NEAR(eval::gain_ratio(exact, s), 1.0, 1e-12);
}

TEST(GainRatio, TwoSampleHandCase) {
    const std::vector<HedgeSample> s{sample(1, 2, 0.4), sample(0.5, 1, 0.6)};
    EXPECT_EQ(eval::gain_ratio(Vector::Constant(2, 0.5), s), 1.0);
    const auto r = eval::report_from_hedges("m", 1, Vector::Constant(2, 0.5), s);
    EXPECT_NEAR(r.overall.benchmark_sse, 0.05, 1e-16);
    EXPECT_EQ(r.overall.model_sse, 0.0);
    // Hedge 0.3 on both: errors 0.4 and 0.2, SSE 0.2, gain 1 - 0.2 / 0.05 = -3.
    EXPECT_NEAR(eval::gain_ratio(Vector::Constant(2, 0.3), s), -3.0, 1e-14);
}

TEST(GainRatio, Errors) {
    const std::vector<HedgeSample> hedged{sample(0.4, 1, 0.4)};
    EXPECT_THROW(eval::gain_ratio(Vector::Constant(1, 0.4), hedged), DegenerateError);
    EXPECT_THROW(eval::gain_ratio(Vector(0), {}), DegenerateError);
    EXPECT_THROW(eval::gain_ratio(Vector::Zero(2), hedged), ShapeError);
}

TEST(Report, PartitionAdditivityAndCounts) {
    const auto s = gbm_samples();
    rng::SeqRng gen(2);
    Vector h = deltas(s);
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) += gen.uniform(-0.05, 0.05);
    const auto r = eval::report_from_hedges("m", 1, h, s);
    double model = 0, bench = 0, tm = 0, tb = 0;
    std::size_t n = 0, nt = 0;
    for (const auto& [b, g] : r.per_bucket) {
        model += g.model_sse;
        bench += g.benchmark_sse;
        n += g.count;
        EXPECT_EQ(g.low_count, g.count < 30);
    }
    for (const auto& [b, g] : r.per_ttm) {
        tm += g.model_sse;
        tb += g.benchmark_sse;
        nt += g.count;
    }
    EXPECT_EQ(model, r.overall.model_sse);
    EXPECT_EQ(bench, r.overall.benchmark_sse);
    EXPECT_EQ(n, s.size());
    EXPECT_EQ(nt, s.size());
    EXPECT_NEAR(tm, model, 1e-12 * model);
    EXPECT_NEAR(tb, bench, 1e-12 * bench);
    EXPECT_EQ(r.overall.gain, 1.0 - r.model_mse / r.benchmark_mse);
    EXPECT_NEAR(r.overall.gain, eval::gain_ratio(h, s), 1e-12);
}

TEST(Report, SingleBucketAndZeroResidual) {
    const std::vector<HedgeSample> s{sample(1, 2, 0.42), sample(-0.3, -1, 0.44), sample(0.2, 0.1, 0.41)};
    const auto r = eval::report_from_hedges("m", 5, Vector::Constant(3, 0.5), s);
    ASSERT_EQ(r.per_bucket.size(), 1u);
    EXPECT_EQ(r.per_bucket.at(4).gain, r.overall.gain);
    EXPECT_TRUE(r.per_bucket.at(4).low_count);
    EXPECT_EQ(r.horizon_days, 5);
    const auto z = eval::report_from_hedges("bs", 1, deltas(s), s);
    EXPECT_EQ(z.overall.gain, 0.0);
    for (const auto& [b, g] : z.per_bucket) EXPECT_EQ(g.gain, 0.0);
}

TEST(OlsOracle, HandCases) {
    const auto one = eval::ols_oracle({sample(1, 2, 0.4)}, eval::Grouping::global);
    EXPECT_DOUBLE_EQ(one.correction.at(0), 0.1);
    EXPECT_DOUBLE_EQ(one.in_sample_gain, 1.0);
    const std::vector<HedgeSample> hedged{sample(0.4, 1, 0.4), sample(-1.0, -2, 0.5), sample(0.1, 1, 0.3)};
    const auto per = eval::ols_oracle(hedged, eval::Grouping::per_bucket);
    EXPECT_EQ(per.correction.at(4), 0.0);
    EXPECT_EQ(per.correction.at(5), 0.0);
    EXPECT_DOUBLE_EQ(per.correction.at(3), -0.2);
    EXPECT_THROW(per.correction_for(7), DegenerateError);
    EXPECT_THROW(eval::ols_oracle({sample(1, 0, 0.4)}, eval::Grouping::global), DegenerateError);
}

TEST(OlsOracle, InSampleGainIsNonNegative) {
    const auto s = gbm_samples();
    for (auto g : {eval::Grouping::global, eval::Grouping::per_bucket}) {
        const auto fit = eval::ols_oracle(s, g);
        EXPECT_GE(fit.in_sample_gain, 0.0);
    }
    const auto global = eval::ols_oracle(s, eval::Grouping::global);
    const auto per = eval::ols_oracle(s, eval::Grouping::per_bucket);
    EXPECT_GE(per.in_sample_gain, global.in_sample_gain - 1e-15);
}

TEST(ReportOutput, TableAndCsv) {
    const std::vector<HedgeSample> s{sample(1, 2, 0.42), sample(-0.3, -1, -0.44),
                                     sample(0.2, 0.1, 0.91, 800)};
    const auto r = eval::report_from_hedges("Fea2-BS", 1, Vector::Constant(3, 0.5), s);
    std::ostringstream table, csv;
    eval::write_report_table(table, {r}, "calls");
    eval::write_report_csv(csv, {r});
    EXPECT_NE(table.str().find("Overall"), std::string::npos);
    EXPECT_NE(table.str().find("-0.4"), std::string::npos);
    EXPECT_NE(table.str().find(">2y"), std::string::npos);
    EXPECT_NE(table.str().find('*'), std::string::npos);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
              "model,horizon_days,group_type,group,gain,count,model_sse,benchmark_sse,low_count");
    EXPECT_EQ(eval::bucket_rows({r}), (std::vector<int>{4, -4, 9}));
    eval::GroupStat g;
    g.gain = 0.123456;
    EXPECT_EQ(eval::format_gain(g), "0.1235");
    g.gain = std::nan("");
    EXPECT_EQ(eval::format_gain(g), "n/a");
}
