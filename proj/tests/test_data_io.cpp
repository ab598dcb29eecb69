#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "deephedge/data_io.hpp"
#include "deephedge/market_sim.hpp"

using namespace deephedge;

namespace {

data::IngestResult ingest_text(const std::string& text, const data::IngestOptions& opt = {}) {
    std::istringstream in(text);
    return data::ingest_table(csv::read_table(in, "mem"), opt, "mem");
}

std::string canonical_text(const std::vector<OptionQuote>& qs) {
    std::ostringstream out;
    data::write_quotes(out, qs);
    return out.str();
}

OptionQuote priced_quote(double vol = 0.25) {
    OptionQuote q;
    q.contract_id = "C100-60";
    q.date_index = 3;
    q.kind = OptionKind::call;
    q.spot = 100;
    q.strike = 100;
    q.ttm_days = 60;
    const auto g = bs::price_greeks({q.spot, q.strike, q.ttm(), 0.0, vol, q.kind});
    q.mid = g.price;
    q.implied_vol = vol;
    q.delta_bs = g.delta;
    q.gamma_bs = g.gamma;
    q.vega_bs = g.vega;
    q.theta_bs = g.theta;
    q.vix_proxy = 0.2;
    q.index_return = 0.001;
    return q;
}

}  // namespace

TEST(QuoteCsv, PanelRoundTripIsExact) {
    sim::GbmParams p;
    p.rate = 0.02;
    const auto quotes = sim::simulate_gbm_panel(p, 60, sim::Lattice{}, 4).quotes();
    data::IngestOptions opt;
    opt.rate = p.rate;
    const auto back = ingest_text(canonical_text(quotes), opt);
    EXPECT_EQ(back.quotes, quotes);
    EXPECT_EQ(back.rows_read, quotes.size());
    EXPECT_EQ(back.dropped_missing, 0u);
    EXPECT_EQ(canonical_text(back.quotes), canonical_text(quotes));
}

TEST(QuoteCsv, MissingImpliedVolIsDroppedAndCounted) {
    auto q = priced_quote();
    std::string text = canonical_text({q, q, q});
    // Blank the implied vol of the second row.
    std::istringstream in(text);
    auto table = csv::read_table(in, "mem");
    table.rows[1][*table.column("implied_vol")] = "";
    const auto r = data::ingest_table(table, {}, "mem");
    EXPECT_EQ(r.quotes.size(), 2u);
    EXPECT_EQ(r.dropped_missing, 1u);
    EXPECT_EQ(r.rows_read, 3u);
}

TEST(QuoteCsv, EmptyFileGivesEmptyResult) {
    const auto r = ingest_text("");
    EXPECT_TRUE(r.quotes.empty());
    EXPECT_EQ(r.rows_read, 0u);
    EXPECT_EQ(r.dropped_missing, 0u);
    EXPECT_EQ(r.dropped_untraded, 0u);
    const auto header_only = ingest_text(canonical_text({}));
    EXPECT_TRUE(header_only.quotes.empty());
    EXPECT_EQ(header_only.rows_read, 0u);
}

TEST(QuoteCsv, SchemaMapBidAskAndVolume) {
    const auto q = priced_quote();
    std::ostringstream text;
    text << "day,id,cp,S,K,dte,bid,ask,iv,delta_bs,gamma_bs,vega_bs,theta_bs,vix_proxy,"
            "index_return,volume\n";
    for (int volume : {10, 0}) {
        text << q.date_index << ',' << q.contract_id << ",C," << csv::format_double(q.spot) << ','
             << csv::format_double(q.strike) << ',' << csv::format_double(q.ttm_days) << ','
             << csv::format_double(q.mid - 0.01) << ',' << csv::format_double(q.mid + 0.01) << ','
             << csv::format_double(q.implied_vol) << ',' << csv::format_double(q.delta_bs) << ','
             << csv::format_double(q.gamma_bs) << ',' << csv::format_double(q.vega_bs) << ','
             << csv::format_double(q.theta_bs) << ",0.2,0.001," << volume << '\n';
    }
    data::IngestOptions opt;
    opt.schema = {{"date_index", "day"}, {"contract_id", "id"}, {"kind", "cp"},
                  {"spot", "S"},         {"strike", "K"},       {"ttm_days", "dte"},
                  {"implied_vol", "iv"}};
    const auto r = ingest_text(text.str(), opt);
    ASSERT_EQ(r.quotes.size(), 1u);
    EXPECT_EQ(r.dropped_untraded, 1u);
    EXPECT_NEAR(r.quotes[0].mid, q.mid, 1e-14);
    EXPECT_EQ(r.quotes[0].kind, OptionKind::call);
    EXPECT_EQ(r.quotes[0].contract_id, q.contract_id);
}

TEST(QuoteCsv, PercentVolsAreRejected) {
    auto q = priced_quote();
    q.implied_vol = 25.0;  // percent instead of a fraction
    EXPECT_THROW(ingest_text(canonical_text({q})), UnitInconsistencyError);
    data::IngestOptions lax;
    lax.check_units = false;
    EXPECT_EQ(ingest_text(canonical_text({q}), lax).quotes.size(), 1u);
}

TEST(QuoteCsv, MalformedInput) {
    const std::string header = canonical_text({});
    EXPECT_THROW(ingest_text(header + "1,2,3\n"), FormatError);  // ragged row
    EXPECT_THROW(ingest_text("date_index,contract_id\n1,A\n"), FormatError);  // missing columns
    auto bad_kind = canonical_text({priced_quote()});
    bad_kind.replace(bad_kind.find(",C,"), 3, ",X,");
    const auto r = ingest_text(bad_kind);
    EXPECT_EQ(r.dropped_missing, 1u);
    EXPECT_THROW(data::ingest_csv("/nonexistent/quotes.csv"), IoError);
}

TEST(QuoteCsv, FormatDoubleRoundTrips) {
    for (double v : {0.1, 1.0 / 3, 1e-300, -2.5e17, 123456789.123456789}) {
        EXPECT_EQ(*csv::parse_double(csv::format_double(v)), v);
    }
    EXPECT_FALSE(csv::parse_double("nan").has_value());
    EXPECT_FALSE(csv::parse_double("1.5x").has_value());
}

TEST(SampleCsv, RoundTripIsExact) {
    const auto panel = sim::simulate_gbm_panel({}, 40, sim::Lattice{}, 8).quotes();
    const auto spec = pipeline::make_feature_spec("Fea7");
    const auto built =
        pipeline::build_hedge_samples(pipeline::apply_filters(panel, {}), panel, 1, spec);
    ASSERT_FALSE(built.samples.empty());
    std::ostringstream out;
    data::write_samples(out, built.samples, spec);
    std::istringstream in(out.str());
    const auto table = csv::read_table(in, "mem");
    EXPECT_TRUE(data::is_sample_table(table));
    const auto back = data::read_samples(table, "mem");
    EXPECT_EQ(back.feature_columns, spec.columns);
    EXPECT_EQ(back.samples, built.samples);
}
