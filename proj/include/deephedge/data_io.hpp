#pragma once

// Canonical quote CSV and sample CSV.
//
// Quote CSV columns (header row, comma separated, UTF-8):
//   date_index, contract_id, kind, spot, strike, ttm_days, mid, implied_vol,
//   delta_bs, gamma_bs, vega_bs, theta_bs, vix_proxy, index_return
// Sample CSV: the quote columns of the start observation, then
//   dv, ds, bucket, ttm_bucket, x_<feature>...
// Floats are written with 17 significant digits.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "deephedge/bs.hpp"
#include "deephedge/csv.hpp"
#include "deephedge/errors.hpp"
#include "deephedge/pipeline.hpp"
#include "deephedge/quote.hpp"

namespace deephedge::data {

inline const std::vector<std::string>& quote_columns() {
    static const std::vector<std::string> cols{
        "date_index", "contract_id", "kind",     "spot",     "strike",    "ttm_days",  "mid",
        "implied_vol", "delta_bs",   "gamma_bs", "vega_bs",  "theta_bs",  "vix_proxy", "index_return"};
    return cols;
}

inline void write_quote_fields(std::ostream& out, const OptionQuote& q) {
    using csv::format_double;
    out << q.date_index << ',' << q.contract_id << ',' << bs::kind_code(q.kind) << ','
        << format_double(q.spot) << ',' << format_double(q.strike) << ','
        << format_double(q.ttm_days) << ',' << format_double(q.mid) << ','
        << format_double(q.implied_vol) << ',' << format_double(q.delta_bs) << ','
        << format_double(q.gamma_bs) << ',' << format_double(q.vega_bs) << ','
        << format_double(q.theta_bs) << ',' << format_double(q.vix_proxy) << ','
        << format_double(q.index_return);
}

inline void write_header(std::ostream& out, const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
}

inline void write_quotes(std::ostream& out, const std::vector<OptionQuote>& quotes) {
    write_header(out, quote_columns());
    for (const auto& q : quotes) {
        write_quote_fields(out, q);
        out << '\n';
    }
}

inline void write_quotes(const std::string& path, const std::vector<OptionQuote>& quotes) {
    auto out = csv::open_for_write(path);
    write_quotes(out, quotes);
    if (!out) throw IoError("write failed: " + path);
}

// Maps canonical field names to the column names used in a file. Fields
// absent from the map are looked up under their canonical name. When no mid
// column exists, "bid" and "ask" columns supply mid = (bid + ask) / 2. An
// optional "volume" column marks untraded rows (volume = 0).
using SchemaMap = std::map<std::string, std::string>;

struct IngestOptions {
    SchemaMap schema;
    std::vector<std::string> require_fields = pipeline::FilterPolicy{}.require_fields;
    double rate = 0.0;  // flat rate used to re-price implied vols
    double reprice_tolerance = 1e-3;
    bool check_units = true;
};

struct IngestResult {
    std::vector<OptionQuote> quotes;
    std::size_t rows_read = 0;
    std::size_t dropped_missing = 0;
    std::size_t dropped_untraded = 0;
};

namespace detail {

inline std::optional<OptionKind> parse_kind(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    if (s == "c" || s == "call") return OptionKind::call;
    if (s == "p" || s == "put") return OptionKind::put;
    return std::nullopt;
}

}  // namespace detail

inline IngestResult ingest_table(const csv::Table& table, const IngestOptions& opt,
                                 const std::string& origin) {
    IngestResult out;
    if (table.header.empty()) return out;  // empty file
    auto col = [&](const std::string& field) -> std::optional<std::size_t> {
        auto it = opt.schema.find(field);
        return table.column(it == opt.schema.end() ? field : it->second);
    };
    auto is_required = [&](const std::string& f) {
        return std::find(opt.require_fields.begin(), opt.require_fields.end(), f) !=
               opt.require_fields.end();
    };

    const auto c_mid = col("mid");
    const auto c_bid = col("bid");
    const auto c_ask = col("ask");
    const auto c_volume = col("volume");
    const bool mid_from_book = !c_mid && c_bid && c_ask;

    std::map<std::string, std::optional<std::size_t>> cols;
    for (const auto& f : quote_columns()) {
        cols[f] = col(f);
        const bool satisfied = cols[f] || (f == "mid" && mid_from_book);
        if (!satisfied && is_required(f)) {
            throw FormatError(origin + ": missing required column for '" + f + "'");
        }
    }

    for (const auto& row : table.rows) {
        ++out.rows_read;
        if (c_volume) {
            const auto vol = csv::parse_double(row[*c_volume]);
            if (vol && *vol == 0.0) {
                ++out.dropped_untraded;
                continue;
            }
        }
        bool missing = false;
        auto num = [&](const std::string& f) {
            const auto& c = cols[f];
            std::optional<double> v = c ? csv::parse_double(row[*c]) : std::nullopt;
            if (!v) {
                if (is_required(f)) missing = true;
                return std::nan("");
            }
            return *v;
        };

        OptionQuote q;
        if (const auto& c = cols["date_index"]; c) {
            const auto d = csv::parse_int(row[*c]);
            if (d) q.date_index = static_cast<int>(*d); else missing = true;
        }
        if (const auto& c = cols["contract_id"]; c && !row[*c].empty()) {
            q.contract_id = row[*c];
        } else if (is_required("contract_id")) {
            missing = true;
        }
        if (const auto& c = cols["kind"]; c) {
            const auto k = detail::parse_kind(row[*c]);
            if (k) q.kind = *k; else missing = true;
        }
        q.spot = num("spot");
        q.strike = num("strike");
        q.ttm_days = num("ttm_days");
        if (mid_from_book) {
            const auto bid = csv::parse_double(row[*c_bid]);
            const auto ask = csv::parse_double(row[*c_ask]);
            if (bid && ask) q.mid = 0.5 * (*bid + *ask); else missing = true;
        } else {
            q.mid = num("mid");
        }
        q.implied_vol = num("implied_vol");
        q.delta_bs = num("delta_bs");
        q.gamma_bs = num("gamma_bs");
        q.vega_bs = num("vega_bs");
        q.theta_bs = num("theta_bs");
        q.vix_proxy = num("vix_proxy");
        q.index_return = num("index_return");

        if (!missing && !(q.spot > 0.0 && q.strike > 0.0 && q.ttm_days > 0.0 &&
                          q.implied_vol > 0.0)) {
            missing = true;
        }
        if (missing) {
            ++out.dropped_missing;
            continue;
        }
        if (opt.check_units) {
            const double model = bs::price({q.spot, q.strike, q.ttm(), opt.rate, q.implied_vol, q.kind});
            const double tol = opt.reprice_tolerance * std::abs(q.mid) + 1e-12 * q.spot;
            if (std::abs(model - q.mid) > tol) {
                throw UnitInconsistencyError(
                    origin + ": row " + std::to_string(out.rows_read) + " (" + q.contract_id +
                    "): implied vol re-prices to " + csv::format_double(model) + " vs mid " +
                    csv::format_double(q.mid) +
                    "; check vol units (annualized, per unit), ttm_days and the rate");
            }
        }
        out.quotes.push_back(std::move(q));
    }
    return out;
}

inline IngestResult ingest_csv(const std::string& path, const IngestOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return ingest_table(csv::read_table(in, path), opt, path);
}

// ---------------------------------------------------------------- samples

inline std::vector<std::string> sample_columns(const pipeline::FeatureSpec& spec) {
    std::vector<std::string> cols = quote_columns();
    for (const char* c : {"dv", "ds", "bucket", "ttm_bucket"}) cols.emplace_back(c);
    for (const auto& f : spec.columns) cols.push_back("x_" + f);
    return cols;
}

inline void write_samples(std::ostream& out, const std::vector<pipeline::HedgeSample>& samples,
                          const pipeline::FeatureSpec& spec) {
    write_header(out, sample_columns(spec));
    for (const auto& s : samples) {
        write_quote_fields(out, s.quote);
        out << ',' << csv::format_double(s.dv) << ',' << csv::format_double(s.ds) << ','
            << pipeline::bucket_label(s.bucket) << ',' << pipeline::ttm_label(s.ttm_bucket);
        for (double x : s.features) out << ',' << csv::format_double(x);
        out << '\n';
    }
}

inline void write_samples(const std::string& path,
                          const std::vector<pipeline::HedgeSample>& samples,
                          const pipeline::FeatureSpec& spec) {
    auto out = csv::open_for_write(path);
    write_samples(out, samples, spec);
    if (!out) throw IoError("write failed: " + path);
}

inline bool is_sample_table(const csv::Table& t) { return t.column("dv").has_value(); }

// Feature column names (without the x_ prefix) of a sample table.
inline std::vector<std::string> sample_feature_columns(const csv::Table& t) {
    std::vector<std::string> out;
    for (const auto& h : t.header) {
        if (h.rfind("x_", 0) == 0) out.push_back(h.substr(2));
    }
    return out;
}

struct SampleTable {
    std::vector<std::string> feature_columns;
    std::vector<pipeline::HedgeSample> samples;
};

inline SampleTable read_samples(const csv::Table& t, const std::string& origin) {
    SampleTable out;
    out.feature_columns = sample_feature_columns(t);
    IngestOptions opt;
    opt.check_units = false;
    opt.require_fields = quote_columns();
    const IngestResult quotes = ingest_table(t, opt, origin);
    if (quotes.dropped_missing || quotes.dropped_untraded) {
        throw FormatError(origin + ": sample file has incomplete quote fields");
    }
    auto need = [&](const std::string& name) {
        const auto c = t.column(name);
        if (!c) throw FormatError(origin + ": missing column " + name);
        return *c;
    };
    const std::size_t c_dv = need("dv"), c_ds = need("ds"), c_b = need("bucket"),
                      c_tb = need("ttm_bucket");
    std::vector<std::size_t> c_x;
    for (const auto& f : out.feature_columns) c_x.push_back(need("x_" + f));

    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        pipeline::HedgeSample s;
        s.quote = quotes.quotes[r];
        auto num = [&](std::size_t c) {
            const auto v = csv::parse_double(row[c]);
            if (!v) throw FormatError(origin + ": bad number in row " + std::to_string(r + 1));
            return *v;
        };
        s.dv = num(c_dv);
        s.ds = num(c_ds);
        s.bucket = static_cast<int>(std::lround(num(c_b) * 10.0));
        s.ttm_bucket = pipeline::parse_ttm_label(row[c_tb]);
        for (std::size_t c : c_x) s.features.push_back(num(c));
        out.samples.push_back(std::move(s));
    }
    return out;
}

inline SampleTable read_samples(const std::string& path) {
    return read_samples(csv::read_table(path), path);
}

}  // namespace deephedge::data
