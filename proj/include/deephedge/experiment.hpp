#pragma once

// Experiment front end: config schema, per-stage seeds and the
// simulate / build-samples / run / report commands.
//
// Config file (JSON). Every key is optional; unknown keys are rejected.
//
//   seed            master seed (uint64)
//   output_dir      directory for all outputs
//   workers         experiment pairs trained in parallel
//   source          {type: "gbm" | "heston" | "csv", days, gbm{...}, heston{...},
//                    lattice{moneyness, expiry_months, substeps_per_day},
//                    threads, csv_path, csv_rate, schema{field: column}}
//   filter          {min_ttm_days, call_delta_range, put_delta_range, require_fields}
//   option_type     "call" | "put" | "both"
//   horizon_days    hedging horizon in trading days
//   features        subset of Fea2..Fea7, Fea3-CL
//   objectives      subset of ["direct", "residual"]
//   net             {hidden_layers, hidden_width, batch_norm}
//   train           {batch_size, max_epochs, patience, learning_rate, clip_norm}
//   split           {train_end_date, train_start_date, test_fraction, val_fraction}
//
// Relative paths are resolved against the working directory.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "deephedge/csv.hpp"
#include "deephedge/data_io.hpp"
#include "deephedge/errors.hpp"
#include "deephedge/evaluation.hpp"
#include "deephedge/learner.hpp"
#include "deephedge/market_sim.hpp"
#include "deephedge/model_io.hpp"
#include "deephedge/neural.hpp"
#include "deephedge/pipeline.hpp"
#include "deephedge/rng.hpp"

#ifndef DEEPHEDGE_BUILD_ID
#define DEEPHEDGE_BUILD_ID "unknown"
#endif

namespace deephedge::exp {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr const char* kBuildId = DEEPHEDGE_BUILD_ID;

// ---------------------------------------------------------------- config

struct SourceConfig {
    std::string type = "heston";
    int days = 5 * sim::kTradingDaysPerYear;
    sim::GbmParams gbm;
    sim::HestonParams heston;
    sim::Lattice lattice;
    unsigned threads = 1;
    std::string csv_path;
    double csv_rate = 0.0;
    data::SchemaMap schema;
};

struct SplitConfig {
    std::optional<int> train_end_date;    // default: derived from test_fraction
    std::optional<int> train_start_date;  // earlier samples are not used at all
    double test_fraction = 0.1;
    double val_fraction = 0.2;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    int workers = 1;
    SourceConfig source;
    pipeline::FilterPolicy filter;
    std::string option_type = "call";
    int horizon_days = 1;
    std::vector<std::string> features{"Fea2"};
    std::vector<learn::Objective> objectives{learn::Objective::direct, learn::Objective::residual};
    nn::NetConfig net;
    learn::TrainPlan train;
    SplitConfig split;
};

namespace detail {

// Strict reader over one JSON object; records consumed keys so that
// leftovers can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + "expected an object");
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void integer(const std::string& key, int& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) throw ConfigError(at(key) + ": expected an integer");
            const auto x = v->get<std::int64_t>();
            if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
                throw ConfigError(at(key) + ": integer out of range");
            }
            out = static_cast<int>(x);
        }
    }

    void optional_integer(const std::string& key, std::optional<int>& out) {
        if (const json* v = find(key)) {
            if (v->is_null()) {
                out.reset();
                return;
            }
            int x = 0;
            seen_.erase(key);
            integer(key, x);
            out = x;
        }
    }

    void unsigned64(const std::string& key, std::uint64_t& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_unsigned()) throw ConfigError(at(key) + ": expected a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }

    void real(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) throw ConfigError(at(key) + ": expected a number");
            out = v->get<double>();
            if (!std::isfinite(out)) throw ConfigError(at(key) + ": must be finite");
        }
    }

    void boolean(const std::string& key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError(at(key) + ": expected true or false");
            out = v->get<bool>();
        }
    }

    void string(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) throw ConfigError(at(key) + ": expected a string");
            out = v->get<std::string>();
        }
    }

    template <class T>
    void array(const std::string& key, std::vector<T>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(at(key) + ": expected an array");
            std::vector<T> tmp;
            for (const auto& e : *v) {
                bool ok = false;
                if constexpr (std::is_same_v<T, std::string>) ok = e.is_string();
                else if constexpr (std::is_integral_v<T>) ok = e.is_number_integer();
                else ok = e.is_number();
                if (!ok) throw ConfigError(at(key) + ": array element has the wrong type");
                tmp.push_back(e.get<T>());
            }
            out = std::move(tmp);
        }
    }

    void range(const std::string& key, std::array<double, 2>& out) {
        std::vector<double> v;
        array(key, v);
        if (find(key) == nullptr) return;
        if (v.size() != 2) throw ConfigError(at(key) + ": expected [low, high]");
        out = {v[0], v[1]};
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError(at(k) + ": unknown key");
        }
    }

private:
    std::string where() const { return path_.empty() ? "" : path_ + ": "; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class Fn>
void section(ObjectReader& parent, const std::string& key, Fn&& fn) {
    if (const json* v = parent.find(key)) {
        ObjectReader r(*v, parent.at(key));
        fn(r);
        r.finish();
    }
}

}  // namespace detail

inline const std::vector<std::string>& option_types() {
    static const std::vector<std::string> names{"call", "put", "both"};
    return names;
}

// Semantic checks that need no files. Path existence is checked at run time.
inline void validate(const ExperimentConfig& c) {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    try {
        const auto& s = c.source;
        if (s.type == "gbm") {
            s.gbm.validate();
        } else if (s.type == "heston") {
            s.heston.validate();
        } else if (s.type == "csv") {
            if (s.csv_path.empty()) fail("source.csv_path is required for a csv source");
        } else {
            fail("source.type must be gbm, heston or csv");
        }
        if (s.type != "csv") {
            s.lattice.validate();
            if (s.days < 2) fail("source.days must be >= 2");
            if (s.threads < 1) fail("source.threads must be >= 1");
        }
        c.filter.validate();
        c.net.validate();
        c.train.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    if (std::find(option_types().begin(), option_types().end(), c.option_type) ==
        option_types().end()) {
        fail("option_type must be call, put or both");
    }
    if (c.horizon_days < 1) fail("horizon_days must be >= 1");
    if (c.workers < 1) fail("workers must be >= 1");
    if (c.output_dir.empty()) fail("output_dir must not be empty");
    if (c.features.empty()) fail("features must name at least one feature model");
    std::set<std::string> seen;
    for (const auto& f : c.features) {
        const auto& all = pipeline::feature_models();
        if (std::find(all.begin(), all.end(), f) == all.end()) {
            fail("unknown feature model '" + f + "'");
        }
        if (!seen.insert(f).second) fail("feature model '" + f + "' listed twice");
    }
    if (c.objectives.empty()) fail("objectives must name at least one objective");
    if (c.objectives.size() == 2 && c.objectives[0] == c.objectives[1]) {
        fail("objective listed twice");
    }
    const auto& sp = c.split;
    if (!(sp.test_fraction > 0.0 && sp.test_fraction < 1.0)) fail("split.test_fraction must lie in (0, 1)");
    if (!(sp.val_fraction > 0.0 && sp.val_fraction < 1.0)) fail("split.val_fraction must lie in (0, 1)");
    if (sp.train_end_date && sp.train_start_date && *sp.train_start_date > *sp.train_end_date) {
        fail("split.train_start_date is after split.train_end_date");
    }
}

inline ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    detail::ObjectReader r(j, "");
    r.unsigned64("seed", c.seed);
    r.string("output_dir", c.output_dir);
    r.integer("workers", c.workers);
    detail::section(r, "source", [&](detail::ObjectReader& s) {
        auto& src = c.source;
        s.string("type", src.type);
        s.integer("days", src.days);
        int threads = static_cast<int>(src.threads);
        s.integer("threads", threads);
        if (threads < 1) throw ConfigError("source.threads must be >= 1");
        src.threads = static_cast<unsigned>(threads);
        s.string("csv_path", src.csv_path);
        s.real("csv_rate", src.csv_rate);
        detail::section(s, "schema", [&](detail::ObjectReader& m) {
            for (const auto& f : data::quote_columns()) {
                std::string col;
                m.string(f, col);
                if (!col.empty()) src.schema[f] = col;
            }
            for (const char* f : {"bid", "ask", "volume"}) {
                std::string col;
                m.string(f, col);
                if (!col.empty()) src.schema[f] = col;
            }
        });
        detail::section(s, "gbm", [&](detail::ObjectReader& g) {
            g.real("s0", src.gbm.s0);
            g.real("drift", src.gbm.drift);
            g.real("vol", src.gbm.vol);
            g.real("rate", src.gbm.rate);
        });
        detail::section(s, "heston", [&](detail::ObjectReader& h) {
            h.real("s0", src.heston.s0);
            h.real("v0", src.heston.v0);
            h.real("kappa", src.heston.kappa);
            h.real("theta_bar", src.heston.theta_bar);
            h.real("xi", src.heston.xi);
            h.real("rho", src.heston.rho);
            h.real("rate", src.heston.rate);
        });
        detail::section(s, "lattice", [&](detail::ObjectReader& l) {
            l.array("moneyness", src.lattice.moneyness);
            l.array("expiry_months", src.lattice.expiry_months);
            l.integer("substeps_per_day", src.lattice.substeps_per_day);
        });
    });
    detail::section(r, "filter", [&](detail::ObjectReader& f) {
        f.integer("min_ttm_days", c.filter.min_ttm_days);
        f.range("call_delta_range", c.filter.call_delta_range);
        f.range("put_delta_range", c.filter.put_delta_range);
        f.array("require_fields", c.filter.require_fields);
    });
    r.string("option_type", c.option_type);
    r.integer("horizon_days", c.horizon_days);
    r.array("features", c.features);
    if (r.find("objectives") != nullptr) {
        std::vector<std::string> names;
        r.array("objectives", names);
        c.objectives.clear();
        for (const auto& n : names) {
            try {
                c.objectives.push_back(learn::parse_objective(n));
            } catch (const DomainError& e) {
                throw ConfigError(std::string("objectives: ") + e.what());
            }
        }
    }
    detail::section(r, "net", [&](detail::ObjectReader& n) {
        n.integer("hidden_layers", c.net.hidden_layers);
        n.integer("hidden_width", c.net.hidden_width);
        n.boolean("batch_norm", c.net.batch_norm);
    });
    detail::section(r, "train", [&](detail::ObjectReader& t) {
        t.integer("batch_size", c.train.batch_size);
        t.integer("max_epochs", c.train.max_epochs);
        t.integer("patience", c.train.patience);
        t.real("learning_rate", c.train.learning_rate);
        t.real("clip_norm", c.train.clip_norm);
    });
    detail::section(r, "split", [&](detail::ObjectReader& s) {
        s.optional_integer("train_end_date", c.split.train_end_date);
        s.optional_integer("train_start_date", c.split.train_start_date);
        s.real("test_fraction", c.split.test_fraction);
        s.real("val_fraction", c.split.val_fraction);
    });
    r.finish();
    validate(c);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(j);
}

// Fully resolved config, suitable for re-parsing.
inline json effective_config(const ExperimentConfig& c) {
    const auto& s = c.source;
    json source{{"type", s.type}};
    if (s.type == "csv") {
        json schema = json::object();
        for (const auto& [k, v] : s.schema) schema[k] = v;
        source["csv_path"] = s.csv_path;
        source["csv_rate"] = s.csv_rate;
        source["schema"] = std::move(schema);
    } else {
        source["days"] = s.days;
        source["threads"] = s.threads;
        if (s.type == "gbm") {
            source["gbm"] = {{"s0", s.gbm.s0}, {"drift", s.gbm.drift}, {"vol", s.gbm.vol},
                             {"rate", s.gbm.rate}};
        } else {
            const auto& h = s.heston;
            source["heston"] = {{"s0", h.s0},       {"v0", h.v0},   {"kappa", h.kappa},
                                {"theta_bar", h.theta_bar}, {"xi", h.xi}, {"rho", h.rho},
                                {"rate", h.rate}};
        }
        source["lattice"] = {{"moneyness", s.lattice.moneyness},
                             {"expiry_months", s.lattice.expiry_months},
                             {"substeps_per_day", s.lattice.substeps_per_day}};
    }
    json objectives = json::array();
    for (auto o : c.objectives) objectives.push_back(learn::objective_name(o));
    auto opt_int = [](const std::optional<int>& v) { return v ? json(*v) : json(nullptr); };
    return json{{"seed", c.seed},
                {"output_dir", c.output_dir},
                {"workers", c.workers},
                {"source", std::move(source)},
                {"filter", io::filter_to_json(c.filter)},
                {"option_type", c.option_type},
                {"horizon_days", c.horizon_days},
                {"features", c.features},
                {"objectives", std::move(objectives)},
                {"net",
                 {{"hidden_layers", c.net.hidden_layers},
                  {"hidden_width", c.net.hidden_width},
                  {"batch_norm", c.net.batch_norm}}},
                {"train",
                 {{"batch_size", c.train.batch_size},
                  {"max_epochs", c.train.max_epochs},
                  {"patience", c.train.patience},
                  {"learning_rate", c.train.learning_rate},
                  {"clip_norm", c.train.clip_norm}}},
                {"split",
                 {{"train_end_date", opt_int(c.split.train_end_date)},
                  {"train_start_date", opt_int(c.split.train_start_date)},
                  {"test_fraction", c.split.test_fraction},
                  {"val_fraction", c.split.val_fraction}}}};
}

// ---------------------------------------------------------------- seeds

// Per-stage seeds from the master seed. Direct and residual models of the
// same feature model share initialization and shuffling.
struct StageSeeds {
    std::uint64_t simulate;
    std::uint64_t split;
    std::uint64_t init(const std::string& feature_model) const {
        return rng::derive_seed(master, "init/" + feature_model);
    }
    std::uint64_t shuffle(const std::string& feature_model) const {
        return rng::derive_seed(master, "shuffle/" + feature_model);
    }
    std::uint64_t master;
};

inline StageSeeds stage_seeds(std::uint64_t master) {
    return {rng::derive_seed(master, "simulate"), rng::derive_seed(master, "split"), master};
}

// ---------------------------------------------------------------- data

inline std::string sidecar_path(const std::string& csv_path) { return csv_path + ".meta.json"; }

// Flat rate recorded in a quote file's sidecar, if there is one.
inline std::optional<double> sidecar_rate(const std::string& csv_path) {
    std::ifstream in(sidecar_path(csv_path));
    if (!in) return std::nullopt;
    try {
        json j;
        in >> j;
        return j.at("rate").get<double>();
    } catch (const json::exception& e) {
        throw FormatError(sidecar_path(csv_path) + ": " + e.what());
    }
}

inline double source_rate(const SourceConfig& s) {
    if (s.type == "gbm") return s.gbm.rate;
    if (s.type == "heston") return s.heston.rate;
    return s.csv_rate;
}

struct SimulatedData {
    sim::Panel panel;
    json meta;
};

inline SimulatedData simulate(const ExperimentConfig& c) {
    const auto& s = c.source;
    if (s.type != "gbm" && s.type != "heston") {
        throw ConfigError("simulate needs a gbm or heston source");
    }
    const std::uint64_t seed = stage_seeds(c.seed).simulate;
    SimulatedData out;
    try {
        out.panel = s.type == "gbm" ? sim::simulate_gbm_panel(s.gbm, s.days, s.lattice, seed)
                                    : sim::simulate_heston_panel(s.heston, s.days, s.lattice, seed,
                                                                 s.threads);
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    json source = effective_config(c).at("source");
    source.erase("threads");
    out.meta = json{{"generator", "deephedge"},
                    {"build", kBuildId},
                    {"master_seed", c.seed},
                    {"simulation_seed", seed},
                    {"rate", source_rate(s)},
                    {"source", std::move(source)},
                    {"snapshots", out.panel.snapshots.size()},
                    {"quotes", out.panel.quotes().size()},
                    {"dropped_unpriceable", out.panel.dropped_unpriceable}};
    if (s.type == "heston") out.meta["feller_ratio"] = s.heston.feller_ratio();
    return out;
}

inline void write_json(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

// Writes <output_dir>/quotes.csv and its metadata sidecar. Returns the CSV path.
inline std::string cmd_simulate(const ExperimentConfig& c) {
    validate(c);
    SimulatedData d = simulate(c);
    ensure_dir(c.output_dir);
    const std::string path = (fs::path(c.output_dir) / "quotes.csv").string();
    data::write_quotes(path, d.panel.quotes());
    write_json(sidecar_path(path), d.meta);
    return path;
}

inline std::vector<OptionQuote> select_option_type(std::vector<OptionQuote> quotes,
                                                   const std::string& option_type) {
    if (option_type == "both") return quotes;
    const OptionKind keep = option_type == "put" ? OptionKind::put : OptionKind::call;
    std::erase_if(quotes, [&](const OptionQuote& q) { return q.kind != keep; });
    return quotes;
}

inline std::vector<OptionQuote> read_quote_file(const std::string& path, double rate,
                                                const data::SchemaMap& schema,
                                                const std::vector<std::string>& require) {
    if (!fs::exists(path)) throw IoError("quote file not found: " + path);
    data::IngestOptions opt;
    opt.schema = schema;
    opt.require_fields = require;
    opt.rate = rate;
    return data::ingest_csv(path, opt).quotes;
}

// Quotes of the whole panel plus the filtered start quotes of the selected
// option type.
struct PreparedData {
    std::vector<OptionQuote> panel;
    std::vector<OptionQuote> starts;
    int first_date = 0;
    int last_date = 0;
    double rate = 0.0;
};

inline PreparedData prepare(const ExperimentConfig& c, std::vector<OptionQuote> quotes, double rate) {
    if (quotes.empty()) throw DegenerateError("no quotes to work with");
    PreparedData p;
    p.rate = rate;
    const auto [lo, hi] = std::minmax_element(
        quotes.begin(), quotes.end(),
        [](const OptionQuote& a, const OptionQuote& b) { return a.date_index < b.date_index; });
    p.first_date = lo->date_index;
    p.last_date = hi->date_index;
    p.starts = select_option_type(pipeline::apply_filters(quotes, c.filter), c.option_type);
    p.panel = std::move(quotes);
    return p;
}

inline int resolve_train_end(const ExperimentConfig& c, const PreparedData& d) {
    if (c.split.train_end_date) return *c.split.train_end_date;
    const int span = d.last_date - d.first_date + 1;
    const int test_days = static_cast<int>(std::lround(span * c.split.test_fraction));
    return d.last_date - std::max(test_days, 1);
}

// Samples of one feature model, split chronologically.
inline pipeline::Split feature_split(const ExperimentConfig& c, const PreparedData& d,
                                     const std::string& feature_model, int train_end_date) {
    const pipeline::FeatureSpec spec = pipeline::make_feature_spec(feature_model);
    std::vector<pipeline::HedgeSample> samples =
        pipeline::build_hedge_samples(d.starts, d.panel, c.horizon_days, spec).samples;
    if (c.split.train_start_date) {
        const int start = *c.split.train_start_date;
        std::erase_if(samples, [&](const pipeline::HedgeSample& s) { return s.date_index() < start; });
    }
    pipeline::SplitPlan plan;
    plan.train_end_date = train_end_date;
    plan.val_fraction = c.split.val_fraction;
    plan.val_seed = stage_seeds(c.seed).split;
    return pipeline::make_split(samples, plan);
}

// ---------------------------------------------------------------- run

struct PairOutcome {
    std::string label;
    std::string feature_model;
    learn::Objective objective = learn::Objective::residual;
    bool ok = false;
    std::string error_kind;
    std::string error;
    std::optional<eval::GainReport> report;
    std::string artifact_path;
};

struct RunResult {
    std::string output_dir;
    int train_end_date = 0;
    std::vector<PairOutcome> pairs;

    bool all_ok() const {
        return std::all_of(pairs.begin(), pairs.end(), [](const PairOutcome& p) { return p.ok; });
    }
};

// Labels in the table order: each feature model, direct before residual.
inline std::vector<std::pair<std::string, learn::Objective>> ordered_pairs(const ExperimentConfig& c) {
    std::vector<std::pair<std::string, learn::Objective>> out;
    for (const auto& f : pipeline::feature_models()) {
        if (std::find(c.features.begin(), c.features.end(), f) == c.features.end()) continue;
        for (auto o : {learn::Objective::direct, learn::Objective::residual}) {
            if (std::find(c.objectives.begin(), c.objectives.end(), o) != c.objectives.end()) {
                out.emplace_back(f, o);
            }
        }
    }
    return out;
}

inline learn::TrainPlan train_plan_for(const ExperimentConfig& c, const std::string& feature_model,
                                       learn::Objective o) {
    learn::TrainPlan plan = c.train;
    plan.objective = o;
    plan.shuffle_seed = stage_seeds(c.seed).shuffle(feature_model);
    return plan;
}

inline nn::NetConfig net_config_for(const ExperimentConfig& c, const std::string& feature_model) {
    nn::NetConfig net = c.net;
    net.seed = stage_seeds(c.seed).init(feature_model);
    net.input_dim = static_cast<int>(pipeline::feature_columns(feature_model).size());
    return net;
}

inline io::ModelArtifact make_artifact(const ExperimentConfig& c, const std::string& feature_model,
                                       learn::TrainedModel model, int train_end_date, double rate) {
    io::ModelArtifact a;
    a.meta.label = learn::model_label(feature_model, model.objective);
    a.meta.feature_model = feature_model;
    a.meta.horizon_days = c.horizon_days;
    a.meta.option_type = c.option_type;
    a.meta.train_end_date = train_end_date;
    a.meta.data_rate = rate;
    a.meta.filter = c.filter;
    a.meta.plan = train_plan_for(c, feature_model, model.objective);
    a.meta.init_seed = model.network.config.seed;
    a.model = std::move(model);
    return a;
}

inline void write_train_log(const std::string& path, const std::vector<learn::EpochLog>& history) {
    auto out = csv::open_for_write(path);
    out << "epoch,train_mse,val_mse\n";
    for (const auto& h : history) {
        out << h.epoch << ',' << csv::format_double(h.train_mse) << ','
            << csv::format_double(h.val_mse) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

inline void write_reports(const std::string& dir, const std::string& stem,
                          const std::vector<eval::GainReport>& reports, const std::string& title) {
    {
        const std::string path = (fs::path(dir) / (stem + ".csv")).string();
        auto out = csv::open_for_write(path);
        eval::write_report_csv(out, reports);
        if (!out) throw IoError("write failed: " + path);
    }
    {
        const std::string path = (fs::path(dir) / (stem + ".txt")).string();
        auto out = csv::open_for_write(path);
        eval::write_report_table(out, reports, title);
        if (!out) throw IoError("write failed: " + path);
    }
}

inline std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), ',', ';');
    return s;
}

// Wide summary: one column per model in table order; failed models are
// listed with their error and carry no values.
inline void write_summary(const std::string& dir, const RunResult& run, int horizon_days) {
    std::vector<eval::GainReport> ok;
    for (const auto& p : run.pairs) {
        if (p.ok) ok.push_back(*p.report);
    }
    {
        const std::string path = (fs::path(dir) / "summary.txt").string();
        auto out = csv::open_for_write(path);
        if (!ok.empty()) {
            eval::write_report_table(out, ok,
                                     "gain ratios vs Black-Scholes delta, horizon " +
                                         std::to_string(horizon_days) + " day(s), test dates > " +
                                         std::to_string(run.train_end_date));
        }
        for (const auto& p : run.pairs) {
            if (!p.ok) out << "FAILED " << p.label << " [" << p.error_kind << "]: " << p.error << '\n';
        }
        if (!out) throw IoError("write failed: " + path);
    }
    const std::string path = (fs::path(dir) / "summary.csv").string();
    auto out = csv::open_for_write(path);
    out << "group_type,group";
    for (const auto& p : run.pairs) out << ',' << p.label;
    out << '\n';
    out << "status,all";
    for (const auto& p : run.pairs) out << ',' << (p.ok ? "ok" : "failed: " + one_line(p.error));
    out << '\n';
    auto row = [&](const std::string& type, const std::string& group, auto&& pick) {
        out << type << ',' << group;
        for (const auto& p : run.pairs) {
            out << ',';
            if (!p.ok) continue;
            const eval::GroupStat* g = pick(*p.report);
            if (g != nullptr) out << csv::format_double(g->gain);
        }
        out << '\n';
    };
    row("overall", "all", [](const eval::GainReport& r) { return &r.overall; });
    for (int b : eval::bucket_rows(ok)) {
        row("delta_bucket", pipeline::bucket_label(b), [b](const eval::GainReport& r) {
            const auto it = r.per_bucket.find(b);
            return it == r.per_bucket.end() ? nullptr : &it->second;
        });
    }
    for (auto tb : pipeline::kTtmBuckets) {
        row("ttm_bucket", std::string(pipeline::ttm_label(tb)), [tb](const eval::GainReport& r) {
            const auto it = r.per_ttm.find(tb);
            return it == r.per_ttm.end() ? nullptr : &it->second;
        });
    }
    if (!out) throw IoError("write failed: " + path);
}

class Log {
public:
    explicit Log(std::ostream* out) : out_(out) {}
    void operator()(const std::string& line) {
        if (out_ == nullptr) return;
        std::lock_guard<std::mutex> lock(mu_);
        *out_ << line << '\n' << std::flush;
    }

private:
    std::ostream* out_;
    std::mutex mu_;
};

// Loads or simulates the quote panel described by the config. Simulated
// panels are written to <output_dir>/quotes.csv with their sidecar.
inline PreparedData load_data(const ExperimentConfig& c, Log& log) {
    if (c.source.type == "csv") {
        log("reading " + c.source.csv_path);
        const double rate = c.source.csv_rate;
        return prepare(c, read_quote_file(c.source.csv_path, rate, c.source.schema, c.filter.require_fields),
                       rate);
    }
    log("simulating " + c.source.type + " panel, " + std::to_string(c.source.days) + " days");
    SimulatedData d = simulate(c);
    std::vector<OptionQuote> quotes = d.panel.quotes();
    const std::string path = (fs::path(c.output_dir) / "quotes.csv").string();
    data::write_quotes(path, quotes);
    write_json(sidecar_path(path), d.meta);
    return prepare(c, std::move(quotes), source_rate(c.source));
}

inline std::string error_kind_of(const std::exception& e) {
    if (const auto* de = dynamic_cast<const Error*>(&e)) return de->kind();
    return "internal";
}

// Full experiment: data, then one (feature model, objective) pair per task.
// Pair failures are recorded and do not stop the run.
inline RunResult cmd_run(const ExperimentConfig& c, std::ostream* log_stream = nullptr) {
    validate(c);
    if (c.source.type == "csv" && !fs::exists(c.source.csv_path)) {
        throw IoError("quote file not found: " + c.source.csv_path);
    }
    Log log(log_stream);
    ensure_dir(c.output_dir);
    const PreparedData data = load_data(c, log);

    RunResult run;
    run.output_dir = c.output_dir;
    run.train_end_date = resolve_train_end(c, data);
    {
        ExperimentConfig eff = c;
        eff.split.train_end_date = run.train_end_date;
        json j = effective_config(eff);
        j["build"] = kBuildId;
        write_json((fs::path(c.output_dir) / "effective_config.json").string(), j);
    }

    const auto pairs = ordered_pairs(c);
    run.pairs.resize(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        run.pairs[i].feature_model = pairs[i].first;
        run.pairs[i].objective = pairs[i].second;
        run.pairs[i].label = learn::model_label(pairs[i].first, pairs[i].second);
    }

    // Splits are shared by both objectives of a feature model.
    std::vector<std::optional<pipeline::Split>> splits(c.features.size());
    std::vector<std::string> split_errors(c.features.size()), split_kinds(c.features.size());
    std::vector<std::once_flag> split_once(c.features.size());
    auto split_for = [&](const std::string& f) -> const pipeline::Split& {
        const auto k = static_cast<std::size_t>(
            std::find(c.features.begin(), c.features.end(), f) - c.features.begin());
        std::call_once(split_once[k], [&] {
            try {
                splits[k] = feature_split(c, data, f, run.train_end_date);
                log(f + ": train " + std::to_string(splits[k]->train.size()) + ", val " +
                    std::to_string(splits[k]->val.size()) + ", test " +
                    std::to_string(splits[k]->test.size()));
            } catch (const std::exception& e) {
                split_errors[k] = e.what();
                split_kinds[k] = error_kind_of(e);
            }
        });
        if (!splits[k]) throw Error(split_kinds[k], split_errors[k]);
        return *splits[k];
    };

    auto run_pair = [&](PairOutcome& out) {
        try {
            const pipeline::Split& split = split_for(out.feature_model);
            log(out.label + ": training");
            learn::TrainedModel model =
                learn::train(split.train, split.val, pipeline::make_feature_spec(out.feature_model),
                             net_config_for(c, out.feature_model),
                             train_plan_for(c, out.feature_model, out.objective));
            eval::GainReport report =
                eval::bucketed_report(out.label, c.horizon_days, model, split.test);

            const std::string dir = (fs::path(c.output_dir) / out.label).string();
            ensure_dir(dir);
            write_train_log((fs::path(dir) / "train_log.csv").string(), model.history);
            out.artifact_path = (fs::path(dir) / "model.json").string();
            io::save_artifact(out.artifact_path,
                              make_artifact(c, out.feature_model, std::move(model),
                                            run.train_end_date, data.rate));
            write_reports(dir, "report", {report}, out.label);
            std::ostringstream msg;
            msg << out.label << ": test gain " << eval::format_gain(report.overall);
            log(msg.str());
            out.report = std::move(report);
            out.ok = true;
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = e.what();
            out.error_kind = error_kind_of(e);
            log(out.label + ": failed: " + out.error);
        }
    };

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < run.pairs.size(); i = next++) run_pair(run.pairs[i]);
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(c.workers), run.pairs.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    write_summary(c.output_dir, run, c.horizon_days);
    return run;
}

// ---------------------------------------------------------------- build-samples

struct BuildSamplesRequest {
    std::string quotes_path;
    std::string output_path;
    std::string feature_model = "Fea2";
    int horizon_days = 1;
    std::string option_type = "call";
    pipeline::FilterPolicy filter;
    std::optional<double> rate;  // default: sidecar rate, else 0
};

inline std::size_t cmd_build_samples(const BuildSamplesRequest& req) {
    const auto& all = pipeline::feature_models();
    if (std::find(all.begin(), all.end(), req.feature_model) == all.end()) {
        throw ConfigError("unknown feature model '" + req.feature_model + "'");
    }
    if (std::find(option_types().begin(), option_types().end(), req.option_type) ==
        option_types().end()) {
        throw ConfigError("option type must be call, put or both");
    }
    const double rate = req.rate ? *req.rate : sidecar_rate(req.quotes_path).value_or(0.0);
    const std::vector<OptionQuote> quotes =
        read_quote_file(req.quotes_path, rate, {}, req.filter.require_fields);
    const auto starts = select_option_type(pipeline::apply_filters(quotes, req.filter), req.option_type);
    const pipeline::FeatureSpec spec = pipeline::make_feature_spec(req.feature_model);
    const auto built = pipeline::build_hedge_samples(starts, quotes, req.horizon_days, spec);
    data::write_samples(req.output_path, built.samples, spec);
    return built.samples.size();
}

// ---------------------------------------------------------------- report

struct ReportRequest {
    std::vector<std::string> model_paths;
    std::string data_path;  // quote CSV or sample CSV
    std::string output_dir;
    // Quote CSVs are scored on dates after this; default: each model's own
    // train_end_date. Sample CSVs are scored in full unless this is set.
    std::optional<int> after_date;
    std::optional<double> rate;
};

// Test samples for one model from a quote panel, built exactly as in the
// training run.
inline std::vector<pipeline::HedgeSample> samples_from_quotes(const io::ModelArtifact& a,
                                                              const std::vector<OptionQuote>& quotes,
                                                              int after_date) {
    const auto starts =
        select_option_type(pipeline::apply_filters(quotes, a.meta.filter), a.meta.option_type);
    pipeline::FeatureSpec spec = pipeline::make_feature_spec(a.meta.feature_model);
    auto samples = pipeline::build_hedge_samples(starts, quotes, a.meta.horizon_days, spec).samples;
    std::erase_if(samples, [&](const pipeline::HedgeSample& s) { return s.date_index() <= after_date; });
    return samples;
}

inline void check_compatible(const io::ModelArtifact& a, const std::vector<std::string>& columns,
                             const std::string& origin) {
    if (columns != a.model.feature_spec.columns) {
        std::string have, want;
        for (const auto& c : columns) have += (have.empty() ? "" : ",") + c;
        for (const auto& c : a.model.feature_spec.columns) want += (want.empty() ? "" : ",") + c;
        throw SpecMismatchError(origin + " has features [" + have + "] but model " + a.meta.label +
                                " expects [" + want + "]");
    }
}

inline std::vector<eval::GainReport> cmd_report(const ReportRequest& req) {
    if (req.model_paths.empty()) throw ConfigError("report needs at least one model");
    if (!fs::exists(req.data_path)) throw IoError("data file not found: " + req.data_path);
    std::vector<io::ModelArtifact> models;
    for (const auto& p : req.model_paths) models.push_back(io::load_artifact(p));

    const csv::Table table = csv::read_table(req.data_path);
    std::vector<eval::GainReport> reports;
    if (data::is_sample_table(table)) {
        data::SampleTable st = data::read_samples(table, req.data_path);
        if (req.after_date) {
            std::erase_if(st.samples,
                          [&](const pipeline::HedgeSample& s) { return s.date_index() <= *req.after_date; });
        }
        for (const auto& a : models) {
            check_compatible(a, st.feature_columns, req.data_path);
            reports.push_back(eval::bucketed_report(a.meta.label, a.meta.horizon_days, a.model, st.samples));
        }
    } else {
        for (const auto& a : models) {
            const double rate = req.rate ? *req.rate
                                         : sidecar_rate(req.data_path).value_or(a.meta.data_rate);
            data::IngestOptions opt;
            opt.rate = rate;
            opt.require_fields = a.meta.filter.require_fields;
            const auto quotes = data::ingest_table(table, opt, req.data_path).quotes;
            const auto samples =
                samples_from_quotes(a, quotes, req.after_date.value_or(a.meta.train_end_date));
            reports.push_back(eval::bucketed_report(a.meta.label, a.meta.horizon_days, a.model, samples));
        }
    }
    ensure_dir(req.output_dir);
    write_reports(req.output_dir, "report", reports, "gain ratios on " + req.data_path);
    return reports;
}

}  // namespace deephedge::exp
