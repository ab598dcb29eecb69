#pragma once

// Model artifact: a versioned JSON document holding the network
// configuration, feature spec with normalization statistics, every
// parameter and batch-norm running statistic, and training metadata.
// Doubles are written in shortest round-trip form, so save -> load -> save
// reproduces the bytes and the loaded network scores bit-identically.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "deephedge/errors.hpp"
#include "deephedge/learner.hpp"
#include "deephedge/neural.hpp"
#include "deephedge/pipeline.hpp"

namespace deephedge::io {

using json = nlohmann::ordered_json;

inline constexpr const char* kArtifactFormat = "deephedge-model";
inline constexpr int kArtifactVersion = 1;

// Where the model came from; needed to rebuild comparable test samples.
struct ArtifactMeta {
    std::string label;          // e.g. "Fea2-BS"
    std::string feature_model;  // e.g. "Fea2"
    int horizon_days = 1;
    std::string option_type = "call";
    int train_end_date = 0;
    double data_rate = 0.0;
    pipeline::FilterPolicy filter;
    learn::TrainPlan plan;
    std::uint64_t init_seed = 0;
};

struct ModelArtifact {
    learn::TrainedModel model;
    ArtifactMeta meta;
};

inline json matrix_to_json(const nn::Matrix& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline nn::Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw FormatError("matrix block has inconsistent size");
    }
    nn::Matrix m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = data[k++].get<double>();
    }
    return m;
}

inline json filter_to_json(const pipeline::FilterPolicy& f) {
    return json{{"min_ttm_days", f.min_ttm_days},
                {"call_delta_range", f.call_delta_range},
                {"put_delta_range", f.put_delta_range},
                {"require_fields", f.require_fields}};
}

inline pipeline::FilterPolicy filter_from_json(const json& j) {
    pipeline::FilterPolicy f;
    f.min_ttm_days = j.at("min_ttm_days").get<int>();
    f.call_delta_range = j.at("call_delta_range").get<std::array<double, 2>>();
    f.put_delta_range = j.at("put_delta_range").get<std::array<double, 2>>();
    f.require_fields = j.at("require_fields").get<std::vector<std::string>>();
    return f;
}

inline json to_json(const ModelArtifact& a) {
    const auto& m = a.model;
    const auto& net = m.network;
    json layers = json::array();
    for (const auto& l : net.hidden) {
        json jl{{"weight", matrix_to_json(l.weight)}, {"bias", matrix_to_json(l.bias)}};
        if (net.config.batch_norm) {
            jl["gamma"] = matrix_to_json(l.gamma);
            jl["beta"] = matrix_to_json(l.beta);
            jl["running_mean"] = matrix_to_json(l.running_mean);
            jl["running_var"] = matrix_to_json(l.running_var);
        }
        layers.push_back(std::move(jl));
    }
    json stats = json::array();
    for (const auto& s : m.feature_spec.norm_stats) stats.push_back({{"mean", s.mean}, {"sd", s.sd}});
    json history = json::array();
    for (const auto& h : m.history) {
        history.push_back({{"epoch", h.epoch}, {"train_mse", h.train_mse}, {"val_mse", h.val_mse}});
    }
    const auto& p = a.meta.plan;
    return json{
        {"format", kArtifactFormat},
        {"version", kArtifactVersion},
        {"label", a.meta.label},
        {"objective", learn::objective_name(m.objective)},
        {"net_config",
         {{"input_dim", net.config.input_dim},
          {"hidden_layers", net.config.hidden_layers},
          {"hidden_width", net.config.hidden_width},
          {"activation", "sigmoid"},
          {"batch_norm", net.config.batch_norm},
          {"seed", net.config.seed},
          {"bn_momentum", net.bn_momentum},
          {"bn_eps", net.bn_eps}}},
        {"feature_spec",
         {{"model_name", m.feature_spec.model_name},
          {"columns", m.feature_spec.columns},
          {"norm_stats", std::move(stats)}}},
        {"parameters",
         {{"hidden", std::move(layers)},
          {"out_weight", matrix_to_json(net.out_weight)},
          {"out_bias", matrix_to_json(net.out_bias)}}},
        {"training",
         {{"feature_model", a.meta.feature_model},
          {"horizon_days", a.meta.horizon_days},
          {"option_type", a.meta.option_type},
          {"train_end_date", a.meta.train_end_date},
          {"data_rate", a.meta.data_rate},
          {"filter", filter_to_json(a.meta.filter)},
          {"batch_size", p.batch_size},
          {"max_epochs", p.max_epochs},
          {"patience", p.patience},
          {"learning_rate", p.learning_rate},
          {"clip_norm", p.clip_norm},
          {"shuffle_seed", p.shuffle_seed},
          {"init_seed", a.meta.init_seed},
          {"epochs_run", static_cast<int>(m.history.size())},
          {"best_epoch", m.best_epoch},
          {"best_val_mse", m.best_val_mse},
          {"history", std::move(history)}}}};
}

inline ModelArtifact from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != kArtifactFormat) {
            throw FormatError("not a model artifact");
        }
        if (j.at("version").get<int>() != kArtifactVersion) {
            throw FormatError("unsupported artifact version " + j.at("version").dump());
        }
        ModelArtifact a;
        auto& m = a.model;
        a.meta.label = j.at("label").get<std::string>();
        m.objective = learn::parse_objective(j.at("objective").get<std::string>());

        const auto& jc = j.at("net_config");
        nn::NetConfig cfg;
        cfg.input_dim = jc.at("input_dim").get<int>();
        cfg.hidden_layers = jc.at("hidden_layers").get<int>();
        cfg.hidden_width = jc.at("hidden_width").get<int>();
        cfg.batch_norm = jc.at("batch_norm").get<bool>();
        cfg.seed = jc.at("seed").get<std::uint64_t>();
        cfg.validate();

        const auto& jf = j.at("feature_spec");
        m.feature_spec.model_name = jf.at("model_name").get<std::string>();
        m.feature_spec.columns = jf.at("columns").get<std::vector<std::string>>();
        for (const auto& s : jf.at("norm_stats")) {
            m.feature_spec.norm_stats.push_back({s.at("mean").get<double>(), s.at("sd").get<double>()});
        }
        if (!m.feature_spec.fitted() ||
            m.feature_spec.dim() != static_cast<std::size_t>(cfg.input_dim)) {
            throw FormatError("feature spec does not match the network input");
        }

        auto& net = m.network;
        net.config = cfg;
        net.bn_momentum = jc.at("bn_momentum").get<double>();
        net.bn_eps = jc.at("bn_eps").get<double>();
        const auto& jp = j.at("parameters");
        int fan_in = cfg.input_dim;
        auto expect = [](const nn::Matrix& x, Eigen::Index r, Eigen::Index c) {
            if (x.rows() != r || x.cols() != c) throw FormatError("parameter block has wrong shape");
        };
        for (const auto& jl : jp.at("hidden")) {
            nn::HiddenLayer l;
            l.weight = matrix_from_json(jl.at("weight"));
            l.bias = matrix_from_json(jl.at("bias"));
            expect(l.weight, fan_in, cfg.hidden_width);
            expect(l.bias, 1, cfg.hidden_width);
            if (cfg.batch_norm) {
                l.gamma = matrix_from_json(jl.at("gamma"));
                l.beta = matrix_from_json(jl.at("beta"));
                l.running_mean = matrix_from_json(jl.at("running_mean"));
                l.running_var = matrix_from_json(jl.at("running_var"));
                for (auto* b : {&l.gamma, &l.beta, &l.running_mean, &l.running_var}) {
                    expect(*b, 1, cfg.hidden_width);
                }
                if ((l.running_var.array() <= 0.0).any()) {
                    throw FormatError("running variance must be positive");
                }
            }
            net.hidden.push_back(std::move(l));
            fan_in = cfg.hidden_width;
        }
        if (static_cast<int>(net.hidden.size()) != cfg.hidden_layers) {
            throw FormatError("hidden layer count does not match the config");
        }
        net.out_weight = matrix_from_json(jp.at("out_weight"));
        net.out_bias = matrix_from_json(jp.at("out_bias"));
        expect(net.out_weight, cfg.hidden_width, 1);
        expect(net.out_bias, 1, 1);

        const auto& jt = j.at("training");
        a.meta.feature_model = jt.at("feature_model").get<std::string>();
        a.meta.horizon_days = jt.at("horizon_days").get<int>();
        a.meta.option_type = jt.at("option_type").get<std::string>();
        a.meta.train_end_date = jt.at("train_end_date").get<int>();
        a.meta.data_rate = jt.at("data_rate").get<double>();
        a.meta.filter = filter_from_json(jt.at("filter"));
        a.meta.plan.batch_size = jt.at("batch_size").get<int>();
        a.meta.plan.max_epochs = jt.at("max_epochs").get<int>();
        a.meta.plan.patience = jt.at("patience").get<int>();
        a.meta.plan.learning_rate = jt.at("learning_rate").get<double>();
        a.meta.plan.clip_norm = jt.at("clip_norm").get<double>();
        a.meta.plan.shuffle_seed = jt.at("shuffle_seed").get<std::uint64_t>();
        a.meta.plan.objective = m.objective;
        a.meta.init_seed = jt.at("init_seed").get<std::uint64_t>();
        m.best_epoch = jt.at("best_epoch").get<int>();
        m.best_val_mse = jt.at("best_val_mse").get<double>();
        for (const auto& h : jt.at("history")) {
            m.history.push_back({h.at("epoch").get<int>(), h.at("train_mse").get<double>(),
                                 h.at("val_mse").get<double>()});
        }
        return a;
    } catch (const json::exception& e) {
        throw FormatError(std::string("model artifact: ") + e.what());
    }
}

inline std::string dump_artifact(const ModelArtifact& a) { return to_json(a).dump(1) + "\n"; }

inline void save_artifact(const std::string& path, const ModelArtifact& a) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << dump_artifact(a);
    if (!out) throw IoError("write failed: " + path);
}

inline ModelArtifact load_artifact(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace deephedge::io
