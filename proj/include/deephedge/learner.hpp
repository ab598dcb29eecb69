#pragma once

// Training objectives for one-step hedging.
//
//   direct:   min mean (dV - o(x) dS)^2               hedge = o(x)
//   residual: min mean (dV - (delta_bs + o(x)) dS)^2  hedge = delta_bs + o(x)

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "deephedge/errors.hpp"
#include "deephedge/neural.hpp"
#include "deephedge/pipeline.hpp"
#include "deephedge/rng.hpp"

namespace deephedge::learn {

using nn::Matrix;
using nn::Vector;
using pipeline::FeatureSpec;
using pipeline::HedgeSample;

enum class Objective { direct, residual };

inline std::string objective_name(Objective o) { return o == Objective::direct ? "direct" : "residual"; }

inline Objective parse_objective(const std::string& s) {
    if (s == "direct") return Objective::direct;
    if (s == "residual") return Objective::residual;
    throw DomainError("unknown objective '" + s + "'");
}

// Model label in the table convention: residual models carry a "-BS" suffix.
inline std::string model_label(const std::string& feature_model, Objective o) {
    return o == Objective::residual ? feature_model + "-BS" : feature_model;
}

struct TrainPlan {
    int batch_size = 1024;
    int max_epochs = 40;
    int patience = 5;
    std::uint64_t shuffle_seed = 0;
    double learning_rate = 1e-4;
    double clip_norm = 1.0;
    Objective objective = Objective::residual;

    void validate() const {
        if (batch_size < 2) throw DomainError("batch_size must be >= 2");
        if (max_epochs < 1) throw DomainError("max_epochs must be >= 1");
        if (patience < 1 || patience > max_epochs) {
            throw DomainError("patience must lie in [1, max_epochs]");
        }
        if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be positive");
    }
};

// Targets of a batch in column form.
struct LossTargets {
    Vector dv;
    Vector ds;
    Vector delta_bs;
};

inline LossTargets targets_of(const std::vector<HedgeSample>& samples) {
    const auto n = static_cast<Eigen::Index>(samples.size());
    LossTargets t{Vector(n), Vector(n), Vector(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        t.dv(i) = samples[i].dv;
        t.ds(i) = samples[i].ds;
        t.delta_bs(i) = samples[i].delta_bs();
    }
    return t;
}

struct LossValue {
    double loss = 0.0;
    Vector grad;  // dL/d output
};

// Mean squared one-step hedging error and its gradient with respect to each
// network output: dL/do_i = -2 ds_i e_i / M with e_i the hedging error.
inline LossValue hedge_loss(const Vector& outputs, const LossTargets& t, Objective objective) {
    const Eigen::Index m = outputs.size();
    if (m == 0 || t.dv.size() != m || t.ds.size() != m || t.delta_bs.size() != m) {
        throw ShapeError("outputs and samples are not aligned");
    }
    Vector hedge = outputs;
    if (objective == Objective::residual) hedge += t.delta_bs;
    const Vector err = t.dv - hedge.cwiseProduct(t.ds);
    LossValue r;
    r.loss = err.squaredNorm() / static_cast<double>(m);
    r.grad = (-2.0 / static_cast<double>(m)) * t.ds.cwiseProduct(err);
    return r;
}

// Standardized design matrix for a fitted feature spec.
inline Matrix design_matrix(const FeatureSpec& spec, const std::vector<HedgeSample>& samples) {
    if (!spec.fitted()) throw SpecMismatchError("feature spec has no normalization statistics");
    const auto d = static_cast<Eigen::Index>(spec.dim());
    Matrix x(static_cast<Eigen::Index>(samples.size()), d);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].features.size() != spec.dim()) {
            throw SpecMismatchError("sample has " + std::to_string(samples[i].features.size()) +
                                    " features, spec " + spec.model_name + " expects " +
                                    std::to_string(spec.dim()));
        }
        for (Eigen::Index j = 0; j < d; ++j) {
            const auto& ns = spec.norm_stats[j];
            x(static_cast<Eigen::Index>(i), j) = (samples[i].features[j] - ns.mean) / ns.sd;
        }
    }
    return x;
}

struct EpochLog {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;

    bool operator==(const EpochLog&) const = default;
};

// Patience-based early stopping on validation MSE. Epochs are 1-based.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    // Records an epoch's validation loss; returns true when training should
    // stop after this epoch.
    bool observe(int epoch, double val_loss) {
        if (val_loss < best_loss_) {
            best_loss_ = val_loss;
            best_epoch_ = epoch;
            improved_ = true;
        } else {
            improved_ = false;
        }
        return epoch - best_epoch_ >= patience_;
    }

    bool improved() const { return improved_; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    int best_epoch_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
    bool improved_ = false;
};

struct TrainedModel {
    nn::Network network;
    Objective objective = Objective::residual;
    FeatureSpec feature_spec;
    std::vector<EpochLog> history;
    int best_epoch = 0;
    double best_val_mse = 0.0;
};

// Network outputs in infer mode, in chunks to bound memory.
inline Vector network_outputs(const nn::Network& net, const Matrix& x) {
    constexpr Eigen::Index chunk = 8192;
    Vector out(x.rows());
    for (Eigen::Index start = 0; start < x.rows(); start += chunk) {
        const Eigen::Index n = std::min(chunk, x.rows() - start);
        out.segment(start, n) = nn::infer(net, x.middleRows(start, n));
    }
    return out;
}

inline double mse_of(const nn::Network& net, const Matrix& x, const LossTargets& t,
                     Objective objective) {
    return hedge_loss(network_outputs(net, x), t, objective).loss;
}

// Mini-batch training with per-epoch reshuffling, validation in infer mode
// after every epoch, patience-based early stopping and restoration of the
// best-validation parameters. If `spec` is not fitted, its normalization is
// fitted on `train_samples`.
inline TrainedModel train(const std::vector<HedgeSample>& train_samples,
                          const std::vector<HedgeSample>& val_samples, FeatureSpec spec,
                          nn::NetConfig net_config, const TrainPlan& plan) {
    plan.validate();
    if (train_samples.empty() || val_samples.empty()) {
        throw EmptyPartitionError("training needs non-empty train and validation sets");
    }
    if (!spec.fitted()) spec = pipeline::fit_normalization(std::move(spec), train_samples);
    net_config.input_dim = static_cast<int>(spec.dim());

    const Matrix x_train = design_matrix(spec, train_samples);
    const Matrix x_val = design_matrix(spec, val_samples);
    const LossTargets t_train = targets_of(train_samples);
    const LossTargets t_val = targets_of(val_samples);

    TrainedModel model;
    model.objective = plan.objective;
    model.feature_spec = spec;
    model.network = nn::init_network(net_config);
    nn::Network& net = model.network;
    nn::OptimState opt = nn::OptimState::for_network(net, plan.learning_rate, plan.clip_norm);
    rng::SeqRng shuffler(plan.shuffle_seed);
    EarlyStopper stopper(plan.patience);
    nn::Network best = net;

    const auto n = static_cast<Eigen::Index>(train_samples.size());
    const Eigen::Index bs = plan.batch_size;
    const Eigen::Index min_rows = net_config.batch_norm ? 2 : 1;
    std::vector<Eigen::Index> rows;

    for (int epoch = 1; epoch <= plan.max_epochs; ++epoch) {
        const auto perm = shuffler.permutation(train_samples.size());
        double loss_sum = 0.0;
        Eigen::Index seen = 0;
        for (Eigen::Index start = 0; start < n; start += bs) {
            const Eigen::Index m = std::min(bs, n - start);
            if (m < min_rows) continue;
            rows.assign(perm.begin() + start, perm.begin() + start + m);
            const Matrix xb = x_train(rows, Eigen::all);
            const LossTargets tb{t_train.dv(rows), t_train.ds(rows), t_train.delta_bs(rows)};
            nn::ForwardResult fr = nn::forward(net, xb, nn::Mode::train);
            const LossValue lv = hedge_loss(fr.outputs, tb, plan.objective);
            if (!std::isfinite(lv.loss)) {
                throw DivergenceError("training loss became non-finite in epoch " +
                                      std::to_string(epoch));
            }
            nn::adam_step(net, nn::backward(net, fr.cache, lv.grad), opt);
            loss_sum += lv.loss * static_cast<double>(m);
            seen += m;
        }
        const double val_mse = mse_of(net, x_val, t_val, plan.objective);
        if (!std::isfinite(val_mse)) {
            throw DivergenceError("validation loss became non-finite in epoch " +
                                  std::to_string(epoch));
        }
        model.history.push_back({epoch, seen ? loss_sum / static_cast<double>(seen) : 0.0, val_mse});
        const bool stop = stopper.observe(epoch, val_mse);
        if (stopper.improved()) best = net;
        if (stop) break;
    }
    model.network = std::move(best);
    model.best_epoch = stopper.best_epoch();
    model.best_val_mse = stopper.best_loss();
    return model;
}

// Hedge ratios: delta_bs + f(x) for residual models, f(x) for direct ones.
inline Vector predict_hedge(const TrainedModel& model, const std::vector<HedgeSample>& samples) {
    if (samples.empty()) return Vector(0);
    const Matrix x = design_matrix(model.feature_spec, samples);
    Vector h = network_outputs(model.network, x);
    if (model.objective == Objective::residual) h += targets_of(samples).delta_bs;
    return h;
}

}  // namespace deephedge::learn
