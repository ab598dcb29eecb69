#pragma once

// Fully connected feedforward network with sigmoid hidden units, optional
// batch normalization, Glorot-uniform initialization, reverse-mode gradients
// and Adam with global-norm gradient clipping.
//
// Hidden layer i:   X_i = sigmoid(BN(X_{i-1} W_i + b_i))
// Output layer:     O   = X_N w_out + b_out          (no BN, no activation)
//
// BN sits between the affine map and the sigmoid; in train mode it uses the
// batch mean and biased batch variance, in infer mode the running estimates
// (updated with momentum 0.9 from the unbiased batch variance). All
// arithmetic is double precision.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deephedge/errors.hpp"
#include "deephedge/rng.hpp"

namespace deephedge::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct NetConfig {
    int input_dim = 2;
    int hidden_layers = 3;
    int hidden_width = 128;
    bool batch_norm = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (input_dim < 1 || hidden_layers < 1 || hidden_width < 1) {
            throw DomainError("network needs input_dim, hidden_layers and hidden_width >= 1");
        }
    }

    bool operator==(const NetConfig&) const = default;
};

struct HiddenLayer {
    Matrix weight;  // d_in x h
    Matrix bias;    // 1 x h
    Matrix gamma;   // 1 x h, batch norm only
    Matrix beta;
    Matrix running_mean;
    Matrix running_var;
};

class Network {
public:
    NetConfig config;
    std::vector<HiddenLayer> hidden;
    Matrix out_weight;  // h x 1
    Matrix out_bias;    // 1 x 1
    double bn_momentum = 0.9;
    double bn_eps = 1e-5;
    // Incremented whenever trainable parameters change; forward caches from
    // an older version are rejected by backward().
    std::uint64_t version = 0;

    // Trainable blocks in a fixed order: per hidden layer weight, bias
    // [, gamma, beta]; then output weight and bias.
    std::vector<Matrix*> parameters() {
        std::vector<Matrix*> out;
        for (auto& l : hidden) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
            if (config.batch_norm) {
                out.push_back(&l.gamma);
                out.push_back(&l.beta);
            }
        }
        out.push_back(&out_weight);
        out.push_back(&out_bias);
        return out;
    }

    std::vector<const Matrix*> parameters() const {
        std::vector<const Matrix*> out;
        for (auto* p : const_cast<Network*>(this)->parameters()) out.push_back(p);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto* p : parameters()) n += static_cast<std::size_t>(p->size());
        return n;
    }
};

using Gradients = std::vector<Matrix>;

// Glorot-uniform weights on +-sqrt(6 / (fan_in + fan_out)), zero biases,
// gamma = 1, beta = 0, running statistics (0, 1).
inline Network init_network(const NetConfig& config) {
    config.validate();
    rng::SeqRng gen(config.seed);
    auto glorot = [&](int fan_in, int fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Matrix w(fan_in, fan_out);
        for (int i = 0; i < fan_in; ++i) {
            for (int j = 0; j < fan_out; ++j) w(i, j) = gen.uniform(-limit, limit);
        }
        return w;
    };

    Network net;
    net.config = config;
    int fan_in = config.input_dim;
    const int h = config.hidden_width;
    for (int i = 0; i < config.hidden_layers; ++i) {
        HiddenLayer l;
        l.weight = glorot(fan_in, h);
        l.bias = Matrix::Zero(1, h);
        if (config.batch_norm) {
            l.gamma = Matrix::Ones(1, h);
            l.beta = Matrix::Zero(1, h);
            l.running_mean = Matrix::Zero(1, h);
            l.running_var = Matrix::Ones(1, h);
        }
        net.hidden.push_back(std::move(l));
        fan_in = h;
    }
    net.out_weight = glorot(h, 1);
    net.out_bias = Matrix::Zero(1, 1);
    return net;
}

enum class Mode { train, infer };

struct LayerCache {
    Matrix input;       // X_{i-1}
    Matrix xhat;        // normalized pre-activation (BN only)
    Matrix inv_std;     // 1 x h (BN only)
    Matrix batch_mean;  // 1 x h (BN only)
    Matrix batch_var;   // 1 x h, biased (BN only)
    Matrix activation;  // X_i
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    std::uint64_t version = 0;
    Eigen::Index rows = 0;
};

struct ForwardResult {
    Vector outputs;
    ForwardCache cache;
};

namespace detail {

inline Matrix sigmoid(const Matrix& y) {
    return (1.0 + (-y.array()).exp()).inverse().matrix();
}

inline void check_batch(const Network& net, const Matrix& x) {
    if (x.cols() != net.config.input_dim) {
        throw ShapeError("batch has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(net.config.input_dim));
    }
    if (x.rows() < 1) throw ShapeError("empty batch");
    if (!x.allFinite()) throw DomainError("batch contains non-finite values");
}

}  // namespace detail

// Train-mode forward pass using batch statistics. Does not touch the running
// statistics; see update_running_stats().
inline ForwardResult forward_train(const Network& net, const Matrix& x) {
    detail::check_batch(net, x);
    const Eigen::Index m = x.rows();
    if (net.config.batch_norm && m < 2) {
        throw ShapeError("train-mode batch normalization needs at least two rows");
    }
    ForwardResult r;
    r.cache.version = net.version;
    r.cache.rows = m;
    r.cache.layers.resize(net.hidden.size());
    Matrix a = x;
    for (std::size_t i = 0; i < net.hidden.size(); ++i) {
        const HiddenLayer& l = net.hidden[i];
        LayerCache& c = r.cache.layers[i];
        Matrix z = a * l.weight;
        z.rowwise() += l.bias.row(0);
        c.input = std::move(a);
        if (net.config.batch_norm) {
            c.batch_mean = z.colwise().mean();
            z.rowwise() -= c.batch_mean.row(0);
            c.batch_var = z.array().square().colwise().mean().matrix();
            c.inv_std = (c.batch_var.array() + net.bn_eps).rsqrt().matrix();
            c.xhat = (z.array().rowwise() * c.inv_std.row(0).array()).matrix();
            z = (c.xhat.array().rowwise() * l.gamma.row(0).array()).matrix();
            z.rowwise() += l.beta.row(0);
        }
        c.activation = detail::sigmoid(z);
        a = c.activation;
    }
    Matrix out = a * net.out_weight;
    out.array() += net.out_bias(0, 0);
    r.outputs = out.col(0);
    return r;
}

inline void update_running_stats(Network& net, const ForwardCache& cache) {
    if (!net.config.batch_norm) return;
    const double m = static_cast<double>(cache.rows);
    const double unbias = m / (m - 1.0);
    for (std::size_t i = 0; i < net.hidden.size(); ++i) {
        HiddenLayer& l = net.hidden[i];
        const LayerCache& c = cache.layers[i];
        l.running_mean = net.bn_momentum * l.running_mean + (1.0 - net.bn_momentum) * c.batch_mean;
        l.running_var =
            net.bn_momentum * l.running_var + (1.0 - net.bn_momentum) * unbias * c.batch_var;
    }
}

// Inference with running statistics; each row is scored independently.
inline Vector infer(const Network& net, const Matrix& x) {
    detail::check_batch(net, x);
    Matrix a = x;
    for (const HiddenLayer& l : net.hidden) {
        Matrix z = a * l.weight;
        z.rowwise() += l.bias.row(0);
        if (net.config.batch_norm) {
            const Eigen::RowVectorXd scale =
                (l.gamma.array() * (l.running_var.array() + net.bn_eps).rsqrt()).matrix();
            z.rowwise() -= l.running_mean.row(0);
            z = (z.array().rowwise() * scale.array()).matrix();
            z.rowwise() += l.beta.row(0);
        }
        a = detail::sigmoid(z);
    }
    Matrix out = a * net.out_weight;
    out.array() += net.out_bias(0, 0);
    return out.col(0);
}

inline ForwardResult forward(Network& net, const Matrix& x, Mode mode) {
    if (mode == Mode::infer) return ForwardResult{infer(net, x), {}};
    ForwardResult r = forward_train(net, x);
    update_running_stats(net, r.cache);
    return r;
}

// Exact gradient of a scalar loss L given dL/dO for every output row,
// including the dependence of the batch statistics on every row.
inline Gradients backward(const Network& net, const ForwardCache& cache, const Vector& dout) {
    if (cache.layers.size() != net.hidden.size() || cache.version != net.version ||
        cache.rows == 0) {
        throw StaleCacheError("forward cache does not belong to the current network parameters");
    }
    if (dout.size() != cache.rows) {
        throw ShapeError("loss gradient length does not match the cached batch");
    }
    const double m = static_cast<double>(cache.rows);
    const std::size_t n_hidden = net.hidden.size();

    const Matrix& top = cache.layers.back().activation;
    Matrix d_out_w = top.transpose() * dout;
    Matrix d_out_b(1, 1);
    d_out_b(0, 0) = dout.sum();
    Matrix da = dout * net.out_weight.transpose();

    std::vector<std::vector<Matrix>> per_layer(n_hidden);
    for (std::size_t ii = n_hidden; ii-- > 0;) {
        const HiddenLayer& l = net.hidden[ii];
        const LayerCache& c = cache.layers[ii];
        Matrix dy = (da.array() * c.activation.array() * (1.0 - c.activation.array())).matrix();
        Matrix dz;
        Matrix d_gamma, d_beta;
        if (net.config.batch_norm) {
            d_gamma = (dy.array() * c.xhat.array()).colwise().sum().matrix();
            d_beta = dy.colwise().sum();
            Matrix dxhat = (dy.array().rowwise() * l.gamma.row(0).array()).matrix();
            const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
            const Eigen::RowVectorXd sum_dxhat_xhat =
                (dxhat.array() * c.xhat.array()).colwise().sum().matrix();
            Matrix t = m * dxhat;
            t.rowwise() -= sum_dxhat;
            t -= (c.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
            dz = ((t.array().rowwise() * c.inv_std.row(0).array()) / m).matrix();
        } else {
            dz = std::move(dy);
        }
        Matrix d_w = c.input.transpose() * dz;
        Matrix d_b = dz.colwise().sum();
        if (ii > 0) da = dz * l.weight.transpose();
        auto& g = per_layer[ii];
        g.push_back(std::move(d_w));
        g.push_back(std::move(d_b));
        if (net.config.batch_norm) {
            g.push_back(std::move(d_gamma));
            g.push_back(std::move(d_beta));
        }
    }
    Gradients grads;
    for (auto& g : per_layer) {
        for (auto& block : g) grads.push_back(std::move(block));
    }
    grads.push_back(std::move(d_out_w));
    grads.push_back(std::move(d_out_b));
    return grads;
}

struct OptimState {
    Gradients first_moment;
    Gradients second_moment;
    long step = 0;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 1.0;

    static OptimState for_network(const Network& net, double learning_rate = 1e-4,
                                  double clip_norm = 1.0) {
        OptimState s;
        s.learning_rate = learning_rate;
        s.clip_norm = clip_norm;
        for (const Matrix* p : net.parameters()) {
            s.first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
            s.second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
        }
        return s;
    }
};

inline double global_norm(const Gradients& g) {
    double s = 0.0;
    for (const auto& b : g) s += b.squaredNorm();
    return std::sqrt(s);
}

// Rescales so that the global L2 norm is at most `clip_norm`; returns the
// norm before clipping.
inline double clip_global_norm(Gradients& g, double clip_norm) {
    const double norm = global_norm(g);
    if (!std::isfinite(norm)) throw NonFiniteGradientError("gradient contains non-finite values");
    if (clip_norm > 0.0 && norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (auto& b : g) b *= scale;
    }
    return norm;
}

// Global-norm clipping followed by a bias-corrected Adam update.
inline void adam_step(Network& net, Gradients grads, OptimState& opt) {
    auto params = net.parameters();
    if (grads.size() != params.size() || opt.first_moment.size() != params.size()) {
        throw ShapeError("gradient/optimizer block count does not match the network");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].rows() != params[i]->rows() || grads[i].cols() != params[i]->cols()) {
            throw ShapeError("gradient block shape does not match its parameter");
        }
    }
    clip_global_norm(grads, opt.clip_norm);
    ++opt.step;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& m = opt.first_moment[i];
        Matrix& v = opt.second_moment[i];
        m = opt.beta1 * m + (1.0 - opt.beta1) * grads[i];
        v = opt.beta2 * v + (1.0 - opt.beta2) * grads[i].cwiseAbs2();
        params[i]->array() -= opt.learning_rate * (m.array() / c1) /
                              ((v.array() / c2).sqrt() + opt.epsilon);
    }
    ++net.version;
}

}  // namespace deephedge::nn
