#include "headpose/toy_net.hpp"

#include <cmath>
#include <fstream>

#include "headpose/errors.hpp"

namespace headpose {

namespace {
double activate(double x, Activation a) {
    return a == Activation::LeakyRelu && x < 0.0 ? kLeakySlope * x : x;
}
double activate_grad(double pre, Activation a) {
    return a == Activation::LeakyRelu && pre < 0.0 ? kLeakySlope : 1.0;
}
}  // namespace

DenseNet DenseNet::mlp(const std::vector<int>& dims, Rng& rng) {
    if (dims.size() < 2) throw ShapeMismatch("mlp needs at least input and output dims");
    DenseNet net;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        Layer layer;
        const int fan_in = dims[i], fan_out = dims[i + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        layer.W.resize(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) layer.W(r, c) = rng.uniform(-bound, bound);
        layer.b = VectorXd::Zero(fan_out);
        layer.act = (i + 2 < dims.size()) ? Activation::LeakyRelu : Activation::Identity;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

VectorXd forward(const DenseNet& net, const VectorXd& x, ForwardCache* cache) {
    if (net.layers.empty()) throw ShapeMismatch("empty network");
    if (x.size() != net.layers.front().W.cols())
        throw ShapeMismatch("input size " + std::to_string(x.size()) + " != expected " +
                            std::to_string(net.layers.front().W.cols()));
    if (cache) {
        cache->input = x;
        cache->pre.clear();
        cache->pre.reserve(net.layers.size());
    }
    VectorXd h = x;
    for (const Layer& layer : net.layers) {
        VectorXd pre = layer.W * h + layer.b;
        if (cache) cache->pre.push_back(pre);
        h = pre.unaryExpr([&](double v) { return activate(v, layer.act); });
    }
    return h;
}

NetGradients backward(const DenseNet& net, const ForwardCache& cache, const VectorXd& dy) {
    if (cache.pre.size() != net.layers.size())
        throw StaleCache("cache layer count does not match network");
    if (dy.size() != net.layers.back().W.rows())
        throw StaleCache("output gradient size does not match network head");
    NetGradients g;
    g.dW.resize(net.layers.size());
    g.db.resize(net.layers.size());
    VectorXd delta = dy;
    for (int i = int(net.layers.size()) - 1; i >= 0; --i) {
        const Layer& layer = net.layers[i];
        const VectorXd& pre = cache.pre[i];
        if (pre.size() != layer.W.rows()) throw StaleCache("cached pre-activation shape mismatch");
        for (Eigen::Index k = 0; k < delta.size(); ++k)
            delta[k] *= activate_grad(pre[k], layer.act);
        // Activation input of layer i: the previous layer's output, or x.
        VectorXd below;
        if (i == 0) {
            below = cache.input;
        } else {
            const Layer& prev = net.layers[i - 1];
            below = cache.pre[i - 1].unaryExpr([&](double v) { return activate(v, prev.act); });
        }
        g.dW[i] = delta * below.transpose();
        g.db[i] = delta;
        delta = layer.W.transpose() * delta;
    }
    g.dx = delta;
    return g;
}

NetGradients zero_gradients(const DenseNet& net) {
    NetGradients g;
    for (const Layer& layer : net.layers) {
        g.dW.push_back(MatrixXd::Zero(layer.W.rows(), layer.W.cols()));
        g.db.push_back(VectorXd::Zero(layer.b.size()));
    }
    g.dx = VectorXd();
    return g;
}

void accumulate(NetGradients& into, const NetGradients& g) {
    for (size_t i = 0; i < into.dW.size(); ++i) {
        into.dW[i] += g.dW[i];
        into.db[i] += g.db[i];
    }
}

void scale_gradients(NetGradients& g, double factor) {
    for (size_t i = 0; i < g.dW.size(); ++i) {
        g.dW[i] *= factor;
        g.db[i] *= factor;
    }
}

MatrixXd forward_batch(const DenseNet& net, const MatrixXd& X, BatchCache* cache) {
    if (net.layers.empty()) throw ShapeMismatch("empty network");
    if (X.rows() != net.layers.front().W.cols())
        throw ShapeMismatch("batch input rows do not match network input size");
    if (cache) {
        cache->input = X;
        cache->pre.clear();
        cache->pre.reserve(net.layers.size());
    }
    MatrixXd H = X;
    for (const Layer& layer : net.layers) {
        MatrixXd pre = (layer.W * H).colwise() + layer.b;
        if (cache) cache->pre.push_back(pre);
        H = pre.unaryExpr([&](double v) { return activate(v, layer.act); });
    }
    return H;
}

NetBatchGradients backward_batch(const DenseNet& net, const BatchCache& cache,
                                 const MatrixXd& dY) {
    if (cache.pre.size() != net.layers.size())
        throw StaleCache("cache layer count does not match network");
    if (dY.rows() != net.layers.back().W.rows() || dY.cols() != cache.input.cols())
        throw StaleCache("batch output gradient shape mismatch");
    NetBatchGradients g;
    g.dW.resize(net.layers.size());
    g.db.resize(net.layers.size());
    MatrixXd delta = dY;
    for (int i = int(net.layers.size()) - 1; i >= 0; --i) {
        const Layer& layer = net.layers[i];
        const MatrixXd& pre = cache.pre[i];
        delta.array() *=
            pre.unaryExpr([&](double v) { return activate_grad(v, layer.act); }).array();
        MatrixXd below;
        if (i == 0) {
            below = cache.input;
        } else {
            below = cache.pre[i - 1].unaryExpr(
                [&](double v) { return activate(v, net.layers[i - 1].act); });
        }
        g.dW[i] = delta * below.transpose();
        g.db[i] = delta.rowwise().sum();
        delta = (layer.W.transpose() * delta).eval();
    }
    g.dX = delta;
    return g;
}

VectorXd flatten_batch_gradients(const DenseNet& net, const NetBatchGradients& g) {
    VectorXd flat(parameter_count(net));
    Eigen::Index at = 0;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        for (Eigen::Index r = 0; r < g.dW[i].rows(); ++r)
            for (Eigen::Index c = 0; c < g.dW[i].cols(); ++c) flat[at++] = g.dW[i](r, c);
        flat.segment(at, g.db[i].size()) = g.db[i];
        at += g.db[i].size();
    }
    return flat;
}

int parameter_count(const DenseNet& net) {
    int n = 0;
    for (const Layer& layer : net.layers) n += int(layer.W.size() + layer.b.size());
    return n;
}

VectorXd get_parameters(const DenseNet& net) {
    VectorXd flat(parameter_count(net));
    Eigen::Index at = 0;
    for (const Layer& layer : net.layers) {
        for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.W.cols(); ++c) flat[at++] = layer.W(r, c);
        flat.segment(at, layer.b.size()) = layer.b;
        at += layer.b.size();
    }
    return flat;
}

void set_parameters(DenseNet& net, const VectorXd& flat) {
    if (flat.size() != parameter_count(net)) throw ShapeMismatch("parameter vector size mismatch");
    Eigen::Index at = 0;
    for (Layer& layer : net.layers) {
        for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.W.cols(); ++c) layer.W(r, c) = flat[at++];
        layer.b = flat.segment(at, layer.b.size());
        at += layer.b.size();
    }
}

VectorXd flatten_gradients(const DenseNet& net, const NetGradients& g) {
    VectorXd flat(parameter_count(net));
    Eigen::Index at = 0;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        for (Eigen::Index r = 0; r < g.dW[i].rows(); ++r)
            for (Eigen::Index c = 0; c < g.dW[i].cols(); ++c) flat[at++] = g.dW[i](r, c);
        flat.segment(at, g.db[i].size()) = g.db[i];
        at += g.db[i].size();
    }
    return flat;
}

AdamState AdamState::init(int n, const AdamConfig& cfg) {
    AdamState s;
    s.cfg = cfg;
    s.m = VectorXd::Zero(n);
    s.v = VectorXd::Zero(n);
    return s;
}

double AdamState::effective_lr() const {
    if (cfg.decay_after_epoch >= 0 && epoch >= cfg.decay_after_epoch)
        return cfg.lr * cfg.decay_factor;
    return cfg.lr;
}

void adam_step(AdamState& state, VectorXd& params, const VectorXd& grads) {
    if (params.size() != state.m.size() || grads.size() != state.m.size())
        throw ShapeMismatch("adam state does not match parameter shape");
    state.step += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    state.m = b1 * state.m + (1.0 - b1) * grads;
    state.v = b2 * state.v.array().matrix() + (1.0 - b2) * grads.cwiseProduct(grads);
    const double mc = 1.0 - std::pow(b1, double(state.step));
    const double vc = 1.0 - std::pow(b2, double(state.step));
    const double lr = state.effective_lr();
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double mhat = state.m[i] / mc;
        const double vhat = state.v[i] / vc;
        params[i] -= lr * (mhat / (std::sqrt(vhat) + state.cfg.eps) +
                           state.cfg.weight_decay * params[i]);
    }
}

nlohmann::json net_to_json(const DenseNet& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& layer : net.layers) {
        std::vector<double> w(layer.W.size());
        Eigen::Index at = 0;
        for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.W.cols(); ++c) w[at++] = layer.W(r, c);
        layers.push_back({{"out", layer.W.rows()},
                          {"in", layer.W.cols()},
                          {"activation", layer.act == Activation::LeakyRelu ? "leaky_relu"
                                                                            : "identity"},
                          {"W", w},
                          {"b", std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size())}});
    }
    return {{"format", "headpose-densenet"}, {"version", 1}, {"layers", layers}};
}

DenseNet net_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "headpose-densenet" || j.value("version", 0) != 1)
        throw IoFailure("unrecognized checkpoint format");
    DenseNet net;
    for (const auto& lj : j.at("layers")) {
        Layer layer;
        const int out = lj.at("out"), in = lj.at("in");
        const auto& w = lj.at("W");
        if (int(w.size()) != out * in) throw IoFailure("checkpoint weight count mismatch");
        layer.W.resize(out, in);
        int at = 0;
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) layer.W(r, c) = w[at++];
        const auto& b = lj.at("b");
        if (int(b.size()) != out) throw IoFailure("checkpoint bias count mismatch");
        layer.b.resize(out);
        for (int r = 0; r < out; ++r) layer.b[r] = b[r];
        layer.act = lj.at("activation") == "leaky_relu" ? Activation::LeakyRelu
                                                        : Activation::Identity;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

void save_checkpoint(const DenseNet& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open checkpoint for writing: " + path);
    out << net_to_json(net).dump() << "\n";
    if (!out) throw IoFailure("checkpoint write failed: " + path);
}

DenseNet load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    return net_from_json(j);
}

}  // namespace headpose
