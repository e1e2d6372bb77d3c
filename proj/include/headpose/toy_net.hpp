#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "headpose/geometry.hpp"
#include "headpose/rng.hpp"

namespace headpose {

inline constexpr double kLeakySlope = 0.01;

enum class Activation { Identity, LeakyRelu };

struct Layer {
    MatrixXd W;  // out x in
    VectorXd b;  // out
    Activation act = Activation::Identity;
};

// Fully-connected network, float64, analytic forward/backward. Hidden layers
// use leaky-relu, the head is identity (regression).
struct DenseNet {
    std::vector<Layer> layers;

    // dims = {in, h1, ..., out}; weights ~ U(+-sqrt(6/(fan_in+fan_out))).
    static DenseNet mlp(const std::vector<int>& dims, Rng& rng);

    int input_dim() const { return layers.empty() ? 0 : int(layers.front().W.cols()); }
    int output_dim() const { return layers.empty() ? 0 : int(layers.back().W.rows()); }
};

// Pre-activation values per layer plus the input; everything backward needs.
struct ForwardCache {
    VectorXd input;
    std::vector<VectorXd> pre;
};

VectorXd forward(const DenseNet& net, const VectorXd& x, ForwardCache* cache = nullptr);

struct NetGradients {
    std::vector<MatrixXd> dW;
    std::vector<VectorXd> db;
    VectorXd dx;
};

// Reverse-mode chain rule. Throws StaleCache when the cache does not match
// the network's shapes.
NetGradients backward(const DenseNet& net, const ForwardCache& cache, const VectorXd& dy);

NetGradients zero_gradients(const DenseNet& net);
void accumulate(NetGradients& into, const NetGradients& g);
void scale_gradients(NetGradients& g, double factor);

// Column-batched variants: X is in x B, outputs are out x B, weight
// gradients are summed over the batch. Same math as the per-vector path.
struct BatchCache {
    MatrixXd input;
    std::vector<MatrixXd> pre;
};

struct NetBatchGradients {
    std::vector<MatrixXd> dW;
    std::vector<VectorXd> db;
    MatrixXd dX;
};

MatrixXd forward_batch(const DenseNet& net, const MatrixXd& X, BatchCache* cache = nullptr);
NetBatchGradients backward_batch(const DenseNet& net, const BatchCache& cache,
                                 const MatrixXd& dY);
VectorXd flatten_batch_gradients(const DenseNet& net, const NetBatchGradients& g);

// Flat parameter view, layer by layer, W row-major then b.
int parameter_count(const DenseNet& net);
VectorXd get_parameters(const DenseNet& net);
void set_parameters(DenseNet& net, const VectorXd& flat);
VectorXd flatten_gradients(const DenseNet& net, const NetGradients& g);

// Adam with bias-corrected moments and a single step-decay: lr is multiplied
// by decay_factor once the owning loop reaches decay_after_epoch.
struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double decay_factor = 0.1;
    int decay_after_epoch = -1;   // -1: never decay
    double weight_decay = 0.0;    // decoupled, applied at the effective lr
};

struct AdamState {
    AdamConfig cfg;
    VectorXd m, v;
    long step = 0;
    int epoch = 0;

    static AdamState init(int n, const AdamConfig& cfg);
    double effective_lr() const;
};

void adam_step(AdamState& state, VectorXd& params, const VectorXd& grads);

// Versioned JSON checkpoint: layer shapes, activations, row-major weights.
nlohmann::json net_to_json(const DenseNet& net);
DenseNet net_from_json(const nlohmann::json& j);
void save_checkpoint(const DenseNet& net, const std::string& path);
DenseNet load_checkpoint(const std::string& path);

}  // namespace headpose
