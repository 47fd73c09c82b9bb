#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "slicing/rng.hpp"

namespace slicing::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Relu, Sigmoid, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string &s);

struct Layer {
    Matrix weights; // out x in
    Vector biases;  // out
    Activation activation = Activation::Identity;
};

// Per-layer gradient buffers, shaped like the layers of the net that
// produced them.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    double squared_norm() const;
    void scale(double factor);
    bool all_zero() const;
};

// Activations recorded by forward() for one batch. Columns are samples.
struct ForwardCache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> outputs; // post-activation output of each layer
    std::uint64_t net_id = 0;
    std::uint64_t net_version = 0;

    const Matrix &result() const { return outputs.back(); }
};

struct Backward {
    Gradients grads;
    Matrix input_grad; // in x batch
};

// Fully connected feed-forward network. Parameters change only through the
// mutators below, each of which bumps the version so that stale caches are
// detected in backward().
class DenseNet {
public:
    DenseNet() = default;
    explicit DenseNet(std::vector<Layer> layers);
    // Copies get their own identity so a cache never matches a different
    // object.
    DenseNet(const DenseNet &other);
    DenseNet &operator=(const DenseNet &other);
    DenseNet(DenseNet &&other) noexcept;
    DenseNet &operator=(DenseNet &&other) noexcept;

    // Fan-in uniform init on every layer; the last layer draws from
    // [-final_scale, final_scale] when final_scale > 0.
    static DenseNet make(const std::vector<int> &sizes, Activation hidden, Activation output,
                         Rng &rng, double final_scale = 0.0);

    int input_dim() const;
    int output_dim() const;
    const std::vector<Layer> &layers() const { return layers_; }
    std::size_t num_params() const;

    Matrix forward(const Matrix &input) const;
    Vector forward(const Vector &input) const;
    Matrix forward(const Matrix &input, ForwardCache &cache) const;

    // Reverse-mode pass for seedᵀ·output. Parameter gradients are skipped
    // when `param_grads` is false; input_grad is always produced.
    Backward backward(const ForwardCache &cache, const Matrix &seed, bool param_grads = true) const;

    Gradients zero_gradients() const;

    void apply_update(const Gradients &delta); // params += delta
    void soft_update_from(const DenseNet &online, double rate);
    void set_layers(std::vector<Layer> layers);

    bool finite() const;
    std::uint64_t version() const { return version_; }

    nlohmann::json to_json() const;
    static DenseNet from_json(const nlohmann::json &j);

private:
    void check_shapes() const;

    std::vector<Layer> layers_;
    std::uint64_t id_ = next_id();
    std::uint64_t version_ = 0;

    static std::uint64_t next_id();
};

// target <- rate * online + (1 - rate) * target
void soft_update(DenseNet &target, const DenseNet &online, double rate);

enum class OptimizerKind { Adam, Sgd };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string &s);

// Adaptive-moment optimizer with bias correction and global gradient-norm
// clipping. Plain SGD is available for comparison runs.
class Optimizer {
public:
    Optimizer() = default;
    Optimizer(const DenseNet &net, double lr, OptimizerKind kind = OptimizerKind::Adam,
              double clip_norm = 1.0);

    double lr() const { return lr_; }
    std::int64_t steps() const { return steps_; }

    // Descends along `grads`. Returns the gradient norm before clipping.
    double step(DenseNet &net, Gradients grads);

    nlohmann::json to_json() const;
    static Optimizer from_json(const nlohmann::json &j);

private:
    OptimizerKind kind_ = OptimizerKind::Adam;
    double lr_ = 1e-3;
    double clip_norm_ = 1.0;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::int64_t steps_ = 0;
    Gradients m_;
    Gradients v_;
};

nlohmann::json matrix_to_json(const Matrix &m);
Matrix matrix_from_json(const nlohmann::json &j);

} // namespace slicing::nn
