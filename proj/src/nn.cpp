#include "slicing/nn.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "slicing/error.hpp"

namespace slicing::nn {

std::string to_string(Activation a) {
    switch (a) {
    case Activation::Relu:
        return "relu";
    case Activation::Sigmoid:
        return "sigmoid";
    case Activation::Identity:
        return "identity";
    }
    return "identity";
}

Activation activation_from_string(const std::string &s) {
    if (s == "relu")
        return Activation::Relu;
    if (s == "sigmoid")
        return Activation::Sigmoid;
    if (s == "identity")
        return Activation::Identity;
    throw ContractError("unknown activation '" + s + "'");
}

namespace {

Matrix activate(Matrix z, Activation a) {
    switch (a) {
    case Activation::Relu:
        return z.cwiseMax(0.0);
    case Activation::Sigmoid:
        return (1.0 + (-z.array()).exp()).inverse().matrix();
    case Activation::Identity:
        return z;
    }
    return z;
}

// d(output)/d(pre-activation), written in terms of the output.
Matrix activation_slope(const Matrix &out, Activation a) {
    switch (a) {
    case Activation::Relu:
        return (out.array() > 0.0).cast<double>().matrix();
    case Activation::Sigmoid:
        return (out.array() * (1.0 - out.array())).matrix();
    case Activation::Identity:
        return Matrix::Ones(out.rows(), out.cols());
    }
    return Matrix::Ones(out.rows(), out.cols());
}

} // namespace

double Gradients::squared_norm() const {
    double s = 0.0;
    for (const auto &w : weights)
        s += w.squaredNorm();
    for (const auto &b : biases)
        s += b.squaredNorm();
    return s;
}

void Gradients::scale(double factor) {
    for (auto &w : weights)
        w *= factor;
    for (auto &b : biases)
        b *= factor;
}

bool Gradients::all_zero() const { return squared_norm() == 0.0; }

std::uint64_t DenseNet::next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter++;
}

DenseNet::DenseNet(std::vector<Layer> layers) : layers_(std::move(layers)) { check_shapes(); }

DenseNet::DenseNet(const DenseNet &other) : layers_(other.layers_) {}

DenseNet &DenseNet::operator=(const DenseNet &other) {
    if (this != &other) {
        layers_ = other.layers_;
        ++version_;
    }
    return *this;
}

DenseNet::DenseNet(DenseNet &&other) noexcept : layers_(std::move(other.layers_)) {
    ++other.version_;
}

DenseNet &DenseNet::operator=(DenseNet &&other) noexcept {
    if (this != &other) {
        layers_ = std::move(other.layers_);
        ++version_;
        ++other.version_;
    }
    return *this;
}

void DenseNet::check_shapes() const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto &l = layers_[i];
        if (l.biases.size() != l.weights.rows())
            throw ContractError("DenseNet: bias length does not match layer output");
        if (i > 0 && l.weights.cols() != layers_[i - 1].weights.rows())
            throw ContractError("DenseNet: adjacent layer dimensions do not chain");
    }
}

DenseNet DenseNet::make(const std::vector<int> &sizes, Activation hidden, Activation output,
                        Rng &rng, double final_scale) {
    if (sizes.size() < 2)
        throw ContractError("DenseNet::make: need at least input and output sizes");
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        const bool last = i + 2 == sizes.size();
        const double bound =
            last && final_scale > 0 ? final_scale : 1.0 / std::sqrt(static_cast<double>(sizes[i]));
        std::uniform_real_distribution<double> u(-bound, bound);
        Layer l;
        l.weights = Matrix::NullaryExpr(sizes[i + 1], sizes[i], [&] { return u(rng); });
        l.biases = Vector::NullaryExpr(sizes[i + 1], [&] { return u(rng); });
        l.activation = last ? output : hidden;
        layers.push_back(std::move(l));
    }
    return DenseNet(std::move(layers));
}

int DenseNet::input_dim() const {
    return layers_.empty() ? 0 : static_cast<int>(layers_.front().weights.cols());
}

int DenseNet::output_dim() const {
    return layers_.empty() ? 0 : static_cast<int>(layers_.back().weights.rows());
}

std::size_t DenseNet::num_params() const {
    std::size_t n = 0;
    for (const auto &l : layers_)
        n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
    return n;
}

Matrix DenseNet::forward(const Matrix &input) const {
    if (input.rows() != input_dim()) {
        std::ostringstream os;
        os << "DenseNet::forward: input has " << input.rows() << " rows, expected " << input_dim();
        throw ContractError(os.str());
    }
    Matrix x = input;
    for (const auto &l : layers_) {
        Matrix z = l.weights * x;
        z.colwise() += l.biases;
        x = activate(std::move(z), l.activation);
    }
    return x;
}

Vector DenseNet::forward(const Vector &input) const {
    return forward(Matrix(input)).col(0);
}

Matrix DenseNet::forward(const Matrix &input, ForwardCache &cache) const {
    if (input.rows() != input_dim()) {
        std::ostringstream os;
        os << "DenseNet::forward: input has " << input.rows() << " rows, expected " << input_dim();
        throw ContractError(os.str());
    }
    cache.inputs.resize(layers_.size());
    cache.outputs.resize(layers_.size());
    cache.net_id = id_;
    cache.net_version = version_;
    const Matrix *x = &input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto &l = layers_[i];
        cache.inputs[i] = *x;
        Matrix z = l.weights * *x;
        z.colwise() += l.biases;
        cache.outputs[i] = activate(std::move(z), l.activation);
        x = &cache.outputs[i];
    }
    return cache.outputs.back();
}

Backward DenseNet::backward(const ForwardCache &cache, const Matrix &seed, bool param_grads) const {
    if (cache.net_id != id_ || cache.net_version != version_ ||
        cache.outputs.size() != layers_.size())
        throw ContractError("DenseNet::backward: cache is stale or from another network");
    const Matrix &out = cache.outputs.back();
    if (seed.rows() != out.rows() || seed.cols() != out.cols())
        throw ContractError("DenseNet::backward: seed shape does not match output");

    Backward result;
    if (param_grads) {
        result.grads.weights.resize(layers_.size());
        result.grads.biases.resize(layers_.size());
    }
    Matrix delta = seed;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const auto &l = layers_[i];
        if (l.activation != Activation::Identity)
            delta.array() *= activation_slope(cache.outputs[i], l.activation).array();
        if (param_grads) {
            result.grads.weights[i] = delta * cache.inputs[i].transpose();
            result.grads.biases[i] = delta.rowwise().sum();
        }
        delta = l.weights.transpose() * delta;
    }
    result.input_grad = std::move(delta);
    return result;
}

Gradients DenseNet::zero_gradients() const {
    Gradients g;
    for (const auto &l : layers_) {
        g.weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
        g.biases.push_back(Vector::Zero(l.biases.size()));
    }
    return g;
}

void DenseNet::apply_update(const Gradients &delta) {
    if (delta.weights.size() != layers_.size() || delta.biases.size() != layers_.size())
        throw ContractError("DenseNet::apply_update: gradient shape mismatch");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i].weights += delta.weights[i];
        layers_[i].biases += delta.biases[i];
    }
    ++version_;
}

void DenseNet::soft_update_from(const DenseNet &online, double rate) {
    if (online.layers_.size() != layers_.size())
        throw ContractError("soft_update: layer count mismatch");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        auto &t = layers_[i];
        const auto &o = online.layers_[i];
        if (t.weights.rows() != o.weights.rows() || t.weights.cols() != o.weights.cols())
            throw ContractError("soft_update: layer shape mismatch");
        t.weights = rate * o.weights + (1.0 - rate) * t.weights;
        t.biases = rate * o.biases + (1.0 - rate) * t.biases;
    }
    ++version_;
}

void DenseNet::set_layers(std::vector<Layer> layers) {
    layers_ = std::move(layers);
    check_shapes();
    ++version_;
}

bool DenseNet::finite() const {
    for (const auto &l : layers_)
        if (!l.weights.allFinite() || !l.biases.allFinite())
            return false;
    return true;
}

void soft_update(DenseNet &target, const DenseNet &online, double rate) {
    if (!(rate >= 0 && rate <= 1))
        throw ContractError("soft_update: rate must be in [0, 1]");
    target.soft_update_from(online, rate);
}

nlohmann::json matrix_to_json(const Matrix &m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const nlohmann::json &j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw ContractError("matrix_from_json: data length does not match shape");
    return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

nlohmann::json DenseNet::to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto &l : layers_)
        layers.push_back({{"activation", to_string(l.activation)},
                          {"weights", matrix_to_json(l.weights)},
                          {"biases", matrix_to_json(l.biases)}});
    return {{"layers", layers}};
}

DenseNet DenseNet::from_json(const nlohmann::json &j) {
    std::vector<Layer> layers;
    for (const auto &lj : j.at("layers")) {
        Layer l;
        l.activation = activation_from_string(lj.at("activation").get<std::string>());
        l.weights = matrix_from_json(lj.at("weights"));
        l.biases = matrix_from_json(lj.at("biases")).col(0);
        layers.push_back(std::move(l));
    }
    return DenseNet(std::move(layers));
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string &s) {
    if (s == "adam")
        return OptimizerKind::Adam;
    if (s == "sgd")
        return OptimizerKind::Sgd;
    throw ContractError("unknown optimizer '" + s + "'");
}

Optimizer::Optimizer(const DenseNet &net, double lr, OptimizerKind kind, double clip_norm)
    : kind_(kind), lr_(lr), clip_norm_(clip_norm), m_(net.zero_gradients()),
      v_(net.zero_gradients()) {
    if (!(lr > 0))
        throw ContractError("Optimizer: learning rate must be positive");
}

double Optimizer::step(DenseNet &net, Gradients grads) {
    if (grads.weights.size() != m_.weights.size())
        throw ContractError("Optimizer::step: gradient shape mismatch");
    const double norm = std::sqrt(grads.squared_norm());
    if (!std::isfinite(norm))
        throw NumericError("Optimizer::step: non-finite gradient");
    if (clip_norm_ > 0 && norm > clip_norm_)
        grads.scale(clip_norm_ / norm);
    ++steps_;

    Gradients delta = net.zero_gradients();
    if (kind_ == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < grads.weights.size(); ++i) {
            delta.weights[i] = -lr_ * grads.weights[i];
            delta.biases[i] = -lr_ * grads.biases[i];
        }
    } else {
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
        auto adam = [&](auto &m, auto &v, const auto &g, auto &d) {
            m = beta1_ * m + (1.0 - beta1_) * g;
            v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
            d = (-lr_ * (m / c1).array() / ((v / c2).array().sqrt() + eps_)).matrix();
        };
        for (std::size_t i = 0; i < grads.weights.size(); ++i) {
            adam(m_.weights[i], v_.weights[i], grads.weights[i], delta.weights[i]);
            adam(m_.biases[i], v_.biases[i], grads.biases[i], delta.biases[i]);
        }
    }
    net.apply_update(delta);
    return norm;
}

nlohmann::json Optimizer::to_json() const {
    auto grads_json = [](const Gradients &g) {
        nlohmann::json w = nlohmann::json::array(), b = nlohmann::json::array();
        for (const auto &m : g.weights)
            w.push_back(matrix_to_json(m));
        for (const auto &v : g.biases)
            b.push_back(matrix_to_json(v));
        return nlohmann::json{{"weights", w}, {"biases", b}};
    };
    return {{"kind", to_string(kind_)}, {"lr", lr_},         {"clip_norm", clip_norm_},
            {"beta1", beta1_},          {"beta2", beta2_},   {"eps", eps_},
            {"steps", steps_},          {"m", grads_json(m_)}, {"v", grads_json(v_)}};
}

Optimizer Optimizer::from_json(const nlohmann::json &j) {
    auto grads_from = [](const nlohmann::json &gj) {
        Gradients g;
        for (const auto &m : gj.at("weights"))
            g.weights.push_back(matrix_from_json(m));
        for (const auto &v : gj.at("biases"))
            g.biases.push_back(matrix_from_json(v).col(0));
        return g;
    };
    Optimizer o;
    o.kind_ = optimizer_from_string(j.at("kind").get<std::string>());
    o.lr_ = j.at("lr").get<double>();
    o.clip_norm_ = j.at("clip_norm").get<double>();
    o.beta1_ = j.at("beta1").get<double>();
    o.beta2_ = j.at("beta2").get<double>();
    o.eps_ = j.at("eps").get<double>();
    o.steps_ = j.at("steps").get<std::int64_t>();
    o.m_ = grads_from(j.at("m"));
    o.v_ = grads_from(j.at("v"));
    return o;
}

} // namespace slicing::nn
