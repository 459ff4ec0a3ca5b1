#include "flowmoe/nn.hpp"

#include "flowmoe/binary_io.hpp"
#include "flowmoe/error.hpp"
#include "flowmoe/random.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flowmoe::nn {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "unknown";
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + name + "'");
}

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) n += weights[k].size() + biases[k].size();
    return n;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate must be a positive finite number");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (optimizer != "adam" && optimizer != "sgd")
        throw ConfigError("optimizer must be 'adam' or 'sgd', got '" + optimizer + "'");
}

namespace {

void check_dims(std::span<const std::size_t> dims) {
    if (dims.size() < 2) throw DimensionError("an MLP needs at least an input and an output layer");
    for (auto d : dims)
        if (d < 1) throw DimensionError("layer widths must be >= 1");
}

void apply_activation(Matrix& z, Activation a) {
    switch (a) {
        case Activation::relu: z = z.cwiseMax(0.0); break;
        case Activation::tanh: z = z.array().tanh().matrix(); break;
    }
}

void check_input(const MlpModel& model, const MatrixRef& x) {
    if (static_cast<std::size_t>(x.cols()) != model.input_dim())
        throw DimensionError("input has " + std::to_string(x.cols()) + " columns, model expects " +
                             std::to_string(model.input_dim()));
}

Matrix affine(const MatrixRef& a, const Matrix& w, const Vector& b) {
    Matrix z = a * w.transpose();
    z.rowwise() += b.transpose();
    return z;
}

}  // namespace

MlpModel mlp_zero(std::span<const std::size_t> layer_dims, Activation activation) {
    check_dims(layer_dims);
    MlpModel m;
    m.layer_dims.assign(layer_dims.begin(), layer_dims.end());
    m.activation = activation;
    for (std::size_t k = 0; k + 1 < layer_dims.size(); ++k) {
        m.weights.push_back(Matrix::Zero(layer_dims[k + 1], layer_dims[k]));
        m.biases.push_back(Vector::Zero(layer_dims[k + 1]));
    }
    return m;
}

MlpModel mlp_init(std::span<const std::size_t> layer_dims, std::uint64_t seed, Activation activation) {
    MlpModel m = mlp_zero(layer_dims, activation);
    Rng rng(seed);
    for (auto& w : m.weights) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-limit, limit);
    }
    return m;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            p(i, j) = std::exp(logits(i, j) - mx);
            sum += p(i, j);
        }
        p.row(i) /= sum;
    }
    return p;
}

ForwardCache forward_cached(const MlpModel& model, const MatrixRef& x) {
    check_input(model, x);
    ForwardCache cache;
    cache.activations.reserve(model.layer_count());
    cache.activations.push_back(x);
    for (std::size_t k = 0; k + 1 < model.layer_count(); ++k) {
        Matrix z = affine(cache.activations.back(), model.weights[k], model.biases[k]);
        apply_activation(z, model.activation);
        cache.activations.push_back(std::move(z));
    }
    cache.logits = affine(cache.activations.back(), model.weights.back(), model.biases.back());
    return cache;
}

Matrix mlp_latent(const MlpModel& model, const MatrixRef& x) {
    check_input(model, x);
    if (model.layer_count() == 1) return x;
    Matrix a = affine(x, model.weights[0], model.biases[0]);
    apply_activation(a, model.activation);
    for (std::size_t k = 1; k + 1 < model.layer_count(); ++k) {
        a = affine(a, model.weights[k], model.biases[k]);
        apply_activation(a, model.activation);
    }
    return a;
}

Matrix mlp_logits(const MlpModel& model, const MatrixRef& x) {
    Matrix a = mlp_latent(model, x);
    return affine(a, model.weights.back(), model.biases.back());
}

Matrix mlp_forward(const MlpModel& model, const MatrixRef& x) { return softmax_rows(mlp_logits(model, x)); }

double cross_entropy(std::span<const double> p, int y) {
    if (y < 0 || static_cast<std::size_t>(y) >= p.size())
        throw DimensionError("class label " + std::to_string(y) + " out of range");
    const double q = std::clamp(p[static_cast<std::size_t>(y)], kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
    return -std::log(q);
}

Gradients Gradients::zeros_like(const MlpModel& model) {
    Gradients g;
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
        g.weights.push_back(Matrix::Zero(model.weights[k].rows(), model.weights[k].cols()));
        g.biases.push_back(Vector::Zero(model.biases[k].size()));
    }
    return g;
}

void Gradients::add_scaled(const Gradients& other, double scale) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
        weights[k] += scale * other.weights[k];
        biases[k] += scale * other.biases[k];
    }
}

bool Gradients::all_finite() const {
    for (std::size_t k = 0; k < weights.size(); ++k)
        if (!weights[k].allFinite() || !biases[k].allFinite()) return false;
    return true;
}

Gradients backward_from_logits(const MlpModel& model, const ForwardCache& cache, const Matrix& dlogits,
                               bool want_input_grad) {
    const std::size_t layers = model.layer_count();
    if (dlogits.rows() != cache.logits.rows() || dlogits.cols() != cache.logits.cols())
        throw DimensionError("logit gradient shape does not match the forward pass");

    Gradients g;
    g.weights.resize(layers);
    g.biases.resize(layers);
    Matrix delta = dlogits;
    for (std::size_t k = layers; k-- > 0;) {
        const Matrix& a_prev = cache.activations[k];
        g.weights[k] = delta.transpose() * a_prev;
        g.biases[k] = delta.colwise().sum().transpose();
        if (k == 0 && !want_input_grad) break;
        Matrix da = delta * model.weights[k];
        if (k > 0) {
            switch (model.activation) {
                case Activation::relu: da.array() *= (a_prev.array() > 0.0).cast<double>(); break;
                case Activation::tanh: da.array() *= 1.0 - a_prev.array().square(); break;
            }
        }
        if (k == 0) g.input = std::move(da);
        else delta = std::move(da);
    }
    return g;
}

LossGrad loss_and_grad(const MlpModel& model, const MatrixRef& x, std::span<const int> labels,
                       std::span<const double> weights, bool want_input_grad) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (labels.size() != n) throw DimensionError("label count does not match batch size");
    if (!weights.empty() && weights.size() != n) throw DimensionError("weight count does not match batch size");

    double total = 0.0;
    if (weights.empty()) total = static_cast<double>(n);
    else
        for (double w : weights) total += w;
    if (!(total > 0.0)) throw TrainingError("batch has zero total weight");

    ForwardCache cache = forward_cached(model, x);
    Matrix p = softmax_rows(cache.logits);
    Matrix dlogits = p;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        const int y = labels[i];
        const auto row = static_cast<Eigen::Index>(i);
        if (y < 0 || y >= static_cast<int>(model.output_dim())) throw DimensionError("class label out of range");
        if (w != 0.0) loss += w * -std::log(std::clamp(p(row, y), kProbabilityEpsilon, 1.0 - kProbabilityEpsilon));
        dlogits(row, y) -= 1.0;
        dlogits.row(row) *= w / total;
    }
    LossGrad out;
    out.loss = loss / total;
    out.grads = backward_from_logits(model, cache, dlogits, want_input_grad);
    return out;
}

Gradients mlp_backward(const MlpModel& model, const MatrixRef& x, std::span<const int> labels) {
    return loss_and_grad(model, x, labels).grads;
}

void sgd_step(MlpModel& model, const Gradients& grads, double learning_rate) {
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
        model.weights[k] -= learning_rate * grads.weights[k];
        model.biases[k] -= learning_rate * grads.biases[k];
    }
}

void AdamOptimizer::step(MlpModel& model, const Gradients& grads, double learning_rate) {
    if (t_ == 0) {
        m_ = Gradients::zeros_like(model);
        v_ = Gradients::zeros_like(model);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        param.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
        update(model.weights[k], grads.weights[k], m_.weights[k], v_.weights[k]);
        update(model.biases[k], grads.biases[k], m_.biases[k], v_.biases[k]);
    }
}

Optimizer::Optimizer(const TrainConfig& config)
    : adam_(config.optimizer == "adam"), learning_rate_(config.learning_rate) {
    config.validate();
}

void Optimizer::step(MlpModel& model, const Gradients& grads) {
    if (grads.weights.size() != model.layer_count()) throw DimensionError("gradient layer count mismatch");
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
        if (grads.weights[k].rows() != model.weights[k].rows() || grads.weights[k].cols() != model.weights[k].cols() ||
            grads.biases[k].size() != model.biases[k].size())
            throw DimensionError("gradient shape mismatch at layer " + std::to_string(k));
    }
    if (!grads.all_finite()) throw TrainingError("non-finite gradient");
    if (adam_) adam_state_.step(model, grads, learning_rate_);
    else sgd_step(model, grads, learning_rate_);
    if (!all_finite(model)) throw TrainingError("parameters became non-finite after an optimizer step");
}

bool all_finite(const MlpModel& model) {
    for (std::size_t k = 0; k < model.layer_count(); ++k)
        if (!model.weights[k].allFinite() || !model.biases[k].allFinite()) return false;
    return true;
}

void write_model(std::ostream& out, const MlpModel& model) {
    out.write("FMOE", 4);
    binary::put_u32(out, kModelFormatVersion);
    binary::put_u32(out, static_cast<std::uint32_t>(model.activation));
    binary::put_u32(out, static_cast<std::uint32_t>(model.layer_dims.size()));
    for (auto d : model.layer_dims) binary::put_u64(out, d);
    for (const auto& w : model.weights)
        for (Eigen::Index i = 0; i < w.size(); ++i) binary::put_f64(out, w.data()[i]);
    for (const auto& b : model.biases)
        for (Eigen::Index i = 0; i < b.size(); ++i) binary::put_f64(out, b[i]);
}

MlpModel read_model(std::istream& in) {
    if (binary::get_tag(in) != "FMOE") throw FormatError("model blob does not start with FMOE");
    const auto version = binary::get_u32(in);
    if (version != kModelFormatVersion)
        throw FormatError("unsupported model format version " + std::to_string(version));
    const auto act = binary::get_u32(in);
    if (act > static_cast<std::uint32_t>(Activation::tanh)) throw FormatError("unknown activation code");
    const auto count = binary::get_u32(in);
    if (count < 2 || count > 64) throw FormatError("implausible layer count");
    std::vector<std::size_t> dims(count);
    for (auto& d : dims) {
        d = binary::get_u64(in);
        if (d < 1 || d > (1u << 20)) throw FormatError("implausible layer width");
    }
    MlpModel m = mlp_zero(dims, static_cast<Activation>(act));
    // Matrix is row-major, so data() order is the row-major wire order.
    for (auto& w : m.weights)
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = binary::get_f64(in);
    for (auto& b : m.biases)
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = binary::get_f64(in);
    return m;
}

std::string serialize_model(const MlpModel& model) {
    std::ostringstream out(std::ios::binary);
    write_model(out, model);
    return out.str();
}

MlpModel deserialize_model(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    return read_model(in);
}

}  // namespace flowmoe::nn
