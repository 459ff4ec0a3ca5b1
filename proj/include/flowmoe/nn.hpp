#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowmoe::nn {

// Batches are row-major: one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using MatrixRef = Eigen::Ref<const Matrix>;

enum class Activation : std::uint32_t { relu = 0, tanh = 1 };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Dense feed-forward classifier with a softmax head.
///
/// weights[k] maps layer k to layer k + 1 and has shape
/// layer_dims[k + 1] x layer_dims[k]. Hidden layers use `activation`;
/// the last layer produces logits.
struct MlpModel {
    std::vector<std::size_t> layer_dims;
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    Activation activation = Activation::relu;

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
    std::size_t layer_count() const { return weights.size(); }
    std::size_t parameter_count() const;
    // Width of the penultimate layer (the latent fed to the output layer).
    std::size_t latent_dim() const { return layer_dims[layer_dims.size() - 2]; }

    bool operator==(const MlpModel&) const = default;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 100;
    std::size_t batch_size = 8192;
    // Graphs with at most this many edges are stepped as one full batch.
    std::size_t full_batch_edges = 50000;
    std::uint64_t seed = 1;
    std::string optimizer = "adam";

    void validate() const;
};

/// Glorot-uniform weights, U(-sqrt(6/(in+out)), +sqrt(6/(in+out))), drawn
/// row-major layer by layer from Rng(seed); biases start at zero.
MlpModel mlp_init(std::span<const std::size_t> layer_dims, std::uint64_t seed,
                  Activation activation = Activation::relu);

MlpModel mlp_zero(std::span<const std::size_t> layer_dims, Activation activation = Activation::relu);

// Row-wise softmax, numerically stabilized by the row max.
Matrix softmax_rows(const Matrix& logits);

Matrix mlp_logits(const MlpModel& model, const MatrixRef& x);

// n x output_dim probability rows.
Matrix mlp_forward(const MlpModel& model, const MatrixRef& x);

// Penultimate-layer activations (n x latent_dim).
Matrix mlp_latent(const MlpModel& model, const MatrixRef& x);

inline constexpr double kProbabilityEpsilon = 1e-12;

// -log(p[y]) with p[y] clamped to [eps, 1 - eps].
double cross_entropy(std::span<const double> p, int y);

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    // d loss / d input, only filled when requested.
    Matrix input;

    static Gradients zeros_like(const MlpModel& model);
    void add_scaled(const Gradients& other, double scale);
    bool all_finite() const;
};

// Activations kept from a forward pass for backpropagation.
struct ForwardCache {
    std::vector<Matrix> activations;  // [0] = input, [k] = output of hidden layer k
    Matrix logits;
};

ForwardCache forward_cached(const MlpModel& model, const MatrixRef& x);

// Backpropagates an upstream gradient on the logits.
Gradients backward_from_logits(const MlpModel& model, const ForwardCache& cache, const Matrix& dlogits,
                               bool want_input_grad = false);

struct LossGrad {
    double loss = 0.0;
    Gradients grads;
};

/// Weighted mean cross-entropy and its gradient:
///   loss = sum_i w_i CE(p_i, y_i) / sum_i w_i
/// With no weights every row counts 1. Rows with w_i = 0 contribute nothing.
/// Throws TrainingError when the total weight is zero.
/// When want_input_grad is set, grads.input holds d loss / d x.
LossGrad loss_and_grad(const MlpModel& model, const MatrixRef& x, std::span<const int> labels,
                       std::span<const double> weights = {}, bool want_input_grad = false);

// Gradient of the mean cross-entropy over the batch.
Gradients mlp_backward(const MlpModel& model, const MatrixRef& x, std::span<const int> labels);

// w <- w - lr * g
void sgd_step(MlpModel& model, const Gradients& grads, double learning_rate);

/// Adam with the usual defaults (b1 0.9, b2 0.999, eps 1e-8) and bias
/// correction. State is sized to the model on the first step.
class AdamOptimizer {
public:
    AdamOptimizer() = default;
    AdamOptimizer(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(MlpModel& model, const Gradients& grads, double learning_rate);
    std::uint64_t steps() const { return t_; }

private:
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::uint64_t t_ = 0;
    Gradients m_;
    Gradients v_;
};

// Optimizer selected by TrainConfig::optimizer ("adam" or "sgd").
class Optimizer {
public:
    explicit Optimizer(const TrainConfig& config);
    // Throws TrainingError on non-finite gradients, leaving the model untouched.
    void step(MlpModel& model, const Gradients& grads);

private:
    bool adam_ = true;
    double learning_rate_;
    AdamOptimizer adam_state_;
};

bool all_finite(const MlpModel& model);

// Binary layout: "FMOE", u32 version, u32 activation, u32 dim count,
// u64 dims..., f64 weights (row-major, layer order), f64 biases. Little endian.
inline constexpr std::uint32_t kModelFormatVersion = 1;

void write_model(std::ostream& out, const MlpModel& model);
MlpModel read_model(std::istream& in);
std::string serialize_model(const MlpModel& model);
MlpModel deserialize_model(const std::string& bytes);

}  // namespace flowmoe::nn
