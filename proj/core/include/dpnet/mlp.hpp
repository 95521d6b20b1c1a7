#ifndef DPNET_MLP_HPP
#define DPNET_MLP_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dpnet {

/// Row-major dense matrix of doubles. Training runs in double so analytic
/// gradients can be checked tightly against finite differences.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// One affine layer; weight is out x in so each row feeds one output unit.
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// ReLU hidden layers, softmax output.
struct Mlp {
  std::vector<DenseLayer> layers;

  /// He-normal weights, zero biases.
  static Mlp Init(std::span<const std::size_t> layer_sizes, std::uint64_t seed);

  std::size_t input_dim() const { return layers.front().weight.cols; }
  std::size_t classes() const { return layers.back().weight.rows; }
  std::size_t parameter_count() const;

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

using Labels = std::vector<std::uint32_t>;

/// Everything backward() needs from one forward pass.
struct ForwardCache {
  /// inputs[l] is the input of layer l (inputs[0] is the batch itself).
  std::vector<Matrix> inputs;
  Matrix logits;
  Matrix log_probs;
  Matrix probs;
};

/// Throws NumericalError if any activation is non-finite.
ForwardCache forward_cached(const Mlp& model, const Matrix& x);
/// Class probabilities, one row per sample.
Matrix forward(const Mlp& model, const Matrix& x);

/// Mean cross-entropy given log-probabilities.
double ce_loss_from_log_probs(const Matrix& log_probs, std::span<const std::uint32_t> labels);
/// Mean cross-entropy given probabilities (log taken here).
double ce_loss(const Matrix& probs, std::span<const std::uint32_t> labels);

/// Predicted class per row; ties go to the lower class index.
Labels predict(const Mlp& model, const Matrix& x);

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;
  Matrix input;

  static Gradients ZerosLike(const Mlp& model);
  void Add(const Gradients& other, double scale = 1.0);
};

/// Backpropagates an arbitrary gradient with respect to the logits.
Gradients backward_from_logits(const Mlp& model, const ForwardCache& cache, const Matrix& d_logits);
/// Exact gradient of the mean cross-entropy.
Gradients backward(const Mlp& model, const Matrix& x, std::span<const std::uint32_t> labels);

/// Gradient of mean cross-entropy with respect to the logits: (p - onehot) / B.
Matrix ce_logit_gradient(const Matrix& probs, std::span<const std::uint32_t> labels);

/// Mean over rows of KL(p || q) from log-probabilities.
double mean_kl(const Matrix& log_p, const Matrix& log_q);

/// d mean KL(p||q) / d clean logits and / d adversarial logits.
struct KlLogitGradients {
  Matrix clean;
  Matrix adversarial;
};
KlLogitGradients kl_logit_gradients(const Matrix& log_p, const Matrix& log_q);

}  // namespace dpnet

#endif  // DPNET_MLP_HPP
