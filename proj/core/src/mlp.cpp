#include "dpnet/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dpnet/error.hpp"
#include "dpnet/random.hpp"

namespace dpnet {

namespace {

void RequireLabels(std::size_t rows, std::size_t classes, std::span<const std::uint32_t> labels) {
  if (labels.size() != rows) throw ContractError("label count does not match batch size");
  for (auto y : labels) {
    if (y >= classes) throw ContractError("label " + std::to_string(y) + " outside " + std::to_string(classes) + " classes");
  }
}

// out = in * Wᵀ + b
Matrix Affine(const Matrix& in, const DenseLayer& layer) {
  const std::size_t out_dim = layer.weight.rows;
  Matrix out(in.rows, out_dim);
  for (std::size_t b = 0; b < in.rows; ++b) {
    const auto x = in.row(b);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const auto w = layer.weight.row(o);
      double sum = layer.bias[o];
      for (std::size_t i = 0; i < x.size(); ++i) sum += w[i] * x[i];
      out(b, o) = sum;
    }
  }
  return out;
}

}  // namespace

Mlp Mlp::Init(std::span<const std::size_t> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ContractError("an MLP needs at least input and output sizes");
  for (auto s : layer_sizes) {
    if (s == 0) throw ContractError("layer sizes must be positive");
  }
  Rng rng(seed);
  Mlp model;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    DenseLayer layer;
    layer.weight = Matrix(layer_sizes[l + 1], layer_sizes[l]);
    const double scale = std::sqrt(2.0 / static_cast<double>(layer_sizes[l]));
    for (auto& w : layer.weight.data) w = rng.Normal(0.0, scale);
    layer.bias.assign(layer_sizes[l + 1], 0.0);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
  return n;
}

ForwardCache forward_cached(const Mlp& model, const Matrix& x) {
  if (model.layers.empty()) throw ContractError("model has no layers");
  if (x.cols != model.input_dim()) {
    throw ContractError("batch has " + std::to_string(x.cols) + " features, model expects " +
                        std::to_string(model.input_dim()));
  }
  ForwardCache cache;
  cache.inputs.reserve(model.layers.size());
  cache.inputs.push_back(x);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Matrix z = Affine(cache.inputs.back(), model.layers[l]);
    for (double v : z.data) {
      if (!std::isfinite(v)) throw NumericalError("non-finite activation in layer " + std::to_string(l));
    }
    if (l + 1 == model.layers.size()) {
      cache.logits = std::move(z);
    } else {
      for (auto& v : z.data) v = std::max(v, 0.0);
      cache.inputs.push_back(std::move(z));
    }
  }

  // Log-sum-exp with the row max subtracted.
  const std::size_t classes = cache.logits.cols;
  cache.log_probs = Matrix(cache.logits.rows, classes);
  cache.probs = Matrix(cache.logits.rows, classes);
  for (std::size_t b = 0; b < cache.logits.rows; ++b) {
    const auto z = cache.logits.row(b);
    const double peak = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - peak);
    const double log_total = peak + std::log(total);
    for (std::size_t c = 0; c < classes; ++c) {
      cache.log_probs(b, c) = z[c] - log_total;
      cache.probs(b, c) = std::exp(cache.log_probs(b, c));
    }
  }
  return cache;
}

Matrix forward(const Mlp& model, const Matrix& x) { return forward_cached(model, x).probs; }

double ce_loss_from_log_probs(const Matrix& log_probs, std::span<const std::uint32_t> labels) {
  RequireLabels(log_probs.rows, log_probs.cols, labels);
  double total = 0.0;
  for (std::size_t b = 0; b < log_probs.rows; ++b) total -= log_probs(b, labels[b]);
  return total / static_cast<double>(log_probs.rows);
}

double ce_loss(const Matrix& probs, std::span<const std::uint32_t> labels) {
  RequireLabels(probs.rows, probs.cols, labels);
  double total = 0.0;
  for (std::size_t b = 0; b < probs.rows; ++b) total -= std::log(probs(b, labels[b]));
  return total / static_cast<double>(probs.rows);
}

Labels predict(const Mlp& model, const Matrix& x) {
  const auto cache = forward_cached(model, x);
  Labels out(x.rows);
  for (std::size_t b = 0; b < x.rows; ++b) {
    const auto z = cache.logits.row(b);
    out[b] = static_cast<std::uint32_t>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

Gradients Gradients::ZerosLike(const Mlp& model) {
  Gradients g;
  for (const auto& l : model.layers) {
    g.weight.emplace_back(l.weight.rows, l.weight.cols);
    g.bias.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

void Gradients::Add(const Gradients& other, double scale) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    for (std::size_t i = 0; i < weight[l].data.size(); ++i) weight[l].data[i] += scale * other.weight[l].data[i];
    for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += scale * other.bias[l][i];
  }
  if (input.data.size() == other.input.data.size()) {
    for (std::size_t i = 0; i < input.data.size(); ++i) input.data[i] += scale * other.input.data[i];
  }
}

Gradients backward_from_logits(const Mlp& model, const ForwardCache& cache, const Matrix& d_logits) {
  Gradients g = Gradients::ZerosLike(model);
  Matrix delta = d_logits;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const auto& layer = model.layers[l];
    const Matrix& in = cache.inputs[l];
    auto& dw = g.weight[l];
    auto& db = g.bias[l];
    for (std::size_t b = 0; b < delta.rows; ++b) {
      const auto x = in.row(b);
      for (std::size_t o = 0; o < delta.cols; ++o) {
        const double d = delta(b, o);
        if (d == 0.0) continue;
        db[o] += d;
        auto row = dw.row(o);
        for (std::size_t i = 0; i < x.size(); ++i) row[i] += d * x[i];
      }
    }
    Matrix d_in(delta.rows, layer.weight.cols);
    for (std::size_t b = 0; b < delta.rows; ++b) {
      auto out = d_in.row(b);
      for (std::size_t o = 0; o < delta.cols; ++o) {
        const double d = delta(b, o);
        if (d == 0.0) continue;
        const auto w = layer.weight.row(o);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += d * w[i];
      }
    }
    if (l > 0) {
      // ReLU: pass gradient only where the activation was positive.
      for (std::size_t i = 0; i < d_in.data.size(); ++i) {
        if (in.data[i] <= 0.0) d_in.data[i] = 0.0;
      }
    }
    delta = std::move(d_in);
  }
  g.input = std::move(delta);
  return g;
}

Matrix ce_logit_gradient(const Matrix& probs, std::span<const std::uint32_t> labels) {
  RequireLabels(probs.rows, probs.cols, labels);
  Matrix d = probs;
  const double inv = 1.0 / static_cast<double>(probs.rows);
  for (std::size_t b = 0; b < d.rows; ++b) {
    d(b, labels[b]) -= 1.0;
    for (auto& v : d.row(b)) v *= inv;
  }
  return d;
}

Gradients backward(const Mlp& model, const Matrix& x, std::span<const std::uint32_t> labels) {
  const auto cache = forward_cached(model, x);
  return backward_from_logits(model, cache, ce_logit_gradient(cache.probs, labels));
}

double mean_kl(const Matrix& log_p, const Matrix& log_q) {
  if (log_p.rows != log_q.rows || log_p.cols != log_q.cols) throw ContractError("KL operands differ in shape");
  double total = 0.0;
  for (std::size_t i = 0; i < log_p.data.size(); ++i) total += std::exp(log_p.data[i]) * (log_p.data[i] - log_q.data[i]);
  return total / static_cast<double>(log_p.rows);
}

KlLogitGradients kl_logit_gradients(const Matrix& log_p, const Matrix& log_q) {
  if (log_p.rows != log_q.rows || log_p.cols != log_q.cols) throw ContractError("KL operands differ in shape");
  KlLogitGradients g{Matrix(log_p.rows, log_p.cols), Matrix(log_p.rows, log_p.cols)};
  const double inv = 1.0 / static_cast<double>(log_p.rows);
  for (std::size_t b = 0; b < log_p.rows; ++b) {
    double kl = 0.0;
    for (std::size_t c = 0; c < log_p.cols; ++c) kl += std::exp(log_p(b, c)) * (log_p(b, c) - log_q(b, c));
    for (std::size_t c = 0; c < log_p.cols; ++c) {
      const double p = std::exp(log_p(b, c));
      const double q = std::exp(log_q(b, c));
      g.clean(b, c) = inv * p * ((log_p(b, c) - log_q(b, c)) - kl);
      g.adversarial(b, c) = inv * (q - p);
    }
  }
  return g;
}

}  // namespace dpnet
