#include "dpnet/cf_train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "dpnet/dp_core.hpp"
#include "dpnet/random.hpp"

namespace dpnet {

namespace {

std::uint64_t MixSeed(std::uint64_t a, std::uint64_t b) {
  // SplitMix64 finalizer over a simple combination.
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string Trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double ParseDouble(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ContractError("train spec: '" + key + "' expects a number, got '" + value + "'");
  }
}

long long ParseInt(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ContractError("train spec: '" + key + "' expects an integer, got '" + value + "'");
  }
  return v;
}

bool ParseBool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ContractError("train spec: '" + key + "' expects true or false, got '" + value + "'");
}

double Accuracy01(const Labels& predicted, const Labels& truth) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += (predicted[i] == truth[i]);
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double CodebookError(const Mlp& model, const ModelCodebooks& codebooks) {
  double error = 0.0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& w = model.layers[l].weight;
    for (std::size_t r = 0; r < w.rows; ++r) {
      const auto& centers = codebooks[l][r];
      for (double v : w.row(r)) {
        const double d = v - centers[nearest_center(v, centers)];
        error += d * d;
      }
    }
  }
  return error;
}

// Signed-gradient ascent projected onto the L∞ ball around x.
template <typename GradientFn>
Matrix ProjectedAscent(const Matrix& x, const PgdOptions& options, GradientFn&& input_gradient) {
  if (options.epsilon < 0.0) throw ContractError("PGD epsilon must be non-negative");
  Matrix adv = x;
  if (options.epsilon == 0.0) return adv;
  if (options.random_start) {
    Rng rng(options.seed);
    for (std::size_t i = 0; i < adv.data.size(); ++i) {
      const double v = x.data[i] + options.random_start_scale * rng.Normal();
      adv.data[i] = std::clamp(v, x.data[i] - options.epsilon, x.data[i] + options.epsilon);
    }
  }
  for (int step = 0; step < options.steps; ++step) {
    const Matrix g = input_gradient(adv);
    for (std::size_t i = 0; i < adv.data.size(); ++i) {
      const double s = g.data[i] > 0.0 ? 1.0 : (g.data[i] < 0.0 ? -1.0 : 0.0);
      const double v = adv.data[i] + options.step_size * s;
      adv.data[i] = std::clamp(v, x.data[i] - options.epsilon, x.data[i] + options.epsilon);
    }
  }
  return adv;
}

TrainResult Train(const TrainSpec& spec, const Dataset& train, bool alternating) {
  spec.Validate();
  if (train.size() == 0) throw ContractError("training set is empty");
  if (spec.layer_sizes.front() != train.features.cols) {
    throw ContractError("first layer size " + std::to_string(spec.layer_sizes.front()) + " does not match " +
                        std::to_string(train.features.cols) + " features");
  }
  if (spec.layer_sizes.back() != train.classes) {
    throw ContractError("last layer size does not match the dataset's class count");
  }

  TrainResult result;
  result.model = Mlp::Init(spec.layer_sizes, spec.seed);
  Mlp& model = result.model;
  ModelCodebooks& codebooks = result.codebooks;
  TrainHistory& history = result.history;

  Rng shuffle_rng(MixSeed(spec.seed, 1));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  Gradients velocity = Gradients::ZerosLike(model);
  const bool use_momentum = spec.momentum != 0.0;

  try {
    for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
      const bool clustering = alternating && epoch > spec.warmup_epochs;
      if (clustering && codebooks.empty()) codebooks = optimal_codebooks(model, spec.k);
      const double lr = spec.LearningRate(epoch - 1);
      shuffle_rng.Shuffle(order.begin(), order.end());

      double task_sum = 0.0;
      double objective_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t begin = 0; begin < order.size(); begin += spec.batch_size) {
        const std::size_t end = std::min(order.size(), begin + spec.batch_size);
        const std::span<const std::size_t> rows(order.data() + begin, end - begin);
        const Matrix xb = gather_rows(train.features, rows);
        const Labels yb = gather_labels(train.labels, rows);

        Gradients grad;
        double task_loss = 0.0;
        if (spec.robust) {
          PgdOptions attack;
          attack.epsilon = spec.robust->epsilon;
          attack.step_size = spec.robust->pgd_step_size;
          attack.steps = spec.robust->pgd_steps;
          attack.random_start = spec.robust->random_start;
          attack.seed = MixSeed(MixSeed(spec.seed, static_cast<std::uint64_t>(epoch)), batches);
          const Matrix x_adv = consistency_attack(model, xb, attack);
          task_loss = trades_objective(model, xb, yb, x_adv, spec.robust->gamma, 0.0, nullptr, &grad).total;
        } else {
          const auto cache = forward_cached(model, xb);
          task_loss = ce_loss_from_log_probs(cache.log_probs, yb);
          grad = backward_from_logits(model, cache, ce_logit_gradient(cache.probs, yb));
        }
        double objective = task_loss;
        if (clustering) {
          const auto penalty = regularizer_and_gradient(model, codebooks, spec.lambda);
          objective += penalty.penalty;
          for (std::size_t l = 0; l < grad.weight.size(); ++l) {
            auto& gw = grad.weight[l].data;
            const auto& pw = penalty.gradient[l].data;
            for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += pw[i];
          }
        }
        if (!std::isfinite(objective)) {
          throw TrainingDiverged("non-finite objective in epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batches),
                                 history);
        }

        for (std::size_t l = 0; l < model.layers.size(); ++l) {
          auto& w = model.layers[l].weight.data;
          auto& b = model.layers[l].bias;
          if (use_momentum) {
            auto& vw = velocity.weight[l].data;
            auto& vb = velocity.bias[l];
            for (std::size_t i = 0; i < w.size(); ++i) {
              vw[i] = spec.momentum * vw[i] + grad.weight[l].data[i];
              w[i] -= lr * vw[i];
            }
            for (std::size_t i = 0; i < b.size(); ++i) {
              vb[i] = spec.momentum * vb[i] + grad.bias[l][i];
              b[i] -= lr * vb[i];
            }
          } else {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * grad.weight[l].data[i];
            for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * grad.bias[l][i];
          }
        }
        task_sum += task_loss;
        objective_sum += objective;
        ++batches;
      }

      EpochRecord record;
      record.epoch = epoch;
      record.clustering = clustering;
      record.learning_rate = lr;
      record.task_loss = task_sum / static_cast<double>(batches);
      record.objective = objective_sum / static_cast<double>(batches);
      record.quantization_error = codebooks.empty() ? 0.0 : CodebookError(model, codebooks);
      record.train_accuracy = Accuracy01(predict(model, train.features), train.labels);
      history.epochs.push_back(record);

      if (clustering && (epoch - spec.warmup_epochs) % spec.t == 0) {
        CodebookUpdate update;
        update.epoch = epoch;
        update.error_before = record.quantization_error;
        codebooks = optimal_codebooks(model, spec.k);
        update.error_after = CodebookError(model, codebooks);
        history.codebook_updates.push_back(update);
      }
    }
  } catch (const TrainingDiverged&) {
    throw;
  } catch (const NumericalError& e) {
    throw TrainingDiverged(std::string(e.what()) + " after " + std::to_string(history.epochs.size()) + " epochs",
                           history);
  }
  return result;
}

}  // namespace

Dataset make_synthetic_dataset(std::uint64_t task_seed, std::uint64_t sample_seed, std::size_t count,
                               std::size_t dims) {
  constexpr std::size_t kClasses = 4;
  constexpr std::size_t kBlobsPerClass = 2;
  constexpr std::size_t kBlobs = kClasses * kBlobsPerClass;
  constexpr double kRadius = 2.5;
  constexpr double kBlobStd = 0.45;
  constexpr double kLiftNoise = 0.05;
  if (dims < 2) throw ContractError("synthetic task needs at least 2 features");

  Rng task(MixSeed(task_seed, 0x7A5C));
  std::vector<std::array<double, 2>> centers(kBlobs);
  for (std::size_t b = 0; b < kBlobs; ++b) {
    // Neighbouring blobs belong to different classes.
    const double angle = 2.0 * std::numbers::pi * (static_cast<double>(b) + 0.2 * task.Uniform(-1.0, 1.0)) / kBlobs;
    centers[b] = {kRadius * std::cos(angle), kRadius * std::sin(angle)};
  }
  Matrix projection(dims, 2);
  for (auto& v : projection.data) v = task.Normal(0.0, 1.0 / std::sqrt(2.0));

  Rng sample(MixSeed(task_seed, sample_seed));
  Dataset data;
  data.classes = kClasses;
  data.features = Matrix(count, dims);
  data.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t blob = sample.Below(kBlobs);
    data.labels[i] = static_cast<std::uint32_t>(blob % kClasses);
    const double px = centers[blob][0] + sample.Normal(0.0, kBlobStd);
    const double py = centers[blob][1] + sample.Normal(0.0, kBlobStd);
    for (std::size_t d = 0; d < dims; ++d) {
      data.features(i, d) = projection(d, 0) * px + projection(d, 1) * py + sample.Normal(0.0, kLiftNoise);
    }
  }
  return data;
}

DatasetSplit make_synthetic_split(std::uint64_t seed, std::size_t train_count, std::size_t test_count) {
  return {make_synthetic_dataset(seed, 1, train_count), make_synthetic_dataset(seed, 2, test_count)};
}

Dataset load_csv_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::kIo, 0, "cannot open dataset " + path.string());
  std::vector<std::vector<double>> rows;
  Labels labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = Trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(Trim(cell));
    std::vector<double> values;
    bool numeric = true;
    for (const auto& c : cells) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (ec != std::errc() || ptr != c.data() + c.size()) {
        numeric = false;
        break;
      }
      values.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && labels.empty()) continue;  // header
      throw FormatError(FormatError::Kind::kInvalidField, line_no, "non-numeric cell in " + path.string());
    }
    if (values.size() < 2) throw FormatError(FormatError::Kind::kInvalidField, line_no, "need features and a label");
    if (width == 0) width = values.size();
    if (values.size() != width) throw FormatError(FormatError::Kind::kInvalidField, line_no, "ragged row");
    const double label = values.back();
    if (label < 0 || label != std::floor(label)) {
      throw FormatError(FormatError::Kind::kInvalidField, line_no, "label must be a non-negative integer");
    }
    labels.push_back(static_cast<std::uint32_t>(label));
    values.pop_back();
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw FormatError(FormatError::Kind::kInvalidField, 0, "dataset " + path.string() + " is empty");
  Dataset data;
  data.features = Matrix(rows.size(), width - 1);
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), data.features.row(r).begin());
  data.labels = std::move(labels);
  data.classes = *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  return data;
}

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), x.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(x.row(rows[i]).begin(), x.cols, out.row(i).begin());
  return out;
}

Labels gather_labels(const Labels& y, std::span<const std::size_t> rows) {
  Labels out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = y[rows[i]];
  return out;
}

ModelCodebooks optimal_codebooks(const Mlp& model, std::size_t k) {
  ModelCodebooks books(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& w = model.layers[l].weight;
    books[l].resize(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r) {
      const SortedWeights sorted(w.row(r));
      books[l][r] = collapse_duplicate_centers(dp_cluster(sorted, std::min(k, w.cols))).centers;
    }
  }
  return books;
}

double penalty_term(std::span<const double> weights, std::span<const double> centers, double lambda,
                    std::span<double> gradient) {
  if (gradient.size() != weights.size()) throw ContractError("gradient buffer does not match weights");
  if (centers.empty()) throw ContractError("penalty needs at least one center");
  double error = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double d = weights[i] - centers[nearest_center(weights[i], centers)];
    error += d * d;
    gradient[i] += 2.0 * lambda * d;
  }
  return error;
}

PenaltyResult regularizer_and_gradient(const Mlp& model, const ModelCodebooks& codebooks, double lambda) {
  if (codebooks.size() != model.layers.size()) throw ContractError("one codebook set per layer required");
  PenaltyResult result;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& w = model.layers[l].weight;
    if (codebooks[l].size() != w.rows) throw ContractError("one codebook per weight row required");
    Matrix g(w.rows, w.cols);
    for (std::size_t r = 0; r < w.rows; ++r) {
      result.quantization_error += penalty_term(w.row(r), codebooks[l][r], lambda, g.row(r));
    }
    result.gradient.push_back(std::move(g));
  }
  result.penalty = lambda * result.quantization_error;
  return result;
}

Mlp apply_codebooks(const Mlp& model, const ModelCodebooks& codebooks) {
  Mlp out = model;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    auto& w = out.layers[l].weight;
    for (std::size_t r = 0; r < w.rows; ++r) {
      const auto& centers = codebooks.at(l).at(r);
      for (auto& v : w.row(r)) v = centers[nearest_center(v, centers)];
    }
  }
  return out;
}

Mlp quantize_model(const Mlp& model, std::size_t k) { return apply_codebooks(model, optimal_codebooks(model, k)); }

Matrix pgd_attack(const Mlp& model, const Matrix& x, std::span<const std::uint32_t> labels, const PgdOptions& options) {
  return ProjectedAscent(x, options, [&](const Matrix& adv) {
    const auto cache = forward_cached(model, adv);
    return backward_from_logits(model, cache, ce_logit_gradient(cache.probs, labels)).input;
  });
}

Matrix consistency_attack(const Mlp& model, const Matrix& x, const PgdOptions& options) {
  const auto clean = forward_cached(model, x);
  return ProjectedAscent(x, options, [&](const Matrix& adv) {
    const auto cache = forward_cached(model, adv);
    const auto g = kl_logit_gradients(clean.log_probs, cache.log_probs);
    return backward_from_logits(model, cache, g.adversarial).input;
  });
}

ObjectiveTerms trades_objective(const Mlp& model, const Matrix& x, std::span<const std::uint32_t> labels,
                                const Matrix& x_adv, double gamma, double lambda, const ModelCodebooks* codebooks,
                                Gradients* gradients) {
  ObjectiveTerms terms;
  const auto clean = forward_cached(model, x);
  terms.natural_loss = ce_loss_from_log_probs(clean.log_probs, labels);

  const bool use_consistency = gamma != 0.0;
  ForwardCache adv;
  if (use_consistency) {
    adv = forward_cached(model, x_adv);
    terms.consistency = mean_kl(clean.log_probs, adv.log_probs);
  }
  PenaltyResult penalty;
  if (codebooks != nullptr && lambda != 0.0) {
    penalty = regularizer_and_gradient(model, *codebooks, lambda);
    terms.quantization_error = penalty.quantization_error;
  }
  terms.total = terms.natural_loss + gamma * terms.consistency + lambda * terms.quantization_error;

  if (gradients != nullptr) {
    Matrix d_clean = ce_logit_gradient(clean.probs, labels);
    Gradients g;
    if (use_consistency) {
      const auto kl = kl_logit_gradients(clean.log_probs, adv.log_probs);
      for (std::size_t i = 0; i < d_clean.data.size(); ++i) d_clean.data[i] += gamma * kl.clean.data[i];
      Matrix d_adv = kl.adversarial;
      for (auto& v : d_adv.data) v *= gamma;
      g = backward_from_logits(model, clean, d_clean);
      const auto g_adv = backward_from_logits(model, adv, d_adv);
      g.Add(g_adv);
    } else {
      g = backward_from_logits(model, clean, d_clean);
    }
    if (!penalty.gradient.empty()) {
      for (std::size_t l = 0; l < g.weight.size(); ++l) {
        for (std::size_t i = 0; i < g.weight[l].data.size(); ++i) g.weight[l].data[i] += penalty.gradient[l].data[i];
      }
    }
    *gradients = std::move(g);
  }
  return terms;
}

void TrainSpec::Validate() const {
  if (layer_sizes.size() < 2) throw ContractError("train spec: layer_sizes needs at least two entries");
  if (lambda < 0.0) throw ContractError("train spec: lambda must be non-negative");
  if (k < 2) throw ContractError("train spec: K must be at least 2");
  if (epochs <= 0) throw ContractError("train spec: epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs > epochs) throw ContractError("train spec: warmup_epochs must lie in [0, epochs]");
  if (t <= 0 || t > epochs) throw ContractError("train spec: t must lie in [1, epochs]");
  if (batch_size == 0) throw ContractError("train spec: batch_size must be positive");
  if (lr_start <= 0.0 || lr_end <= 0.0) throw ContractError("train spec: learning rates must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ContractError("train spec: momentum must lie in [0, 1)");
  if (robust) {
    if (robust->epsilon < 0.0) throw ContractError("train spec: epsilon must be non-negative");
    if (robust->gamma < 0.0) throw ContractError("train spec: gamma must be non-negative");
    if (robust->pgd_steps < 0) throw ContractError("train spec: pgd_steps must be non-negative");
    if (robust->pgd_step_size < 0.0) throw ContractError("train spec: pgd_step_size must be non-negative");
  }
}

double TrainSpec::LearningRate(int epoch) const {
  if (schedule == LrSchedule::kConstant) return lr_start;
  const double progress = static_cast<double>(epoch) / static_cast<double>(epochs);
  return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(std::numbers::pi * progress));
}

TrainSpec parse_train_spec(const std::string& text) {
  TrainSpec spec;
  RobustSpec robust;
  bool robust_enabled = false;
  std::stringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ContractError("train spec line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));

    if (key == "layer_sizes") {
      spec.layer_sizes.clear();
      std::stringstream ls(value);
      std::string item;
      while (std::getline(ls, item, ',')) {
        const auto v = ParseInt(key, Trim(item));
        if (v <= 0) throw ContractError("train spec: layer sizes must be positive");
        spec.layer_sizes.push_back(static_cast<std::size_t>(v));
      }
    } else if (key == "lambda") {
      spec.lambda = ParseDouble(key, value);
    } else if (key == "t") {
      spec.t = static_cast<int>(ParseInt(key, value));
    } else if (key == "k" || key == "K") {
      const auto v = ParseInt(key, value);
      if (v < 0) throw ContractError("train spec: K must be non-negative");
      spec.k = static_cast<std::size_t>(v);
    } else if (key == "schedule") {
      if (value == "constant") {
        spec.schedule = LrSchedule::kConstant;
      } else if (value == "cosine") {
        spec.schedule = LrSchedule::kCosine;
      } else {
        throw ContractError("train spec: schedule must be constant or cosine");
      }
    } else if (key == "lr_start" || key == "lr") {
      spec.lr_start = ParseDouble(key, value);
    } else if (key == "lr_end") {
      spec.lr_end = ParseDouble(key, value);
    } else if (key == "epochs") {
      spec.epochs = static_cast<int>(ParseInt(key, value));
    } else if (key == "warmup_epochs") {
      spec.warmup_epochs = static_cast<int>(ParseInt(key, value));
    } else if (key == "batch_size") {
      const auto v = ParseInt(key, value);
      if (v <= 0) throw ContractError("train spec: batch_size must be positive");
      spec.batch_size = static_cast<std::size_t>(v);
    } else if (key == "momentum") {
      spec.momentum = ParseDouble(key, value);
    } else if (key == "seed") {
      spec.seed = static_cast<std::uint64_t>(ParseInt(key, value));
    } else if (key == "robust") {
      robust_enabled = ParseBool(key, value);
    } else if (key == "gamma") {
      robust.gamma = ParseDouble(key, value);
    } else if (key == "epsilon") {
      robust.epsilon = ParseDouble(key, value);
    } else if (key == "pgd_steps") {
      robust.pgd_steps = static_cast<int>(ParseInt(key, value));
    } else if (key == "pgd_step_size") {
      robust.pgd_step_size = ParseDouble(key, value);
    } else if (key == "pgd_random_start") {
      robust.random_start = ParseBool(key, value);
    } else {
      throw ContractError("train spec: unknown key '" + key + "'");
    }
  }
  if (robust_enabled) spec.robust = robust;
  spec.Validate();
  return spec;
}

TrainSpec load_train_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::kIo, 0, "cannot open train spec " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_train_spec(buffer.str());
}

std::string format_train_spec(const TrainSpec& spec) {
  std::ostringstream out;
  out.precision(17);
  out << "layer_sizes=";
  for (std::size_t i = 0; i < spec.layer_sizes.size(); ++i) out << (i ? "," : "") << spec.layer_sizes[i];
  out << "\nlambda=" << spec.lambda << "\nt=" << spec.t << "\nk=" << spec.k
      << "\nschedule=" << (spec.schedule == LrSchedule::kCosine ? "cosine" : "constant") << "\nlr_start=" << spec.lr_start
      << "\nlr_end=" << spec.lr_end << "\nepochs=" << spec.epochs << "\nwarmup_epochs=" << spec.warmup_epochs
      << "\nbatch_size=" << spec.batch_size << "\nmomentum=" << spec.momentum << "\nseed=" << spec.seed
      << "\nrobust=" << (spec.robust ? "true" : "false") << '\n';
  if (spec.robust) {
    out << "gamma=" << spec.robust->gamma << "\nepsilon=" << spec.robust->epsilon << "\npgd_steps=" << spec.robust->pgd_steps
        << "\npgd_step_size=" << spec.robust->pgd_step_size
        << "\npgd_random_start=" << (spec.robust->random_start ? "true" : "false") << '\n';
  }
  return out.str();
}

std::string TrainHistory::EpochsCsv() const {
  std::string out = "epoch,clustering,learning_rate,task_loss,objective,quantization_error,train_accuracy\n";
  char buf[256];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.clustering ? 1 : 0,
                  e.learning_rate, e.task_loss, e.objective, e.quantization_error, e.train_accuracy);
    out += buf;
  }
  return out;
}

std::string TrainHistory::CodebookUpdatesCsv() const {
  std::string out = "epoch,error_before,error_after\n";
  char buf[128];
  for (const auto& u : codebook_updates) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", u.epoch, u.error_before, u.error_after);
    out += buf;
  }
  return out;
}

TrainResult train_alternating(const TrainSpec& spec, const Dataset& train) { return Train(spec, train, true); }

TrainResult train_plain(const TrainSpec& spec, const Dataset& train) { return Train(spec, train, false); }

Accuracy evaluate(const Mlp& model, const Dataset& data, const std::optional<PgdOptions>& attack) {
  Accuracy acc;
  acc.natural = Accuracy01(predict(model, data.features), data.labels);
  acc.adversarial = acc.natural;
  if (attack) {
    const Matrix adv = pgd_attack(model, data.features, data.labels, *attack);
    acc.adversarial = Accuracy01(predict(model, adv), data.labels);
  }
  return acc;
}

PgdOptions evaluation_attack(const RobustSpec& robust, std::uint64_t seed) {
  PgdOptions attack;
  attack.epsilon = robust.epsilon;
  attack.step_size = robust.pgd_step_size;
  attack.steps = robust.pgd_steps;
  attack.random_start = false;
  attack.seed = seed;
  return attack;
}

QuantizationComparison compare_quantization(const TrainSpec& spec, const Dataset& train, const Dataset& test) {
  QuantizationComparison out;
  out.baseline = train_plain(spec, train);
  out.clustered = train_alternating(spec, train);
  std::optional<PgdOptions> attack;
  if (spec.robust) attack = evaluation_attack(*spec.robust, spec.seed);

  const auto baseline_books = optimal_codebooks(out.baseline.model, spec.k);
  const auto clustered_books = optimal_codebooks(out.clustered.model, spec.k);
  out.baseline_error = CodebookError(out.baseline.model, baseline_books);
  out.clustered_error = CodebookError(out.clustered.model, clustered_books);
  out.baseline_dense = evaluate(out.baseline.model, test, attack);
  out.baseline_quantized = evaluate(apply_codebooks(out.baseline.model, baseline_books), test, attack);
  out.clustered_dense = evaluate(out.clustered.model, test, attack);
  out.clustered_quantized = evaluate(apply_codebooks(out.clustered.model, clustered_books), test, attack);
  return out;
}

DenseModel export_dense_model(const Mlp& model) {
  DenseModel dense;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    const std::string prefix = "layer" + std::to_string(l);
    dense.tensors.emplace_back(prefix + ".weight", std::vector<std::size_t>{layer.weight.rows, layer.weight.cols},
                               std::vector<float>(layer.weight.data.begin(), layer.weight.data.end()));
    dense.tensors.emplace_back(prefix + ".bias", std::vector<std::size_t>{layer.bias.size()},
                               std::vector<float>(layer.bias.begin(), layer.bias.end()));
  }
  return dense;
}

Mlp import_dense_model(const DenseModel& dense) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : dense.tensors) by_name[t.meta.name] = &t;
  Mlp model;
  for (std::size_t l = 0;; ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    const auto w = by_name.find(prefix + ".weight");
    if (w == by_name.end()) break;
    const auto b = by_name.find(prefix + ".bias");
    if (b == by_name.end()) throw ContractError("missing " + prefix + ".bias");
    const auto& ws = w->second->meta.shape;
    if (ws.size() != 2 || b->second->meta.shape != std::vector<std::size_t>{ws[0]}) {
      throw ContractError("inconsistent shapes for " + prefix);
    }
    DenseLayer layer;
    layer.weight = Matrix(ws[0], ws[1]);
    std::copy(w->second->data.begin(), w->second->data.end(), layer.weight.data.begin());
    layer.bias.assign(b->second->data.begin(), b->second->data.end());
    model.layers.push_back(std::move(layer));
  }
  if (model.layers.empty()) throw ContractError("dense model holds no layerN.weight tensors");
  return model;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace dpnet
