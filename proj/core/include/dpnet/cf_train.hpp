#ifndef DPNET_CF_TRAIN_HPP
#define DPNET_CF_TRAIN_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpnet/error.hpp"
#include "dpnet/mlp.hpp"
#include "dpnet/model_format.hpp"

namespace dpnet {

struct Dataset {
  Matrix features;
  Labels labels;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Four-class task: two Gaussian blobs per class in the plane, classes
/// interleaved around a ring, lifted to `dims` features by a fixed random
/// projection plus small isotropic noise. `task_seed` fixes the mixture and
/// projection; `sample_seed` draws the points.
Dataset make_synthetic_dataset(std::uint64_t task_seed, std::uint64_t sample_seed, std::size_t count,
                               std::size_t dims = 20);

struct DatasetSplit {
  Dataset train;
  Dataset test;
};
DatasetSplit make_synthetic_split(std::uint64_t seed, std::size_t train_count = 2000, std::size_t test_count = 1000);

/// One sample per line: comma-separated features then an integer label.
/// Blank lines and '#' comments are skipped, as is a non-numeric first line.
Dataset load_csv_dataset(const std::filesystem::path& path);

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows);
Labels gather_labels(const Labels& y, std::span<const std::size_t> rows);

/// codebooks[layer][row] holds that weight row's ascending centers.
using ModelCodebooks = std::vector<std::vector<std::vector<double>>>;

/// Optimal K-center codebook of every weight row (biases are not quantized).
ModelCodebooks optimal_codebooks(const Mlp& model, std::size_t k);

/// Squared distance of each weight to its nearest center, accumulated into
/// `gradient` as 2λ(w - c). Ties go to the lower center. Returns the
/// unscaled squared error.
double penalty_term(std::span<const double> weights, std::span<const double> centers, double lambda,
                    std::span<double> gradient);

struct PenaltyResult {
  double quantization_error = 0.0;  ///< Σ min_k (w - c)²
  double penalty = 0.0;             ///< λ · quantization_error
  std::vector<Matrix> gradient;     ///< per layer, same shape as the weight
};

PenaltyResult regularizer_and_gradient(const Mlp& model, const ModelCodebooks& codebooks, double lambda);

/// Every weight snapped to its nearest codebook entry.
Mlp apply_codebooks(const Mlp& model, const ModelCodebooks& codebooks);
/// apply_codebooks(model, optimal_codebooks(model, k)).
Mlp quantize_model(const Mlp& model, std::size_t k);

struct PgdOptions {
  double epsilon = 0.1;
  double step_size = 0.025;
  int steps = 10;
  bool random_start = false;
  double random_start_scale = 0.001;
  std::uint64_t seed = 0;
};

/// L∞ PGD on the cross-entropy: x' ← clip_{[x-ε, x+ε]}(x' + α·sign(∇x')).
/// Starts at x unless random_start is set.
Matrix pgd_attack(const Mlp& model, const Matrix& x, std::span<const std::uint32_t> labels, const PgdOptions& options);

/// Same ascent on KL(f(x) || f(x')), the inner maximization of the robust objective.
Matrix consistency_attack(const Mlp& model, const Matrix& x, const PgdOptions& options);

struct ObjectiveTerms {
  double natural_loss = 0.0;       ///< mean cross-entropy on x
  double consistency = 0.0;        ///< mean KL(f(x) || f(x'))
  double quantization_error = 0.0;
  double total = 0.0;              ///< natural + γ·consistency + λ·quantization_error
};

/// The robust clustering-friendly objective with the adversarial batch held
/// fixed. Gradients, when requested, are with respect to the parameters.
ObjectiveTerms trades_objective(const Mlp& model, const Matrix& x, std::span<const std::uint32_t> labels,
                                const Matrix& x_adv, double gamma, double lambda, const ModelCodebooks* codebooks,
                                Gradients* gradients = nullptr);

enum class LrSchedule { kConstant, kCosine };

struct RobustSpec {
  double gamma = 1.0;
  double epsilon = 0.1;
  int pgd_steps = 10;
  double pgd_step_size = 0.025;
  /// The KL ascent has zero gradient at x' = x, so it needs a perturbed start.
  bool random_start = true;
};

struct TrainSpec {
  std::vector<std::size_t> layer_sizes{20, 32, 32, 4};
  double lambda = 100.0;
  int t = 5;  ///< epochs between codebook updates
  std::size_t k = 8;
  LrSchedule schedule = LrSchedule::kCosine;
  double lr_start = 0.004;
  double lr_end = 0.001;
  int epochs = 40;
  /// Leading epochs of plain training before the penalty and codebooks kick in.
  int warmup_epochs = 20;
  std::size_t batch_size = 32;
  double momentum = 0.0;
  std::uint64_t seed = 1;
  std::optional<RobustSpec> robust;

  void Validate() const;
  double LearningRate(int epoch) const;
};

/// key=value lines, '#' comments. Keys: layer_sizes (comma list), lambda,
/// t, k, schedule (constant|cosine), lr_start, lr_end, epochs,
/// warmup_epochs, batch_size, momentum, seed, robust (true|false), gamma,
/// epsilon, pgd_steps, pgd_step_size, pgd_random_start.
TrainSpec parse_train_spec(const std::string& text);
TrainSpec load_train_spec(const std::filesystem::path& path);
std::string format_train_spec(const TrainSpec& spec);

struct EpochRecord {
  int epoch = 0;
  bool clustering = false;  ///< penalty active this epoch
  double learning_rate = 0.0;
  double task_loss = 0.0;
  double objective = 0.0;
  double quantization_error = 0.0;
  double train_accuracy = 0.0;
};

struct CodebookUpdate {
  int epoch = 0;
  double error_before = 0.0;
  double error_after = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<CodebookUpdate> codebook_updates;

  std::string EpochsCsv() const;
  std::string CodebookUpdatesCsv() const;
};

class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, TrainHistory history)
      : NumericalError(what), history_(std::move(history)) {}
  const TrainHistory& history() const noexcept { return history_; }

 private:
  TrainHistory history_;
};

struct TrainResult {
  Mlp model;
  ModelCodebooks codebooks;
  TrainHistory history;
};

/// Warmup epochs of plain SGD, then the alternating scheme: t epochs of SGD
/// on task loss + λ·penalty with codebooks fixed, then every row's codebook
/// re-solved optimally. With `robust` set the task loss is the robust
/// objective. Deterministic for a given spec.
TrainResult train_alternating(const TrainSpec& spec, const Dataset& train);

/// The same SGD loop with no penalty and no codebooks at all.
TrainResult train_plain(const TrainSpec& spec, const Dataset& train);

struct Accuracy {
  double natural = 0.0;
  double adversarial = 0.0;  ///< equals natural when no attack is given
};

Accuracy evaluate(const Mlp& model, const Dataset& data, const std::optional<PgdOptions>& attack = std::nullopt);

/// Attack used for robust evaluation derived from a spec (CE-PGD, no random start).
PgdOptions evaluation_attack(const RobustSpec& robust, std::uint64_t seed);

/// Paired comparison: the same spec trained with λ = 0 (the baseline that
/// is quantized without clustering-friendly retraining) and with the given
/// λ, each quantized to K per-row centers afterwards.
struct QuantizationComparison {
  Accuracy baseline_dense;
  Accuracy baseline_quantized;
  Accuracy clustered_dense;
  Accuracy clustered_quantized;
  double baseline_error = 0.0;   ///< post-hoc optimal quantization error
  double clustered_error = 0.0;  ///< post-hoc optimal quantization error
  TrainResult baseline;
  TrainResult clustered;

  double baseline_natural_drop() const { return baseline_dense.natural - baseline_quantized.natural; }
  double clustered_natural_drop() const { return clustered_dense.natural - clustered_quantized.natural; }
  double baseline_adversarial_drop() const { return baseline_dense.adversarial - baseline_quantized.adversarial; }
  double clustered_adversarial_drop() const { return clustered_dense.adversarial - clustered_quantized.adversarial; }
};

QuantizationComparison compare_quantization(const TrainSpec& spec, const Dataset& train, const Dataset& test);

/// Weights as "layerN.weight" [out, in] and biases as "layerN.bias" [out], float32.
DenseModel export_dense_model(const Mlp& model);
Mlp import_dense_model(const DenseModel& dense);

/// FNV-1a of a byte string, used to pin golden training histories.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace dpnet

#endif  // DPNET_CF_TRAIN_HPP
