// dpnet: quantize, inspect and benchmark compressed models, and run the
// clustering-friendly training demos.
//
// Exit codes: 0 ok, 1 bad input data, 2 bad flags, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpnet/cf_train.hpp"
#include "dpnet/error.hpp"
#include "dpnet/inference.hpp"
#include "dpnet/model_format.hpp"
#include "dpnet/tensor_quant.hpp"

namespace fs = std::filesystem;
using namespace dpnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CliConfig {
  std::string input;
  std::string output;
  std::size_t k = 8;
  std::string mode = "auto";
  std::string coding = "fixed";
  double sparsity = 0.0;
  bool include_biases = false;
  unsigned threads = 1;
  int reps = 10;
  std::vector<std::string> shapes;
  std::string spec_path;
  std::string out_dir = "dpnet_out";
  std::string train_csv;
  std::string test_csv;
  std::uint64_t seed = 1;
  bool seed_given = false;
};

std::string Fmt(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string ShapeString(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s.empty() ? "scalar" : s;
}

// Rank-1 tensors (biases, norm scales) stay float32 unless asked otherwise.
bool Quantizable(const Tensor& t, const CliConfig& cfg) { return t.meta.rank() >= 2 || cfg.include_biases; }

GroupingMode ModeFor(const Tensor& t, const CliConfig& cfg) {
  if (cfg.mode == "auto") return default_grouping_mode(t.meta);
  return parse_grouping_mode(cfg.mode);
}

void ValidateQuantizeFlags(const CliConfig& cfg) {
  if (cfg.k < 2) throw UsageError("--k must be at least 2 (one center leaves no index to store)");
  if (cfg.mode != "auto") {
    try {
      parse_grouping_mode(cfg.mode);
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
  }
  Coding coding;
  try {
    coding = parse_coding(cfg.coding);
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  if (coding == Coding::kRaw) throw UsageError("--coding must be fixed or huffman");
  if (coding == Coding::kFixedWidth && cfg.k > 256) throw UsageError("fixed-width coding supports K <= 256");
  if (coding == Coding::kHuffman && cfg.k > 65535) throw UsageError("--k too large");
  if (!(cfg.sparsity >= 0.0 && cfg.sparsity < 1.0)) throw UsageError("--sparsity must lie in [0, 1)");
  if (cfg.threads == 0) throw UsageError("--threads must be positive");
}

int CmdQuantize(const CliConfig& cfg) {
  ValidateQuantizeFlags(cfg);
  const Coding coding = parse_coding(cfg.coding);
  const DenseModel dense = read_dense_model(cfg.input);

  CompressedModel model;
  std::vector<LayerGroups> groups;
  std::uint64_t dense_bits = 0;
  std::cout << "tensor,shape,mode,groups,k,loss,eq1_ratio\n";
  for (const auto& tensor : dense.tensors) {
    dense_bits += 32ull * tensor.data.size();
    if (!Quantizable(tensor, cfg)) {
      model.tensors.push_back(make_raw_record(tensor));
      std::cout << tensor.meta.name << ',' << ShapeString(tensor.meta.shape) << ",raw,0,0,0,1\n";
      continue;
    }
    const GroupingMode mode = ModeFor(tensor, cfg);
    std::optional<PruneMask> mask;
    Tensor source = tensor;
    if (cfg.sparsity > 0.0 && tensor.meta.rank() >= 2) {
      auto pruned = prune_columns(tensor, cfg.sparsity);
      source = std::move(pruned.pruned);
      mask = std::move(pruned.mask);
    }
    QuantizedTensor q = quantize_tensor(source, mode, {cfg.k, cfg.threads});
    double loss = 0.0;
    for (double l : group_losses(source, q)) loss += l;
    const LayerGroups lg{q.scheme.group_count, q.scheme.group_size};
    groups.push_back(lg);
    std::cout << tensor.meta.name << ',' << ShapeString(tensor.meta.shape) << ',' << to_string(mode) << ','
              << lg.group_count << ',' << q.max_codebook_size() << ',' << Fmt("%.9g", loss) << ','
              << Fmt("%.4f", compression_ratio(std::span(&lg, 1), cfg.k)) << '\n';
    model.tensors.push_back(make_record(std::move(q), coding, std::move(mask)));
  }

  const auto bytes = serialize_model(model);
  write_file(cfg.output, bytes);
  std::cout << "# wrote " << cfg.output << " (" << bytes.size() << " bytes)\n";
  if (!groups.empty()) {
    std::cout << "# eq1_ratio (quantized tensors, K=" << cfg.k << "): " << Fmt("%.4f", compression_ratio(groups, cfg.k))
              << '\n';
  }
  std::cout << "# file_ratio (all tensors vs float32): "
            << Fmt("%.4f", static_cast<double>(dense_bits) / (8.0 * static_cast<double>(bytes.size()))) << '\n';
  return kExitOk;
}

int CmdInspect(const CliConfig& cfg) {
  const auto bytes = read_file(cfg.input);
  const CompressedModel model = deserialize_model(bytes);
  std::size_t accounted = kFileHeaderBytes;
  std::cout << "# format DPNQ v" << model.format_version << ", " << model.tensors.size() << " tensors, "
            << bytes.size() << " bytes\n";
  std::cout << "tensor,shape,mode,groups,k,coding,pruned,header_bytes,codebook_bytes,payload_bytes,mask_bytes,"
               "measured_ratio,eq1_ratio\n";
  for (const auto& record : model.tensors) {
    const auto sizes = record_sizes(record);
    accounted += sizes.total();
    const auto& meta = record.meta();
    const double stored_bits = 8.0 * static_cast<double>(sizes.codebook_bytes + sizes.payload_bytes + sizes.mask_bytes);
    const double measured = stored_bits > 0 ? 32.0 * static_cast<double>(meta.element_count()) / stored_bits : 0.0;
    std::cout << meta.name << ',' << ShapeString(meta.shape) << ',';
    if (record.coding == Coding::kRaw) {
      std::cout << "raw,0,0,raw,0,";
    } else {
      const auto& q = record.quantized;
      std::cout << to_string(q.scheme.mode) << ',' << q.scheme.group_count << ',' << q.max_codebook_size() << ','
                << to_string(record.coding) << ','
                << (record.mask ? record.mask->keep.size() - record.mask->survivors() : 0) << ',';
    }
    std::cout << sizes.header_bytes << ',' << sizes.codebook_bytes << ',' << sizes.payload_bytes << ','
              << sizes.mask_bytes << ',' << Fmt("%.4f", measured) << ',';
    const std::size_t k = record.coding == Coding::kRaw ? 0 : record.quantized.max_codebook_size();
    if (k >= 2) {
      const LayerGroups lg{record.quantized.scheme.group_count, record.quantized.scheme.group_size};
      std::cout << Fmt("%.4f", compression_ratio(std::span(&lg, 1), k)) << '\n';
    } else {
      std::cout << "n/a\n";
    }
  }
  std::cout << "# accounted_bytes " << accounted << (accounted == bytes.size() ? " (matches file size)\n" : " (MISMATCH)\n");
  return accounted == bytes.size() ? kExitOk : kExitData;
}

int CmdDequantize(const CliConfig& cfg) {
  const CompressedModel model = deserialize_model(read_file(cfg.input));
  DenseModel dense;
  for (const auto& record : model.tensors) dense.tensors.push_back(decode_record(record));
  write_dense_model(dense, cfg.output);
  std::cout << "# wrote " << cfg.output << " (" << dense.tensors.size() << " tensors)\n";
  return kExitOk;
}

LayerShape ParseShape(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    const auto rows = std::stoull(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    const auto cols = std::stoull(text.substr(x + 1), &used);
    if (used != text.size() - x - 1 || rows == 0 || cols == 0) throw std::invalid_argument(text);
    return {rows, cols};
  } catch (const std::exception&) {
    throw UsageError("--shape expects ROWSxCOLS, got '" + text + "'");
  }
}

int CmdBench(const CliConfig& cfg) {
  if (cfg.reps <= 0) throw UsageError("--reps must be positive");
  if (cfg.input.empty() && cfg.shapes.empty()) throw UsageError("bench needs --shape or a DPNQ file");
  std::vector<LayerShape> shapes;
  for (const auto& s : cfg.shapes) shapes.push_back(ParseShape(s));
  for (const auto& s : shapes) {
    if (cfg.k < 1 || cfg.k > s.cols) throw UsageError("--k must lie in [1, cols] for shape " + std::to_string(s.rows) + "x" + std::to_string(s.cols));
  }

  BenchOptions options;
  options.k = cfg.k;
  options.repetitions = cfg.reps;
  options.seed = cfg.seed;
  std::cout << bench_csv_header() << '\n';
  for (const auto& s : shapes) {
    std::cout << bench_csv_row(std::to_string(s.rows) + "x" + std::to_string(s.cols), bench(s, options)) << '\n';
  }
  if (!cfg.input.empty()) {
    const CompressedModel model = deserialize_model(read_file(cfg.input));
    for (const auto& record : model.tensors) {
      if (record.coding == Coding::kRaw) continue;
      const auto mode = record.quantized.scheme.mode;
      if (mode != GroupingMode::kPerRow && mode != GroupingMode::kPerFilter) continue;
      std::cout << bench_csv_row(record.meta().name, bench(record.quantized, options)) << '\n';
    }
  }
  return kExitOk;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::kIo, 0, "cannot write " + path.string());
  out << text;
}

// Quantized export of a trained MLP: weights per-row, biases raw.
CompressedModel CompressMlp(const Mlp& model, std::size_t k) {
  CompressedModel out;
  for (const auto& tensor : export_dense_model(model).tensors) {
    if (tensor.meta.rank() < 2) {
      out.tensors.push_back(make_raw_record(tensor));
    } else {
      out.tensors.push_back(make_record(quantize_tensor(tensor, GroupingMode::kPerRow, {k, 1}), Coding::kFixedWidth));
    }
  }
  return out;
}

std::string ComparisonReport(const QuantizationComparison& c, bool robust) {
  std::string out = "model,dense_natural,quantized_natural,natural_drop";
  if (robust) out += ",dense_adversarial,quantized_adversarial,adversarial_drop";
  out += ",quantization_error\n";
  const auto row = [&](const char* name, const Accuracy& dense, const Accuracy& quant, double error) {
    out += name;
    out += ',' + Fmt("%.4f", dense.natural) + ',' + Fmt("%.4f", quant.natural) + ',' + Fmt("%.4f", dense.natural - quant.natural);
    if (robust) {
      out += ',' + Fmt("%.4f", dense.adversarial) + ',' + Fmt("%.4f", quant.adversarial) + ',' +
             Fmt("%.4f", dense.adversarial - quant.adversarial);
    }
    out += ',' + Fmt("%.9g", error) + '\n';
  };
  row("quantized_without_retraining", c.baseline_dense, c.baseline_quantized, c.baseline_error);
  row("clustering_friendly", c.clustered_dense, c.clustered_quantized, c.clustered_error);
  return out;
}

int CmdTrain(const CliConfig& cfg, bool robust) {
  TrainSpec spec;
  if (robust) {
    spec.robust = RobustSpec{};
    spec.k = 4;
  }
  if (!cfg.spec_path.empty()) {
    spec = load_train_spec(cfg.spec_path);
    if (robust && !spec.robust) throw UsageError("train-robust needs robust=true in the spec");
  }
  if (cfg.seed_given) spec.seed = cfg.seed;
  spec.Validate();

  DatasetSplit data;
  if (cfg.train_csv.empty() != cfg.test_csv.empty()) throw UsageError("--train-csv and --test-csv go together");
  if (cfg.train_csv.empty()) {
    data = make_synthetic_split(spec.seed);
  } else {
    data.train = load_csv_dataset(cfg.train_csv);
    data.test = load_csv_dataset(cfg.test_csv);
  }

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  QuantizationComparison c;
  try {
    c = compare_quantization(spec, data.train, data.test);
  } catch (const TrainingDiverged& e) {
    WriteText(dir / "history.csv", e.history().EpochsCsv());
    std::cerr << "dpnet: training diverged: " << e.what() << '\n' << e.history().EpochsCsv();
    return kExitNumerical;
  }

  WriteText(dir / "spec.txt", format_train_spec(spec));
  WriteText(dir / "history.csv", c.clustered.history.EpochsCsv());
  WriteText(dir / "codebook_updates.csv", c.clustered.history.CodebookUpdatesCsv());
  WriteText(dir / "baseline_history.csv", c.baseline.history.EpochsCsv());
  const std::string report = ComparisonReport(c, spec.robust.has_value());
  WriteText(dir / "comparison.csv", report);
  write_dense_model(export_dense_model(c.clustered.model), dir / "model.json");
  write_file(dir / "model.dpnq", serialize_model(CompressMlp(c.clustered.model, spec.k)));

  std::cout << report;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64(c.clustered.history.EpochsCsv())));
  std::cout << "# history_fnv1a64 " << hash << '\n';
  std::cout << "# artifacts in " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal-clustering weight quantization toolkit"};
  app.require_subcommand(1);
  CliConfig cfg;
  app.add_option("--seed", cfg.seed, "Seed for every random draw")->each([&](const std::string&) { cfg.seed_given = true; });

  auto* quantize = app.add_subcommand("quantize", "Dense manifest -> DPNQ file");
  quantize->add_option("input", cfg.input, "Dense model manifest (.json)")->required();
  quantize->add_option("-o,--output", cfg.output, "Output DPNQ file")->required();
  quantize->add_option("--k", cfg.k, "Codebook size per group");
  quantize->add_option("--mode", cfg.mode, "auto, per-row, per-filter or whole-tensor");
  quantize->add_option("--coding", cfg.coding, "fixed or huffman");
  quantize->add_option("--sparsity", cfg.sparsity, "Fraction of columns to prune before quantizing");
  quantize->add_flag("--include-biases", cfg.include_biases, "Quantize rank-1 tensors too");
  quantize->add_option("--threads", cfg.threads, "Worker threads");

  auto* dequantize = app.add_subcommand("dequantize", "DPNQ file -> dense manifest");
  dequantize->add_option("input", cfg.input, "DPNQ file")->required();
  dequantize->add_option("-o,--output", cfg.output, "Output manifest (.json)")->required();

  auto* inspect = app.add_subcommand("inspect", "Summarize a DPNQ file");
  inspect->add_option("input", cfg.input, "DPNQ file")->required();

  auto* bench_cmd = app.add_subcommand("bench", "Op counts and timings of compressed matvec");
  bench_cmd->add_option("input", cfg.input, "Optional DPNQ file");
  bench_cmd->add_option("--shape", cfg.shapes, "ROWSxCOLS of a random layer (repeatable)");
  bench_cmd->add_option("--k", cfg.k, "Codebook size for random layers")->default_val(16);
  bench_cmd->add_option("--reps", cfg.reps, "Timed repetitions");

  CLI::App* train_cmds[2];
  const char* names[2] = {"train-demo", "train-robust"};
  const char* help[2] = {"Clustering-friendly training vs quantizing a plain model",
                         "Same comparison with adversarial training"};
  for (int i = 0; i < 2; ++i) {
    auto* t = app.add_subcommand(names[i], help[i]);
    t->add_option("--spec", cfg.spec_path, "key=value training spec");
    t->add_option("--out-dir", cfg.out_dir, "Directory for artifacts");
    t->add_option("--train-csv", cfg.train_csv, "Training set (features..., label)");
    t->add_option("--test-csv", cfg.test_csv, "Test set (features..., label)");
    train_cmds[i] = t;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*quantize) return CmdQuantize(cfg);
    if (*dequantize) return CmdDequantize(cfg);
    if (*inspect) return CmdInspect(cfg);
    if (*bench_cmd) return CmdBench(cfg);
    if (*train_cmds[0]) return CmdTrain(cfg, false);
    if (*train_cmds[1]) return CmdTrain(cfg, true);
  } catch (const UsageError& e) {
    std::cerr << "dpnet: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "dpnet: " << e.what() << '\n';
    return kExitData;
  } catch (const DecodeError& e) {
    std::cerr << "dpnet: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "dpnet: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ContractError& e) {
    std::cerr << "dpnet: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "dpnet: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
