// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dpnet/bitpack.hpp"
#include "dpnet/cf_train.hpp"
#include "dpnet/dp_core.hpp"
#include "dpnet/huffman.hpp"
#include "dpnet/inference.hpp"
#include "dpnet/model_format.hpp"
#include "dpnet/random.hpp"
#include "dpnet/tensor_quant.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace dpnet;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void Report(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs < budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s criterion %d: %s | %s | %.2fs (budget %.0fs)%s\n", pass ? "PASS" : "FAIL", id, title, o.detail.c_str(),
              secs, budget_s, in_time ? "" : " OVER BUDGET");
  std::fflush(stdout);
}

std::string Printf(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

std::vector<double> Draw(Rng& rng, std::size_t n, bool gaussian) {
  std::vector<double> v(n);
  for (auto& x : v) x = gaussian ? rng.Normal() : rng.Uniform(-1.0, 1.0);
  return v;
}

Outcome DpOptimality() {
  Rng rng(101);
  int contiguous = 0, all = 0;
  double worst = 0.0;
  for (int i = 0; i < 1200; ++i) {
    const std::size_t n = 1 + rng.Below(12);
    const std::size_t k = 1 + rng.Below(std::min<std::size_t>(n, 4));
    const auto v = Draw(rng, n, i % 2 == 1);
    const double dp = dp_cluster(SortedWeights(std::span(v)), k).loss;
    const double bf = brute_force_cluster(v, k, BruteForceMode::kContiguous).loss;
    const double rel = std::abs(dp - bf) / std::max(bf, 1e-300);
    worst = std::max(worst, bf == 0.0 ? std::abs(dp) : rel);
    if (bf == 0.0 ? std::abs(dp) <= 1e-12 : rel <= 1e-9) ++contiguous;
  }
  double worst_all = 0.0;
  for (int i = 0; i < 300; ++i) {
    const std::size_t n = 1 + rng.Below(8);
    const std::size_t k = 1 + rng.Below(std::min<std::size_t>(n, 4));
    const auto v = Draw(rng, n, i % 2 == 1);
    const double dp = dp_cluster(SortedWeights(std::span(v)), k).loss;
    const double bf = brute_force_cluster(v, k, BruteForceMode::kAllAssignments).loss;
    const double rel = std::abs(dp - bf) / std::max(bf, 1e-300);
    worst_all = std::max(worst_all, bf == 0.0 ? std::abs(dp) : rel);
    if (bf == 0.0 ? std::abs(dp) <= 1e-12 : rel <= 1e-9) ++all;
  }
  return {contiguous == 1200 && all == 300,
          Printf("contiguous %d/1200 (max rel %.1e), all-assignments %d/300 (max rel %.1e)", contiguous, worst, all,
                 worst_all)};
}

Outcome DpDominatesLloyd() {
  Rng rng(202);
  const std::size_t ks[] = {2, 4, 8};
  int dominated = 0, strict = 0;
  const int total = 1200;
  for (int i = 0; i < total; ++i) {
    const std::size_t k = ks[i % 3];
    const std::size_t n = k + rng.Below(200 - k + 1);
    // Mixtures with uneven blobs give Lloyd its local minima.
    std::vector<double> v(n);
    const int mode = i % 4;
    for (auto& x : v) {
      if (mode == 0) x = rng.Uniform(-1, 1);
      else if (mode == 1) x = rng.Normal();
      else x = rng.Normal(static_cast<double>(rng.Below(k + 2)) * (mode == 2 ? 1.0 : 0.3), 0.15);
    }
    LloydOptions opt;
    opt.seed = static_cast<std::uint64_t>(i);
    const double dp = dp_cluster(SortedWeights(std::span(v)), k).loss;
    const double ll = lloyd_cluster(v, k, opt).loss;
    if (dp <= ll + 1e-12) ++dominated;
    if (dp < ll - 1e-9 * std::max(1.0, ll)) ++strict;
  }
  return {dominated == total && strict * 100 >= total,
          Printf("dp <= lloyd in %d/%d, strictly better in %d (%.1f%%)", dominated, total, strict,
                 100.0 * strict / total)};
}

Outcome CompressionArithmetic() {
  const LayerGroups fig1{1, 9};
  const double cr_fig1 = compression_ratio(std::span(&fig1, 1), 2);
  const LayerGroups huge{1, std::size_t{1} << 40};
  const double a3 = compression_ratio(std::span(&huge, 1), 8);
  const double a4 = compression_ratio(std::span(&huge, 1), 16);
  const LayerGroups fc{1000, 1024};
  const LayerGroups conv{384, 1728};
  const double fc4 = compression_ratio(std::span(&fc, 1), 16);
  const double conv4 = compression_ratio(std::span(&conv, 1), 16);
  const double fc3 = compression_ratio(std::span(&fc, 1), 8);
  const bool pass = cr_fig1 == 288.0 / 73.0 && std::abs(a3 - 32.0 / 3.0) < 1e-9 && std::abs(a4 - 8.0) < 1e-9 &&
                    std::lround(fc4) == 7 && std::lround(conv4) == 7 && std::lround(fc3) == 10;
  return {pass, Printf("fig1 %.6f (288/73=%.6f), asymptotes %.4f/%.4f, 4-bit 1000x1024 %.3f, 384x1728 %.3f, "
                       "3-bit 1000x1024 %.3f",
                       cr_fig1, 288.0 / 73.0, a3, a4, fc4, conv4, fc3)};
}

Outcome InferenceEquivalence() {
  Rng rng(303);
  int matvec_ok = 0, conv_ok = 0;
  double worst_mv = 0.0, worst_conv = 0.0;
  for (int i = 0; i < 100; ++i) {
    const LayerShape shape{1 + rng.Below(64), 1 + rng.Below(300)};
    const std::size_t k = 1 + rng.Below(std::min<std::size_t>(shape.cols, 16));
    const auto q = random_quantized_layer(shape, k, rng.NextU64());
    const auto dense = dequantize_tensor(q);
    std::vector<float> x(shape.cols);
    for (auto& v : x) v = static_cast<float>(rng.Uniform(-1, 1));
    const auto y = compressed_matvec(q, x);
    bool ok = true;
    for (std::size_t r = 0; r < shape.rows; ++r) {
      double ref = 0, scale = 0;
      for (std::size_t c = 0; c < shape.cols; ++c) {
        ref += static_cast<double>(dense.data[r * shape.cols + c]) * x[c];
        scale += std::abs(static_cast<double>(dense.data[r * shape.cols + c]) * x[c]);
      }
      const double rel = std::abs(y[r] - ref) / std::max(scale, 1e-30);
      worst_mv = std::max(worst_mv, rel);
      ok = ok && rel <= 1e-5;
    }
    matvec_ok += ok;

    const std::size_t out_c = 1 + rng.Below(6), in_c = 1 + rng.Below(4), kh = 1 + rng.Below(3), kw = 1 + rng.Below(3);
    const std::size_t h = kh + rng.Below(8), w = kw + rng.Below(8);
    const ConvParams params{1 + rng.Below(2), rng.Below(2)};
    std::vector<float> weights(out_c * in_c * kh * kw);
    for (auto& v : weights) v = static_cast<float>(rng.Normal(0, 0.2));
    const auto kq = quantize_tensor(Tensor("k", {out_c, in_c, kh, kw}, weights), GroupingMode::kPerFilter, {4});
    const auto kd = dequantize_tensor(kq);
    FeatureMap in{in_c, h, w, std::vector<float>(in_c * h * w)};
    for (auto& v : in.data) v = static_cast<float>(rng.Uniform(-1, 1));
    std::size_t oh = 0, ow = 0;
    const auto ref = oracle::Conv(kd.data, out_c, in_c, kh, kw, in.data, h, w, params.stride, params.padding, oh, ow);
    const auto out = conv_as_matmul(kq, in, params);
    bool cok = out.height == oh && out.width == ow;
    for (std::size_t j = 0; cok && j < ref.size(); ++j) {
      const double rel = std::abs(out.data[j] - ref[j]) / std::max(std::abs(ref[j]), 1e-3);
      worst_conv = std::max(worst_conv, rel);
      cok = rel <= 1e-4;
    }
    conv_ok += cok;
  }

  BenchOptions opts;
  opts.k = 16;
  opts.repetitions = 3;
  const auto fc = bench(LayerShape{1000, 1024}, opts);
  const auto conv = bench(LayerShape{384, 1728}, opts);
  OpCounter per_row;
  const auto one = random_quantized_layer({1, 1024}, 16, 9);
  std::vector<float> x(1024, 1.0f);
  compressed_matvec(one, x, &per_row);
  const bool ops_ok = fc.ops.multiplications == 1000u * 16 && conv.ops.multiplications == 384u * 16 &&
                      fc.ops.reduction_factor == 64.0 && conv.ops.reduction_factor == 108.0 &&
                      per_row.multiplications == 16;
  return {matvec_ok == 100 && conv_ok == 100 && ops_ok,
          Printf("matvec %d/100 (max rel %.1e), conv %d/100 (max rel %.1e), reduction %.0f and %.0f, "
                 "wall-clock dense/compressed %.3f/%.3f ms and %.3f/%.3f ms (informational)",
                 matvec_ok, worst_mv, conv_ok, worst_conv, fc.ops.reduction_factor, conv.ops.reduction_factor,
                 fc.dense_ms, fc.compressed_ms, conv.dense_ms, conv.compressed_ms)};
}

Outcome FormatRoundTrips() {
  Rng rng(404);
  const int cases = 10000;
  int model_ok = 0, pack_ok = 0, huff_ok = 0, eq1_ok = 0;
  for (int i = 0; i < cases; ++i) {
    // pack / unpack
    const unsigned bits = 1 + static_cast<unsigned>(rng.Below(8));
    std::vector<std::uint32_t> idx(rng.Below(64));
    for (auto& v : idx) v = static_cast<std::uint32_t>(rng.Below(1u << bits));
    pack_ok += unpack_indices(pack_indices(idx, bits), bits, idx.size()) == idx;

    // Huffman on skewed alphabets
    std::vector<std::uint32_t> sym(1 + rng.Below(200));
    const std::uint64_t alphabet = 1 + rng.Below(32);
    for (auto& v : sym) v = static_cast<std::uint32_t>(std::min(rng.Below(alphabet), rng.Below(alphabet)));
    huff_ok += deserialize_huffman_payload(serialize_huffman_payload(huffman_encode(sym)), sym.size()) == sym;

    // whole container
    const std::size_t rows = 1 + rng.Below(5), cols = 1 + rng.Below(12);
    std::vector<float> data(rows * cols);
    for (auto& v : data) v = static_cast<float>(rng.Normal());
    const Tensor t("w" + std::to_string(i), {rows, cols}, data);
    const std::size_t k = 1 + rng.Below(cols);
    const auto mode = rng.Below(2) ? GroupingMode::kPerRow : GroupingMode::kWholeTensor;
    const auto q = quantize_tensor(t, mode, {k});
    CompressedModel m;
    m.tensors.push_back(make_record(q, rng.Below(2) ? Coding::kHuffman : Coding::kFixedWidth,
                                    rng.Below(3) == 0 ? std::optional(prune_columns(t, 0.5).mask) : std::nullopt));
    if (rng.Below(2)) m.tensors.push_back(make_raw_record(Tensor("b", {cols}, std::vector<float>(cols, 0.5f))));
    const auto bytes = serialize_model(m);
    model_ok += deserialize_model(bytes) == m && serialize_model(deserialize_model(bytes)) == bytes;

    // Fixed-width payload equals Eq. 1's index term; codebooks its 32·m·K term.
    if (q.max_codebook_size() >= 2) {
      const auto fixed = make_record(q, Coding::kFixedWidth);
      const auto s = record_sizes(fixed);
      const std::uint64_t n = rows * cols;
      const std::uint64_t groups = q.scheme.group_count;
      const std::size_t kk = q.max_codebook_size();
      eq1_ok += 8 * s.payload_bytes == (n * index_bits(kk) + 7) / 8 * 8 && fixed_width_index_bits(q) == n * index_bits(kk) &&
                codebook_bits(q) == 32 * groups * kk && 8 * s.codebook_bytes == codebook_bits(q);
    } else {
      ++eq1_ok;
    }
  }
  // And on a shape where the index term fills whole bytes.
  const auto big = random_quantized_layer({1000, 1024}, 16, 1);
  const auto s = record_sizes(make_record(big, Coding::kFixedWidth));
  const bool exact = 8 * s.payload_bytes == 4ull * 1000 * 1024 && 8 * s.codebook_bytes == 32ull * 1000 * 16;
  return {model_ok == cases && pack_ok == cases && huff_ok == cases && eq1_ok == cases && exact,
          Printf("container %d, pack %d, huffman %d, eq1 size terms %d of %d; 1000x1024 4-bit payload %zu B, codebooks %zu B",
                 model_ok, pack_ok, huff_ok, eq1_ok, cases, s.payload_bytes, s.codebook_bytes)};
}

Outcome ClusteringFriendlyTraining() {
  int no_increase = 0, better = 0, identical = 0;
  std::string drops;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto split = make_synthetic_split(seed);
    TrainSpec spec;  // λ=100, K=8, t=5
    spec.seed = seed;
    const auto c = compare_quantization(spec, split.train, split.test);
    bool ok = !c.clustered.history.codebook_updates.empty();
    for (const auto& u : c.clustered.history.codebook_updates) ok = ok && u.error_after <= u.error_before;
    no_increase += ok;
    better += c.clustered_natural_drop() <= c.baseline_natural_drop();
    drops += Printf(" s%llu %.3f/%.3f", static_cast<unsigned long long>(seed), c.clustered_natural_drop(),
                    c.baseline_natural_drop());

    TrainSpec zero = spec;
    zero.lambda = 0.0;
    const auto alt = train_alternating(zero, split.train);
    identical += alt.model == c.baseline.model;
  }
  return {no_increase == 5 && better >= 4 && identical == 5,
          Printf("(a) no penalty increase %d/5, (b) cf drop <= plain drop %d/5 [cf/plain:%s], (c) lambda=0 identical %d/5",
                 no_increase, better, drops.c_str(), identical)};
}

Outcome RobustExtension() {
  int better = 0;
  std::string drops;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto split = make_synthetic_split(seed);
    TrainSpec spec;
    spec.seed = seed;
    spec.k = 4;  // 2-bit indices
    spec.robust = RobustSpec{};  // γ=1, ε=0.1, 10 PGD steps
    const auto c = compare_quantization(spec, split.train, split.test);
    better += c.clustered_adversarial_drop() <= c.baseline_adversarial_drop();
    drops += Printf(" s%llu %.3f/%.3f", static_cast<unsigned long long>(seed), c.clustered_adversarial_drop(),
                    c.baseline_adversarial_drop());
  }
  return {better >= 4, Printf("extended drop <= WR drop %d/5 [extended/WR adversarial drop:%s]", better, drops.c_str())};
}

Outcome GradientChecks() {
  double worst[3] = {0, 0, 0};
  int ok = 0;
  const int configs = 12;
  for (int i = 0; i < configs; ++i) {
    const auto seed = static_cast<std::uint64_t>(1000 + i);
    const double e[3] = {gradcheck::CrossEntropyError(seed), gradcheck::PenaltyError(seed),
                         gradcheck::RobustObjectiveError(seed)};
    bool all = true;
    for (int j = 0; j < 3; ++j) {
      worst[j] = std::max(worst[j], e[j]);
      all = all && e[j] < 1e-4;
    }
    ok += all;
  }
  return {ok == configs, Printf("%d/%d configs; max rel err CE %.1e, penalty %.1e, robust objective %.1e", ok, configs,
                                worst[0], worst[1], worst[2])};
}

}  // namespace

int main() {
  Report(1, "DP optimality vs brute force", 10, DpOptimality);
  Report(2, "DP dominates Lloyd", 30, DpDominatesLloyd);
  Report(3, "compression-ratio arithmetic", 1, CompressionArithmetic);
  Report(4, "inference equivalence and op count", 30, InferenceEquivalence);
  Report(5, "format round trips", 10, FormatRoundTrips);
  Report(6, "clustering-friendly training", 120, ClusteringFriendlyTraining);
  Report(7, "robust extension", 300, RobustExtension);
  Report(8, "gradient checks", 30, GradientChecks);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
