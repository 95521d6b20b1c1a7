#include "dpnet/model_format.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "dpnet/bitpack.hpp"
#include "dpnet/error.hpp"
#include "dpnet/random.hpp"
#include "dpnet/tensor_quant.hpp"

namespace dpnet {
namespace {

Tensor RandomTensor(const std::string& name, std::vector<std::size_t> shape, std::uint64_t seed) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  Rng rng(seed);
  std::vector<float> data(n);
  for (auto& v : data) v = static_cast<float>(rng.Normal(0.0, 0.1));
  return Tensor(name, std::move(shape), std::move(data));
}

CompressedModel ExampleModel() {
  CompressedModel m;
  const Tensor t("fc", {2, 4}, {1, 2, 3, 4, 10, 20, 30, 40});
  m.tensors.push_back(make_record(quantize_tensor(t, GroupingMode::kPerRow, {2}), Coding::kFixedWidth));
  return m;
}

std::filesystem::path TempDir() {
  auto dir = std::filesystem::temp_directory_path() / ("dpnet_fmt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                                      ::testing::UnitTest::GetInstance()->current_test_info()->name());
  std::filesystem::create_directories(dir);
  return dir;
}

TEST(Serialize, ExampleRoundTrip) {
  const auto m = ExampleModel();
  EXPECT_EQ(deserialize_model(serialize_model(m)), m);
}

TEST(Serialize, EmptyModelIsHeaderOnly) {
  const CompressedModel empty;
  const auto bytes = serialize_model(empty);
  EXPECT_EQ(bytes, (std::vector<std::uint8_t>{'D', 'P', 'N', 'Q', 1, 0, 0, 0, 0, 0}));
  EXPECT_EQ(deserialize_model(bytes), empty);
}

TEST(Serialize, HeaderLayout) {
  const auto bytes = serialize_model(ExampleModel());
  // magic, version 1, count 1, name "fc"
  const std::vector<std::uint8_t> head{'D', 'P', 'N', 'Q', 1, 0, 1, 0, 0, 0, 2, 0, 'f', 'c', 2, 2, 0, 0, 0, 4, 0, 0, 0,
                                       0 /*per-row*/, 2, 0, 0, 0 /*m*/, 2, 0 /*K*/, 0 /*fixed*/};
  ASSERT_GE(bytes.size(), head.size());
  EXPECT_EQ(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + head.size()), head);
  // 2x2 float codebooks, then u64 payload length 1 and the packed indices 0,0,1,1,0,0,1,1.
  EXPECT_EQ(bytes.size(), head.size() + 16 + 8 + 1);
  EXPECT_EQ(bytes.back(), pack_indices(std::vector<std::uint32_t>{0, 0, 1, 1, 0, 0, 1, 1}, 1)[0]);
}

TEST(Serialize, SizeMatchesRecordSizes) {
  CompressedModel m;
  m.tensors.push_back(make_record(quantize_tensor(RandomTensor("a", {5, 17}, 1), GroupingMode::kPerRow, {4}), Coding::kHuffman));
  m.tensors.push_back(make_record(quantize_tensor(RandomTensor("b", {3, 2, 3, 3}, 2), GroupingMode::kPerFilter, {8}), Coding::kFixedWidth));
  m.tensors.push_back(make_raw_record(RandomTensor("b.bias", {3}, 3)));
  std::size_t expected = kFileHeaderBytes;
  for (const auto& r : m.tensors) expected += record_sizes(r).total();
  EXPECT_EQ(serialize_model(m).size(), expected);
}

TEST(Serialize, FixedWidthSizeMatchesEq1) {
  // 1000x1024 at 4 bits: payload is exactly the index term, codebooks the 32·m·K term.
  const auto q = quantize_tensor(RandomTensor("fc", {1000, 1024}, 4), GroupingMode::kPerRow, {16});
  ASSERT_EQ(q.max_codebook_size(), 16u);
  const auto record = make_record(q, Coding::kFixedWidth);
  const auto sizes = record_sizes(record);
  EXPECT_EQ(fixed_width_index_bits(q), 4ull * 1000 * 1024);
  EXPECT_EQ(codebook_bits(q), 32ull * 1000 * 16);
  EXPECT_EQ(8 * sizes.payload_bytes, fixed_width_index_bits(q));
  EXPECT_EQ(8 * sizes.codebook_bytes, codebook_bits(q));
  EXPECT_EQ(sizes.header_bytes, 19u + 2 + 8);
  CompressedModel m;
  m.tensors.push_back(record);
  EXPECT_EQ(serialize_model(m).size(), kFileHeaderBytes + sizes.header_bytes + (4ull * 1000 * 1024 + 32ull * 16000) / 8);
}

TEST(Serialize, RandomRoundTrips) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    CompressedModel m;
    const std::size_t count = rng.Below(4);
    for (std::size_t i = 0; i < count; ++i) {
      const std::string name = "t" + std::to_string(i);
      const auto kind = rng.Below(4);
      if (kind == 0) {
        m.tensors.push_back(make_raw_record(RandomTensor(name, {1 + rng.Below(9)}, rng.NextU64())));
        continue;
      }
      const bool conv = kind == 1;
      const auto t = conv ? RandomTensor(name, {1 + rng.Below(4), 1 + rng.Below(3), 3, 3}, rng.NextU64())
                          : RandomTensor(name, {1 + rng.Below(6), 1 + rng.Below(30)}, rng.NextU64());
      const auto mode = conv ? GroupingMode::kPerFilter : (kind == 2 ? GroupingMode::kPerRow : GroupingMode::kWholeTensor);
      const auto coding = rng.Below(2) ? Coding::kHuffman : Coding::kFixedWidth;
      std::optional<PruneMask> mask;
      Tensor src = t;
      if (rng.Below(2)) {
        auto p = prune_columns(t, 0.3);
        src = p.pruned;
        mask = p.mask;
      }
      m.tensors.push_back(make_record(quantize_tensor(src, mode, {1 + rng.Below(8)}), coding, mask));
    }
    const auto bytes = serialize_model(m);
    ASSERT_EQ(deserialize_model(bytes), m) << "trial " << trial;
    EXPECT_EQ(serialize_model(deserialize_model(bytes)), bytes);
  }
}

TEST(Deserialize, StructuredErrors) {
  auto bytes = serialize_model(ExampleModel());
  auto bad = bytes;
  bad[0] = 'X';
  try {
    deserialize_model(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::kBadMagic);
    EXPECT_EQ(e.offset(), 0u);
  }
  bad = bytes;
  bad[4] = 2;
  try {
    deserialize_model(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::kBadVersion);
  }
  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    const std::span<const std::uint8_t> prefix(bytes.data(), cut);
    try {
      deserialize_model(prefix);
      FAIL() << "prefix " << cut << " accepted";
    } catch (const FormatError& e) {
      EXPECT_LE(e.offset(), cut);
    }
  }
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(deserialize_model(bad), FormatError);
  bad = bytes;
  bad[23] = 7;  // mode byte
  try {
    deserialize_model(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::kInvalidField);
    EXPECT_EQ(e.offset(), 23u);
  }
}

TEST(Deserialize, NeverCrashesOnGarbage) {
  Rng rng(6);
  const auto good = serialize_model(ExampleModel());
  for (int trial = 0; trial < 2000; ++trial) {
    auto bytes = good;
    const auto flips = 1 + rng.Below(4);
    for (std::uint64_t f = 0; f < flips; ++f) bytes[rng.Below(bytes.size())] ^= static_cast<std::uint8_t>(1 + rng.Below(255));
    try {
      const auto m = deserialize_model(bytes);
      for (const auto& r : m.tensors) (void)decode_record(r);
    } catch (const FormatError&) {
    }
  }
}

TEST(Prune, Examples) {
  const Tensor t("w", {2, 2}, {1, 5, 1, 5});
  const auto p = prune_columns(t, 0.5);
  EXPECT_EQ(p.pruned.data, (std::vector<float>{0, 5, 0, 5}));
  EXPECT_EQ(p.mask.keep, (std::vector<bool>{false, true}));
  EXPECT_EQ(prune_columns(t, 0.0).pruned, t);
  const Tensor eq("e", {2, 2}, {3, 3, 3, 3});
  EXPECT_EQ(prune_columns(eq, 0.5).mask.keep, (std::vector<bool>{false, true}));
  EXPECT_THROW(prune_columns(t, 1.0), ContractError);
}

TEST(DenseModel, ManifestRoundTrip) {
  const auto dir = TempDir();
  DenseModel m;
  m.tensors.push_back(RandomTensor("conv.weight", {4, 3, 3, 3}, 1));
  m.tensors.push_back(RandomTensor("conv.bias", {4}, 2));
  m.tensors.push_back(RandomTensor("fc.weight", {10, 108}, 3));
  write_dense_model(m, dir / "m.json");
  EXPECT_TRUE(std::filesystem::exists(dir / "m.bin"));
  EXPECT_EQ(std::filesystem::file_size(dir / "m.bin"), 4u * (108 + 4 + 1080));
  EXPECT_EQ(read_dense_model(dir / "m.json"), m);
  std::filesystem::remove_all(dir);
}

TEST(DenseModel, MalformedManifest) {
  const auto dir = TempDir();
  {
    std::ofstream(dir / "bad.json") << "{ not json";
  }
  EXPECT_THROW(read_dense_model(dir / "bad.json"), FormatError);
  {
    std::ofstream(dir / "short.json")
        << R"({"format":"dpnet-dense","version":1,"blob":"short.bin","tensors":[{"name":"a","shape":[4],"dtype":"float32","offset":0,"count":4}]})";
    std::ofstream(dir / "short.bin") << "abc";
  }
  EXPECT_THROW(read_dense_model(dir / "short.json"), FormatError);
  EXPECT_THROW(read_dense_model(dir / "missing.json"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST(Record, DecodeMatchesDequantize) {
  const auto t = RandomTensor("w", {6, 20}, 7);
  const auto q = quantize_tensor(t, GroupingMode::kPerRow, {4});
  for (auto coding : {Coding::kFixedWidth, Coding::kHuffman}) {
    const auto r = make_record(q, coding);
    const auto back = deserialize_model(serialize_model(CompressedModel{kFormatVersion, {r}}));
    EXPECT_EQ(decode_record(back.tensors[0]), dequantize_tensor(q));
  }
  const auto raw = make_raw_record(t);
  EXPECT_EQ(decode_record(raw), t);
}

TEST(Record, CodingNames) {
  for (auto c : {Coding::kFixedWidth, Coding::kHuffman, Coding::kRaw}) EXPECT_EQ(parse_coding(to_string(c)), c);
  EXPECT_THROW(parse_coding("zip"), ContractError);
}

}  // namespace
}  // namespace dpnet
