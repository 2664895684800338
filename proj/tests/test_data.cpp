#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <numeric>
#include <set>
#include <unistd.h>

#include "featprior/data.hpp"
#include "featprior/error.hpp"
#include "oracles.hpp"

using namespace featprior;
namespace fs = std::filesystem;

namespace {

void expect_code(ErrorCode code, auto&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << error_code_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("featprior_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

FeatureCache sample_cache() {
  std::mt19937_64 rng(1);
  FeatureCache c;
  Matrix a = oracle::random_matrix(5, 4, rng), b = oracle::random_matrix(5, 8, rng);
  for (double& v : a.values()) v = static_cast<float>(v);
  for (double& v : b.values()) v = static_cast<float>(v);
  c.groups = {{0, a}, {2, b}};
  c.dataset_fingerprint.fill(0x11);
  c.teacher_fingerprint.fill(0x22);
  return c;
}

}  // namespace

TEST(LoadIdx, SingleWhiteImage) {
  TempDir dir;
  write_bytes(dir / "img", oracle::encode_idx_images(1, 2, 2, {255, 255, 255, 255}));
  write_bytes(dir / "lab", oracle::encode_idx_labels({3}));
  const Dataset ds = load_idx(dir / "img", dir / "lab");
  EXPECT_EQ(ds.inputs, Matrix(1, 4, 1.0));
  EXPECT_EQ(ds.labels, std::vector<std::size_t>{3});
  EXPECT_EQ(ds.class_count, 4u);
}

TEST(LoadIdx, HandBuiltPixelScaling) {
  TempDir dir;
  write_bytes(dir / "img", oracle::encode_idx_images(1, 2, 2, {0, 128, 255, 0}));
  write_bytes(dir / "lab", oracle::encode_idx_labels({0}));
  const Dataset ds = load_idx(dir / "img", dir / "lab");
  EXPECT_EQ(ds.inputs(0, 0), 0.0);
  EXPECT_NEAR(ds.inputs(0, 1), 0.501961, 1e-6);
  EXPECT_EQ(ds.inputs(0, 2), 1.0);
  EXPECT_EQ(ds.inputs(0, 3), 0.0);
}

TEST(LoadIdx, AgreesWithReferenceDecoder) {
  TempDir dir;
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const std::uint32_t count = 1 + trial * 3, rows = 2 + trial, cols = 3;
    std::vector<unsigned char> pixels(count * rows * cols), labels(count);
    for (auto& p : pixels) p = static_cast<unsigned char>(rng());
    for (auto& l : labels) l = static_cast<unsigned char>(rng() % 10);
    const auto bytes = oracle::encode_idx_images(count, rows, cols, pixels);
    write_bytes(dir / "img", bytes);
    write_bytes(dir / "lab", oracle::encode_idx_labels(labels));
    const Dataset ds = load_idx(dir / "img", dir / "lab");
    const auto ref = oracle::decode_idx_images(bytes);
    ASSERT_EQ(ds.inputs.rows(), ref.count);
    ASSERT_EQ(ds.inputs.cols(), ref.rows * ref.cols);
    for (std::size_t i = 0; i < ref.pixels.size(); ++i) EXPECT_EQ(ds.inputs.values()[i], ref.pixels[i]);
    for (std::size_t i = 0; i < count; ++i) EXPECT_EQ(ds.labels[i], labels[i]);
  }
}

TEST(LoadIdx, Errors) {
  TempDir dir;
  write_bytes(dir / "img", oracle::encode_idx_images(2, 1, 1, {1, 2}));
  write_bytes(dir / "lab1", oracle::encode_idx_labels({0}));
  write_bytes(dir / "lab2", oracle::encode_idx_labels({0, 1}));
  expect_code(ErrorCode::CountMismatch, [&] { load_idx(dir / "img", dir / "lab1"); });
  expect_code(ErrorCode::BadMagic, [&] { load_idx(dir / "lab2", dir / "lab2"); });
  expect_code(ErrorCode::BadMagic, [&] { load_idx(dir / "img", dir / "img"); });
  write_bytes(dir / "short", oracle::encode_idx_images(3, 2, 2, {1, 2, 3}));
  write_bytes(dir / "lab3", oracle::encode_idx_labels({0, 1, 0}));
  expect_code(ErrorCode::TruncatedFile, [&] { load_idx(dir / "short", dir / "lab3"); });
  write_bytes(dir / "tiny", {0, 0, 8});
  expect_code(ErrorCode::TruncatedFile, [&] { load_idx(dir / "tiny", dir / "lab2"); });
  try {
    load_idx(dir / "missing", dir / "lab2");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
}

TEST(LoadCsv, TwoRows) {
  TempDir dir;
  write_text(dir / "a.csv", "x,y,label\n0.5,1,0\n-2,3e2,1\n");
  const Dataset ds = load_csv(dir / "a.csv", "label");
  EXPECT_EQ(ds.inputs, (Matrix{{0.5, 1}, {-2, 300}}));
  EXPECT_EQ(ds.labels, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(ds.class_count, 2u);
}

TEST(LoadCsv, LabelColumnMidFile) {
  TempDir dir;
  write_text(dir / "a.csv", "a,cls,b,c\n1,2,3,4\n5,0,6,7\n");
  const Dataset ds = load_csv(dir / "a.csv", "cls");
  EXPECT_EQ(ds.inputs, (Matrix{{1, 3, 4}, {5, 6, 7}}));
  EXPECT_EQ(ds.labels, (std::vector<std::size_t>{2, 0}));
}

TEST(LoadCsv, Errors) {
  TempDir dir;
  write_text(dir / "ragged.csv", "a,label\n1,0\n2\n");
  expect_code(ErrorCode::RaggedRows, [&] { load_csv(dir / "ragged.csv", "label"); });
  write_text(dir / "text.csv", "a,label\nfoo,0\n");
  expect_code(ErrorCode::NonNumericCell, [&] { load_csv(dir / "text.csv", "label"); });
  write_text(dir / "ok.csv", "a,label\n1,0\n");
  expect_code(ErrorCode::UnknownLabelColumn, [&] { load_csv(dir / "ok.csv", "target"); });
  write_text(dir / "neg.csv", "a,label\n1,-1\n");
  expect_code(ErrorCode::LabelOutOfRange, [&] { load_csv(dir / "neg.csv", "label"); });
  write_text(dir / "frac.csv", "a,label\n1,0.5\n");
  expect_code(ErrorCode::LabelOutOfRange, [&] { load_csv(dir / "frac.csv", "label"); });
  expect_code(ErrorCode::IoError, [&] { load_csv(dir / "none.csv", "label"); });
}

TEST(SynthBlobs, SeparableAtLargeSeparation) {
  const Dataset ds = synth_blobs(200, 2, 2, 10.0, 3);
  EXPECT_EQ(ds.size(), 400u);
  EXPECT_GE(oracle::linear_probe_accuracy(ds.inputs, ds.labels, 2), 0.999);
}

TEST(SynthBlobs, NearChanceAtTinySeparation) {
  const Dataset ds = synth_blobs(500, 2, 2, 0.01, 3);
  EXPECT_LE(oracle::linear_probe_accuracy(ds.inputs, ds.labels, 2), 0.56);
}

TEST(SynthBlobs, DeterministicAndValidated) {
  const Dataset a = synth_blobs(10, 3, 4, 2.0, 9);
  EXPECT_EQ(a.inputs, synth_blobs(10, 3, 4, 2.0, 9).inputs);
  EXPECT_NE(a.inputs, synth_blobs(10, 3, 4, 2.0, 10).inputs);
  EXPECT_EQ(a.dims(), 4u);
  expect_code(ErrorCode::InvalidArgument, [] { synth_blobs(10, 2, 2, 0.0, 1); });
  EXPECT_EQ(synth_blobs(5, 2, 1, 3.0, 1).dims(), 1u);
}

TEST(SynthRings, NoiselessRadiusDeterminesClass) {
  const Dataset ds = synth_rings(50, 4, 0.0, 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double r = std::hypot(ds.inputs(i, 0), ds.inputs(i, 1));
    EXPECT_NEAR(r, static_cast<double>(ds.labels[i] + 1), 1e-12);
  }
}

TEST(SynthRings, LinearlyInseparable) {
  const Dataset ds = synth_rings(300, 3, 0.1, 2);
  EXPECT_LE(oracle::linear_probe_accuracy(ds.inputs, ds.labels, 3), 0.6);
}

TEST(SynthRings, Deterministic) {
  EXPECT_EQ(synth_rings(20, 3, 0.2, 5).inputs, synth_rings(20, 3, 0.2, 5).inputs);
  expect_code(ErrorCode::InvalidArgument, [] { synth_rings(10, 2, -0.1, 1); });
}

TEST(SplitAndBatch, HalfSplitOfTen) {
  const Dataset ds = synth_rings(5, 2, 0.1, 1);
  const auto sb = split_and_batch(ds, 0.5, 2, 3);
  EXPECT_EQ(sb.split.train.size(), 5u);
  EXPECT_EQ(sb.split.test.size(), 5u);
}

TEST(SplitAndBatch, PartitionProperties) {
  const Dataset ds = synth_rings(37, 3, 0.1, 1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto sb = split_and_batch(ds, 0.3, 7, seed);
    std::set<std::size_t> train(sb.split.train.begin(), sb.split.train.end());
    std::set<std::size_t> test(sb.split.test.begin(), sb.split.test.end());
    EXPECT_EQ(train.size() + test.size(), ds.size());
    for (std::size_t i : test) EXPECT_FALSE(train.count(i));
    std::multiset<std::size_t> batched;
    for (const auto& b : sb.schedule.batches) {
      EXPECT_GE(b.size(), 2u);
      batched.insert(b.begin(), b.end());
    }
    EXPECT_EQ(std::set<std::size_t>(batched.begin(), batched.end()), train);
    EXPECT_EQ(batched.size(), train.size());
  }
}

TEST(SplitAndBatch, DeterministicBySeed) {
  const Dataset ds = synth_rings(20, 2, 0.1, 1);
  const auto a = split_and_batch(ds, 0.25, 4, 8), b = split_and_batch(ds, 0.25, 4, 8);
  EXPECT_EQ(a.split.train, b.split.train);
  EXPECT_EQ(a.schedule.batches, b.schedule.batches);
  EXPECT_NE(a.split.train, split_and_batch(ds, 0.25, 4, 9).split.train);
}

TEST(SplitAndBatch, Errors) {
  const Dataset ds = synth_rings(5, 2, 0.1, 1);
  expect_code(ErrorCode::BatchTooSmall, [&] { split_and_batch(ds, 0.5, 1, 0); });
  expect_code(ErrorCode::InvalidArgument, [&] { split_and_batch(ds, 0.0, 2, 0); });
  expect_code(ErrorCode::InvalidArgument, [&] { split_and_batch(ds, 1.0, 2, 0); });
  const std::vector<std::size_t> idx{1, 2, 3};
  expect_code(ErrorCode::BatchTooSmall, [&] { make_batches(idx, 0, 0); });
}

TEST(MakeBatches, TrailingSingletonIsMerged) {
  std::vector<std::size_t> idx(7);
  std::iota(idx.begin(), idx.end(), 0);
  const auto s = make_batches(idx, 3, 1);
  ASSERT_EQ(s.batches.size(), 2u);
  EXPECT_EQ(s.batches[0].size(), 3u);
  EXPECT_EQ(s.batches[1].size(), 4u);
}

TEST(Fingerprint, Sha256KnownVector) {
  const std::string abc = "abc";
  const auto fp = sha256(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()));
  EXPECT_EQ(to_hex(fp), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Fingerprint, SensitiveToContent) {
  Dataset a = synth_rings(5, 2, 0.1, 1);
  const auto fp = dataset_fingerprint(a);
  EXPECT_EQ(fp, dataset_fingerprint(synth_rings(5, 2, 0.1, 1)));
  Dataset b = a;
  b.labels[0] = 1 - b.labels[0];
  EXPECT_NE(fp, dataset_fingerprint(b));
  Dataset c = a;
  c.inputs(0, 0) = std::nextafter(c.inputs(0, 0), 10.0);
  EXPECT_NE(fp, dataset_fingerprint(c));
}

TEST(FeatureCacheFile, RoundTripIsIdentity) {
  TempDir dir;
  const FeatureCache c = sample_cache();
  EXPECT_EQ(deserialize_cache(serialize_cache(c)), c);
  write_cache(dir / "c.fpfc", c);
  const FeatureCache back = read_cache(dir / "c.fpfc", c.dataset_fingerprint, c.teacher_fingerprint);
  EXPECT_EQ(back, c);
  ASSERT_EQ(back.groups.size(), 2u);
  EXPECT_EQ(back.group(0).values.cols(), 4u);
  EXPECT_EQ(back.group(2).values.cols(), 8u);
  EXPECT_EQ(back.rows(), 5u);
  EXPECT_FALSE(back.has_group(1));
  EXPECT_FALSE(fs::exists(dir / "c.fpfc.tmp"));
}

TEST(FeatureCacheFile, FingerprintMismatch) {
  TempDir dir;
  const FeatureCache c = sample_cache();
  write_cache(dir / "c.fpfc", c);
  Fingerprint other{};
  expect_code(ErrorCode::FingerprintMismatch, [&] { read_cache(dir / "c.fpfc", other, std::nullopt); });
  expect_code(ErrorCode::FingerprintMismatch, [&] { read_cache(dir / "c.fpfc", std::nullopt, other); });
  // Tamper with the stored dataset fingerprint on disk.
  auto bytes = serialize_cache(c);
  bytes[8] ^= 0xff;
  write_bytes(dir / "t.fpfc", {bytes.begin(), bytes.end()});
  expect_code(ErrorCode::FingerprintMismatch, [&] { read_cache(dir / "t.fpfc", c.dataset_fingerprint); });
}

TEST(FeatureCacheFile, CorruptInputs) {
  auto bytes = serialize_cache(sample_cache());
  auto bad = bytes;
  bad[0] = 'X';
  expect_code(ErrorCode::CorruptFile, [&] { deserialize_cache(bad); });
  auto cut = bytes;
  cut.resize(cut.size() - 1);
  expect_code(ErrorCode::CorruptFile, [&] { deserialize_cache(cut); });
  auto extra = bytes;
  extra.push_back(0);
  expect_code(ErrorCode::CorruptFile, [&] { deserialize_cache(extra); });
  expect_code(ErrorCode::CorruptFile, [&] { deserialize_cache(std::vector<std::uint8_t>(10, 0)); });
}

TEST(Dataset, SubsetAndValidation) {
  const Dataset ds = synth_rings(4, 2, 0.0, 1);
  const std::vector<std::size_t> idx{5, 0};
  const Dataset sub = ds.subset(idx);
  EXPECT_EQ(sub.size(), 2u);
  EXPECT_EQ(sub.labels[0], ds.labels[5]);
  EXPECT_EQ(sub.inputs(1, 1), ds.inputs(0, 1));
  Dataset bad = ds;
  bad.labels[0] = 7;
  expect_code(ErrorCode::LabelOutOfRange, [&] { bad.validate(); });
}
