#include "featprior/data.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "binio.hpp"
#include "featprior/error.hpp"

namespace featprior {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::uint32_t kCacheVersion = 1;

std::uint32_t read_be32(binio::Reader& r) {
  auto b = r.bytes(4);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& cell, std::size_t line_no) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw Error(ErrorCode::NonNumericCell, "line " + std::to_string(line_no) + ": '" + cell + "'");
  }
  return v;
}

}  // namespace

void Dataset::validate() const {
  if (labels.empty()) throw Error(ErrorCode::InvalidArgument, "dataset is empty");
  if (inputs.rows() != labels.size()) throw Error(ErrorCode::CountMismatch, "input rows and label count differ");
  for (std::size_t y : labels) {
    if (y >= class_count) {
      throw Error(ErrorCode::LabelOutOfRange,
                  "label " + std::to_string(y) + " with " + std::to_string(class_count) + " classes");
    }
  }
  if (!inputs.all_finite()) throw Error(ErrorCode::InvalidArgument, "non-finite inputs");
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m.rows()) throw Error(ErrorCode::InvalidArgument, "row index out of range");
    std::copy_n(m.row(indices[i]).begin(), m.cols(), out.row(i).begin());
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.inputs = gather_rows(inputs, indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  out.class_count = class_count;
  out.name = name;
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto image_bytes = binio::read_file(images);
  const auto label_bytes = binio::read_file(labels);

  binio::Reader ir(image_bytes, ErrorCode::TruncatedFile);
  if (read_be32(ir) != kIdxImagesMagic) throw Error(ErrorCode::BadMagic, images.string() + " is not an IDX image file");
  const std::size_t count = read_be32(ir);
  const std::size_t rows = read_be32(ir);
  const std::size_t cols = read_be32(ir);

  binio::Reader lr(label_bytes, ErrorCode::TruncatedFile);
  if (read_be32(lr) != kIdxLabelsMagic) throw Error(ErrorCode::BadMagic, labels.string() + " is not an IDX label file");
  const std::size_t label_count = read_be32(lr);
  if (label_count != count) {
    throw Error(ErrorCode::CountMismatch,
                std::to_string(count) + " images but " + std::to_string(label_count) + " labels");
  }

  const std::size_t pixels = rows * cols;
  auto raw = ir.bytes(count * pixels);
  auto raw_labels = lr.bytes(count);

  Dataset ds;
  ds.name = images.stem().string();
  ds.inputs = Matrix(count, pixels);
  for (std::size_t i = 0; i < raw.size(); ++i) ds.inputs.values()[i] = static_cast<double>(raw[i]) / 255.0;
  ds.labels.assign(raw_labels.begin(), raw_labels.end());
  ds.class_count = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.validate();
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::RaggedRows, path.string() + " has no header row");
  const auto header = split_csv_line(line);
  const auto it = std::find(header.begin(), header.end(), label_column);
  if (it == header.end()) throw Error(ErrorCode::UnknownLabelColumn, "no column named '" + label_column + "'");
  const std::size_t label_idx = static_cast<std::size_t>(it - header.begin());

  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::RaggedRows, "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                             " cells, header has " + std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const double v = parse_number(cells[c], line_no);
      if (c == label_idx) {
        if (v < 0.0 || v != std::floor(v)) {
          throw Error(ErrorCode::LabelOutOfRange, "line " + std::to_string(line_no) + ": label must be a class index");
        }
        labels.push_back(static_cast<std::size_t>(v));
      } else {
        values.push_back(v);
      }
    }
  }

  Dataset ds;
  ds.name = path.stem().string();
  ds.inputs = Matrix(labels.size(), header.size() - 1, std::move(values));
  ds.labels = std::move(labels);
  ds.class_count = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.validate();
  return ds;
}

Dataset synth_blobs(std::size_t n_per_class, std::size_t classes, std::size_t dim, double separation,
                    std::uint64_t seed) {
  if (!(separation > 0.0)) throw Error(ErrorCode::InvalidArgument, "separation must be > 0");
  if (n_per_class == 0 || classes == 0 || dim == 0) throw Error(ErrorCode::InvalidArgument, "empty blob dataset");

  Matrix centres(classes, dim);
  if (dim == 1 || classes == 1) {
    for (std::size_t k = 0; k < classes; ++k) centres(k, 0) = separation * static_cast<double>(k);
  } else {
    const double radius = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(classes)));
    for (std::size_t k = 0; k < classes; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
      centres(k, 0) = radius * std::cos(angle);
      centres(k, 1) = radius * std::sin(angle);
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset ds;
  ds.name = "blobs";
  ds.class_count = classes;
  ds.inputs = Matrix(n_per_class * classes, dim);
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      auto row = ds.inputs.row(k * n_per_class + i);
      for (std::size_t d = 0; d < dim; ++d) row[d] = centres(k, d) + noise(rng);
      ds.labels.push_back(k);
    }
  }
  return ds;
}

Dataset synth_rings(std::size_t n_per_class, std::size_t classes, double noise, std::uint64_t seed) {
  if (!(noise >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise must be >= 0");
  if (n_per_class == 0 || classes == 0) throw Error(ErrorCode::InvalidArgument, "empty ring dataset");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, 1.0);
  Dataset ds;
  ds.name = "rings";
  ds.class_count = classes;
  ds.inputs = Matrix(n_per_class * classes, 2);
  for (std::size_t k = 0; k < classes; ++k) {
    const double radius = static_cast<double>(k + 1);
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const double a = angle(rng);
      const double dx = jitter(rng);
      const double dy = jitter(rng);
      auto row = ds.inputs.row(k * n_per_class + i);
      row[0] = radius * std::cos(a) + noise * dx;
      row[1] = radius * std::sin(a) + noise * dy;
      ds.labels.push_back(k);
    }
  }
  return ds;
}

BatchSchedule make_batches(std::span<const std::size_t> indices, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 2) throw Error(ErrorCode::BatchTooSmall, "batch size must be >= 2");
  std::vector<std::size_t> order(indices.begin(), indices.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  BatchSchedule s;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    if (end - start == 1 && !s.batches.empty()) {
      s.batches.back().push_back(order[start]);
    } else {
      s.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return s;
}

SplitAndBatches split_and_batch(const Dataset& dataset, double test_fraction, std::size_t batch_size,
                                std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "test fraction must be in (0, 1)");
  }
  if (batch_size < 2) throw Error(ErrorCode::BatchTooSmall, "batch size must be >= 2");
  const std::size_t n = dataset.size();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  if (n_test == 0 || n_test >= n) {
    throw Error(ErrorCode::InvalidArgument, "split leaves an empty side for " + std::to_string(n) + " examples");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SplitAndBatches out;
  out.split.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(out.split.test.begin(), out.split.test.end());
  std::sort(out.split.train.begin(), out.split.train.end());
  out.schedule = make_batches(out.split.train, batch_size, rng());
  return out;
}

Fingerprint sha256(std::span<const std::uint8_t> bytes) {
  Fingerprint out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw Error(ErrorCode::IoError, "sha256 failed");
  }
  return out;
}

Fingerprint dataset_fingerprint(const Dataset& dataset) {
  binio::Writer w;
  w.pod<std::uint64_t>(dataset.inputs.rows());
  w.pod<std::uint64_t>(dataset.inputs.cols());
  for (double v : dataset.inputs.values()) w.pod<double>(v);
  for (std::size_t y : dataset.labels) w.pod<std::uint64_t>(y);
  w.pod<std::uint64_t>(dataset.class_count);
  return sha256(w.buffer());
}

std::string to_hex(const Fingerprint& fp) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  for (std::uint8_t b : fp) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xF]);
  }
  return s;
}

const FeatureGroup& FeatureCache::group(std::uint32_t id) const {
  for (const auto& g : groups)
    if (g.id == id) return g;
  throw Error(ErrorCode::InvalidArgument, "feature cache has no group " + std::to_string(id));
}

bool FeatureCache::has_group(std::uint32_t id) const noexcept {
  return std::any_of(groups.begin(), groups.end(), [id](const FeatureGroup& g) { return g.id == id; });
}

std::vector<std::uint8_t> serialize_cache(const FeatureCache& cache) {
  if (cache.groups.empty()) throw Error(ErrorCode::InvalidArgument, "feature cache has no groups");
  const std::size_t n = cache.rows();
  binio::Writer w;
  w.tag("FPFC");
  w.pod<std::uint32_t>(kCacheVersion);
  w.bytes(cache.dataset_fingerprint);
  w.bytes(cache.teacher_fingerprint);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(cache.groups.size()));
  for (const auto& g : cache.groups) {
    if (g.values.rows() != n) throw Error(ErrorCode::DimensionMismatch, "feature groups have different row counts");
    w.pod<std::uint32_t>(g.id);
    w.pod<std::uint64_t>(g.values.rows());
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(g.values.cols()));
    for (double v : g.values.values()) w.pod<float>(static_cast<float>(v));
  }
  return std::move(w.buffer());
}

FeatureCache deserialize_cache(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes, ErrorCode::CorruptFile);
  auto magic = r.bytes(4);
  if (std::string(magic.begin(), magic.end()) != "FPFC") throw Error(ErrorCode::CorruptFile, "not an FPFC cache");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCacheVersion) {
    throw Error(ErrorCode::CorruptFile, "unsupported FPFC version " + std::to_string(version));
  }
  FeatureCache cache;
  auto dfp = r.bytes(32);
  std::copy(dfp.begin(), dfp.end(), cache.dataset_fingerprint.begin());
  auto tfp = r.bytes(32);
  std::copy(tfp.begin(), tfp.end(), cache.teacher_fingerprint.begin());
  const auto count = r.pod<std::uint32_t>();
  if (count == 0) throw Error(ErrorCode::CorruptFile, "cache has no groups");
  for (std::uint32_t i = 0; i < count; ++i) {
    FeatureGroup g;
    g.id = r.pod<std::uint32_t>();
    const auto n = r.pod<std::uint64_t>();
    const auto width = r.pod<std::uint32_t>();
    if (n == 0 || width == 0) throw Error(ErrorCode::CorruptFile, "empty feature group");
    if (i > 0 && n != cache.groups.front().values.rows()) {
      throw Error(ErrorCode::CorruptFile, "feature groups have different row counts");
    }
    if (n * width > (bytes.size() - r.position()) / sizeof(float)) {
      throw Error(ErrorCode::CorruptFile, "feature group larger than file");
    }
    g.values = Matrix(n, width);
    for (double& v : g.values.values()) v = r.pod<float>();
    cache.groups.push_back(std::move(g));
  }
  if (!r.at_end()) throw Error(ErrorCode::CorruptFile, "trailing bytes after cache");
  return cache;
}

void write_cache(const std::filesystem::path& path, const FeatureCache& cache) {
  binio::write_file_atomic(path, serialize_cache(cache));
}

FeatureCache read_cache(const std::filesystem::path& path, const std::optional<Fingerprint>& expected_dataset,
                        const std::optional<Fingerprint>& expected_teacher) {
  FeatureCache cache = deserialize_cache(binio::read_file(path));
  if (expected_dataset && *expected_dataset != cache.dataset_fingerprint) {
    throw Error(ErrorCode::FingerprintMismatch, path.string() + " was built from a different dataset");
  }
  if (expected_teacher && *expected_teacher != cache.teacher_fingerprint) {
    throw Error(ErrorCode::FingerprintMismatch, path.string() + " was built from a different teacher");
  }
  return cache;
}

}  // namespace featprior
