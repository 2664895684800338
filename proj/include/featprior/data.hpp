#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "featprior/linalg.hpp"

namespace featprior {

struct Dataset {
  Matrix inputs;  // n × d
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;
  std::string name;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dims() const noexcept { return inputs.cols(); }

  // Labels within [0, class_count), n ≥ 1, finite inputs.
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column);

// Unit-variance Gaussian clusters. Centres sit on a circle in the first two
// dimensions (a line when dim == 1) with neighbouring centres `separation`
// apart.
Dataset synth_blobs(std::size_t n_per_class, std::size_t classes, std::size_t dim, double separation,
                    std::uint64_t seed);

// Concentric rings in 2D: class k lies at radius k + 1 with uniform angle,
// plus isotropic Gaussian noise of standard deviation `noise`.
Dataset synth_rings(std::size_t n_per_class, std::size_t classes, double noise, std::uint64_t seed);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Batches hold original dataset indices so cached teacher rows stay aligned.
struct BatchSchedule {
  std::vector<std::vector<std::size_t>> batches;
};

// Shuffles `indices` with `seed` and cuts batches of `batch_size`; a trailing
// single example is folded into the previous batch. BatchTooSmall below 2.
BatchSchedule make_batches(std::span<const std::size_t> indices, std::size_t batch_size, std::uint64_t seed);

struct SplitAndBatches {
  Split split;
  BatchSchedule schedule;
};

SplitAndBatches split_and_batch(const Dataset& dataset, double test_fraction, std::size_t batch_size,
                                std::uint64_t seed);

using Fingerprint = std::array<std::uint8_t, 32>;

Fingerprint sha256(std::span<const std::uint8_t> bytes);
// Hash over shape, raw f64 input bytes, labels and class count.
Fingerprint dataset_fingerprint(const Dataset& dataset);
std::string to_hex(const Fingerprint& fp);

struct FeatureGroup {
  std::uint32_t id = 0;
  Matrix values;  // n × width, rows in dataset order

  friend bool operator==(const FeatureGroup&, const FeatureGroup&) = default;
};

struct FeatureCache {
  std::vector<FeatureGroup> groups;
  Fingerprint dataset_fingerprint{};
  Fingerprint teacher_fingerprint{};

  // Throws InvalidArgument when absent.
  const FeatureGroup& group(std::uint32_t id) const;
  bool has_group(std::uint32_t id) const noexcept;
  std::size_t rows() const noexcept { return groups.empty() ? 0 : groups.front().values.rows(); }

  friend bool operator==(const FeatureCache&, const FeatureCache&) = default;
};

// FPFC binary cache format. Values are stored as f32.
void write_cache(const std::filesystem::path& path, const FeatureCache& cache);
FeatureCache read_cache(const std::filesystem::path& path, const std::optional<Fingerprint>& expected_dataset = {},
                        const std::optional<Fingerprint>& expected_teacher = {});
std::vector<std::uint8_t> serialize_cache(const FeatureCache& cache);
FeatureCache deserialize_cache(std::span<const std::uint8_t> bytes);

}  // namespace featprior
