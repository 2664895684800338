#pragma once

// Experiment driver behind the CLI: JSON config parsing and validation, and
// the train-teacher / extract-features / distill / evaluate / compare
// commands. Config schema: docs/config.md.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "featprior/data.hpp"
#include "featprior/distill.hpp"
#include "featprior/network.hpp"

namespace featprior::harness {

struct DatasetSource {
  enum class Kind { Idx, Csv, Rings, Blobs };
  Kind kind = Kind::Rings;
  std::filesystem::path images, labels, csv;
  std::string label_column = "label";
  std::size_t n_per_class = 0;
  std::size_t classes = 0;
  std::size_t dim = 2;
  double noise = 0.0;
  double separation = 1.0;
  std::uint64_t seed = 0;
};

struct ModelShape {
  std::vector<std::size_t> hidden;
  Activation activation = Activation::Relu;
};

struct ExpertEntry {
  std::filesystem::path model;
  std::filesystem::path cache;
  LayerGroupMapping mapping;
  double weight = 1.0;
};

struct ExperimentConfig {
  DatasetSource dataset;
  double test_fraction = 0.5;
  std::uint64_t split_seed = 0;
  ModelShape teacher;
  ModelShape student;
  TrainPlan plan;
  LayerGroupMapping mapping;
  std::vector<ExpertEntry> experts;
  // Classes the teacher is trained on (relabelled 0..k-1); empty means all.
  std::vector<std::size_t> teacher_classes;
  std::vector<std::size_t> feature_layers;
  std::optional<std::filesystem::path> teacher_model;
  std::optional<std::filesystem::path> feature_cache;
  std::optional<std::filesystem::path> model;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> ks{1, 2, 3};
};

// Relative paths resolve against `base_dir`. Unknown keys, wrong types and
// out-of-range values are ConfigError.
ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct CommandOptions {
  std::string command;
  std::filesystem::path config;
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed_override;
  unsigned jobs = 1;
  std::optional<std::filesystem::path> model;
  // Receives one human-readable line at a time.
  std::function<void(const std::string&)> log;
};

inline constexpr const char* kCommands[] = {"train-teacher", "extract-features", "distill", "evaluate", "compare"};

// Validates the whole config against the loaded dataset before any training,
// then runs the command. Throws featprior::Error.
void run_command(const CommandOptions& options);

// Loaded dataset plus its deterministic split.
struct PreparedData {
  Dataset dataset;
  Split split;
};
PreparedData prepare_data(const ExperimentConfig& config);
NetworkSpec teacher_spec(const ExperimentConfig& config, const Dataset& dataset);
NetworkSpec student_spec(const ExperimentConfig& config, const Dataset& dataset);
void validate(const ExperimentConfig& config, const std::string& command, const Dataset& dataset);

}  // namespace featprior::harness
