#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "featprior/autodiff.hpp"
#include "featprior/linalg.hpp"

namespace featprior {

enum class Activation : std::uint8_t { Relu = 0, Tanh = 1, Identity = 2 };

const char* activation_name(Activation a) noexcept;
Activation parse_activation(const std::string& name);

struct LayerSpec {
  std::size_t input_width = 0;
  std::size_t output_width = 0;
  Activation activation = Activation::Relu;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Hidden dense layers followed by a linear softmax-classifier head of width
// `classes`. Hidden layers are the ones priors attach to; the head has no
// activation and produces logits.
struct NetworkSpec {
  std::vector<LayerSpec> hidden;
  std::size_t input_width = 0;
  std::size_t classes = 0;

  static NetworkSpec dense(std::size_t input_width, std::span<const std::size_t> hidden_widths,
                           Activation activation, std::size_t classes);

  // Throws DimensionMismatch / InvalidArgument when widths do not chain.
  void validate() const;
  std::size_t hidden_count() const noexcept { return hidden.size(); }
  std::size_t last_hidden_width() const noexcept {
    return hidden.empty() ? input_width : hidden.back().output_width;
  }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct DenseLayer {
  Matrix weights;  // input_width × output_width, applied as X·W
  Matrix bias;     // 1 × output_width
  Activation activation = Activation::Identity;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Parameters are held in double but kept exactly representable as float:
// init_params and round_to_storage() truncate to f32, which is also what the
// FPNN file stores, so save/load is lossless.
class Model {
 public:
  Model() = default;
  Model(NetworkSpec spec, std::vector<DenseLayer> layers);

  const NetworkSpec& spec() const noexcept { return spec_; }
  // Hidden layers then the head.
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const DenseLayer& head() const { return layers_.back(); }

  std::size_t parameter_count() const noexcept;
  // Blocks in order W0, b0, W1, b1, ..., W_head, b_head.
  std::vector<Matrix*> parameter_blocks();
  std::vector<const Matrix*> parameter_blocks() const;

  void round_to_storage();

  friend bool operator==(const Model&, const Model&) = default;

 private:
  NetworkSpec spec_;
  std::vector<DenseLayer> layers_;
};

struct ForwardRecord {
  std::vector<Matrix> activations;  // one per hidden layer, batch × N_l
  Matrix logits;
};

// Tape handles produced by a recorded forward pass.
struct TapedForward {
  ForwardRecord record;
  std::vector<Var> activations;
  Var logits;
  std::vector<Var> parameters;  // same order as Model::parameter_blocks()
};

ForwardRecord forward(const Model& model, const Matrix& batch);
TapedForward forward(const Model& model, const Matrix& batch, Tape& tape);

// He-uniform for relu layers, Xavier-uniform otherwise (including the head);
// zero biases. Fully determined by the seed.
Model init_params(const NetworkSpec& spec, std::uint64_t seed);

// One gradient matrix per parameter block.
using Gradients = std::vector<Matrix>;

// Builds a scalar loss on the tape from the model's parameters. The builder
// must register the parameters in Model::parameter_blocks() order, which
// forward() does.
using LossBuilder = std::function<Var(Tape&, const Model&)>;

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate, otherwise a seeded sample of this many.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

// Max over checked coordinates of |analytic - fd| / (|analytic| + |fd| + 1e-12)
// using central differences.
double grad_check(const Model& model, const LossBuilder& loss, const GradCheckOptions& options = {});

// FPNN binary model format, little-endian.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(std::span<const std::uint8_t> bytes);

}  // namespace featprior
