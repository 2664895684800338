#include "featprior/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "binio.hpp"
#include "featprior/error.hpp"

namespace featprior {

namespace {

constexpr std::uint32_t kModelVersion = 1;

void apply_activation(Matrix& m, Activation a) {
  switch (a) {
    case Activation::Relu:
      for (double& v : m.values()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::Tanh:
      for (double& v : m.values()) v = std::tanh(v);
      break;
    case Activation::Identity:
      break;
  }
}

Matrix affine(const Matrix& x, const DenseLayer& layer) {
  Matrix out = matmul(x, layer.weights);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] += layer.bias(0, c);
  }
  return out;
}

void require_finite(const Matrix& m, std::size_t layer) {
  if (!m.all_finite()) {
    throw Error(ErrorCode::NonFiniteActivation, "layer " + std::to_string(layer) + " produced non-finite values");
  }
}

double to_storage(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

const char* activation_name(Activation a) noexcept {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "unknown";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + name + "'");
}

NetworkSpec NetworkSpec::dense(std::size_t input_width, std::span<const std::size_t> hidden_widths,
                               Activation activation, std::size_t classes) {
  NetworkSpec spec;
  spec.input_width = input_width;
  spec.classes = classes;
  std::size_t prev = input_width;
  for (std::size_t w : hidden_widths) {
    spec.hidden.push_back({prev, w, activation});
    prev = w;
  }
  spec.validate();
  return spec;
}

void NetworkSpec::validate() const {
  if (input_width == 0) throw Error(ErrorCode::InvalidArgument, "input width must be >= 1");
  if (classes == 0) throw Error(ErrorCode::InvalidArgument, "output head width must be >= 1");
  std::size_t prev = input_width;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const auto& l = hidden[i];
    if (l.input_width == 0 || l.output_width == 0) {
      throw Error(ErrorCode::InvalidArgument, "layer " + std::to_string(i) + " has zero width");
    }
    if (l.input_width != prev) {
      throw Error(ErrorCode::DimensionMismatch, "layer " + std::to_string(i) + " expects input width " +
                                                    std::to_string(l.input_width) + " but receives " +
                                                    std::to_string(prev));
    }
    prev = l.output_width;
  }
}

Model::Model(NetworkSpec spec, std::vector<DenseLayer> layers) : spec_(std::move(spec)), layers_(std::move(layers)) {
  spec_.validate();
  if (layers_.size() != spec_.hidden.size() + 1) {
    throw Error(ErrorCode::DimensionMismatch, "model needs one layer per hidden spec entry plus the head");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const bool is_head = i == spec_.hidden.size();
    const std::size_t in = is_head ? spec_.last_hidden_width() : spec_.hidden[i].input_width;
    const std::size_t out = is_head ? spec_.classes : spec_.hidden[i].output_width;
    const auto& l = layers_[i];
    if (l.weights.rows() != in || l.weights.cols() != out || l.bias.rows() != 1 || l.bias.cols() != out) {
      throw Error(ErrorCode::DimensionMismatch, "parameter shapes of layer " + std::to_string(i));
    }
    if (!l.weights.all_finite() || !l.bias.all_finite()) {
      throw Error(ErrorCode::InvalidArgument, "non-finite parameters in layer " + std::to_string(i));
    }
  }
}

std::size_t Model::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<Matrix*> Model::parameter_blocks() {
  std::vector<Matrix*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Matrix*> Model::parameter_blocks() const {
  std::vector<const Matrix*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
  return out;
}

void Model::round_to_storage() {
  for (Matrix* block : parameter_blocks())
    for (double& v : block->values()) v = to_storage(v);
}

ForwardRecord forward(const Model& model, const Matrix& batch) {
  const auto& spec = model.spec();
  if (batch.cols() != spec.input_width) {
    throw Error(ErrorCode::DimensionMismatch, "batch width " + std::to_string(batch.cols()) +
                                                  " does not match input width " +
                                                  std::to_string(spec.input_width));
  }
  ForwardRecord rec;
  rec.activations.reserve(spec.hidden.size());
  const Matrix* x = &batch;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    Matrix h = affine(*x, model.layers()[i]);
    // Checked before the activation: relu would turn NaN into 0.
    require_finite(h, i);
    apply_activation(h, spec.hidden[i].activation);
    rec.activations.push_back(std::move(h));
    x = &rec.activations.back();
  }
  rec.logits = affine(*x, model.head());
  require_finite(rec.logits, spec.hidden.size());
  return rec;
}

TapedForward forward(const Model& model, const Matrix& batch, Tape& tape) {
  const auto& spec = model.spec();
  if (batch.cols() != spec.input_width) {
    throw Error(ErrorCode::DimensionMismatch, "batch width " + std::to_string(batch.cols()) +
                                                  " does not match input width " +
                                                  std::to_string(spec.input_width));
  }
  TapedForward out;
  Var x = tape.constant(batch);
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const auto& layer = model.layers()[i];
    Var w = tape.parameter(layer.weights);
    Var b = tape.parameter(layer.bias);
    out.parameters.push_back(w);
    out.parameters.push_back(b);
    Var h = ops::add_row_bias(tape, ops::matmul(tape, x, w), b);
    require_finite(tape.value(h), i);
    const bool is_head = i == spec.hidden.size();
    if (!is_head) {
      switch (spec.hidden[i].activation) {
        case Activation::Relu: h = ops::relu(tape, h); break;
        case Activation::Tanh: h = ops::tanh(tape, h); break;
        case Activation::Identity: break;
      }
    }
    if (is_head) {
      out.logits = h;
      out.record.logits = tape.value(h);
    } else {
      out.activations.push_back(h);
      out.record.activations.push_back(tape.value(h));
    }
    x = h;
  }
  return out;
}

Model init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  auto make = [&](std::size_t in, std::size_t out, Activation act) {
    const double limit = act == Activation::Relu ? std::sqrt(6.0 / static_cast<double>(in))
                                                 : std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer l{Matrix(in, out), Matrix(1, out), act};
    for (double& v : l.weights.values()) v = to_storage(dist(rng));
    layers.push_back(std::move(l));
  };
  for (const auto& l : spec.hidden) make(l.input_width, l.output_width, l.activation);
  make(spec.last_hidden_width(), spec.classes, Activation::Identity);
  return Model(spec, std::move(layers));
}

double grad_check(const Model& model, const LossBuilder& loss, const GradCheckOptions& options) {
  Tape tape;
  Var l = loss(tape, model);
  tape.backward(l);
  const Gradients analytic = tape.parameter_grads();
  const auto blocks = model.parameter_blocks();
  if (analytic.size() != blocks.size()) {
    throw Error(ErrorCode::InvalidArgument, "loss builder registered " + std::to_string(analytic.size()) +
                                                " parameters, model has " + std::to_string(blocks.size()));
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (std::size_t i = 0; i < blocks[b]->size(); ++i) coords.emplace_back(b, i);
  if (options.max_coordinates != 0 && coords.size() > options.max_coordinates) {
    std::vector<std::pair<std::size_t, std::size_t>> picked;
    std::mt19937_64 rng(options.seed);
    std::sample(coords.begin(), coords.end(), std::back_inserter(picked), options.max_coordinates, rng);
    coords = std::move(picked);
  }

  auto evaluate = [&](const Model& m) {
    Tape t;
    return t.value(loss(t, m))(0, 0);
  };

  double worst = 0.0;
  Model probe = model;
  for (auto [b, i] : coords) {
    double& p = probe.parameter_blocks()[b]->values()[i];
    const double saved = p;
    p = saved + options.step;
    const double up = evaluate(probe);
    p = saved - options.step;
    const double down = evaluate(probe);
    p = saved;
    const double fd = (up - down) / (2.0 * options.step);
    const double an = analytic[b].values()[i];
    worst = std::max(worst, std::abs(an - fd) / (std::abs(an) + std::abs(fd) + 1e-12));
  }
  return worst;
}

std::vector<std::uint8_t> serialize_model(const Model& model) {
  binio::Writer w;
  w.tag("FPNN");
  w.pod<std::uint32_t>(kModelVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(model.layers().size()));
  for (const auto& l : model.layers()) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(l.weights.rows()));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(l.weights.cols()));
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(l.activation));
    for (double v : l.weights.values()) w.pod<float>(static_cast<float>(v));
    for (double v : l.bias.values()) w.pod<float>(static_cast<float>(v));
  }
  return std::move(w.buffer());
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes, ErrorCode::TruncatedFile);
  auto magic = r.bytes(4);
  if (std::string(magic.begin(), magic.end()) != "FPNN") throw Error(ErrorCode::BadMagic, "not an FPNN model file");
  const auto version = r.pod<std::uint32_t>();
  if (version != kModelVersion) {
    throw Error(ErrorCode::CorruptFile, "unsupported FPNN version " + std::to_string(version));
  }
  const auto count = r.pod<std::uint32_t>();
  if (count == 0) throw Error(ErrorCode::CorruptFile, "model has no layers");

  NetworkSpec spec;
  std::vector<DenseLayer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto in = r.pod<std::uint32_t>();
    const auto out = r.pod<std::uint32_t>();
    const auto tag = r.pod<std::uint8_t>();
    if (tag > static_cast<std::uint8_t>(Activation::Identity)) {
      throw Error(ErrorCode::CorruptFile, "bad activation tag " + std::to_string(tag));
    }
    DenseLayer l{Matrix(in, out), Matrix(1, out), static_cast<Activation>(tag)};
    for (double& v : l.weights.values()) v = r.pod<float>();
    for (double& v : l.bias.values()) v = r.pod<float>();
    if (i == 0) spec.input_width = in;
    if (i + 1 < count) {
      spec.hidden.push_back({in, out, l.activation});
    } else {
      spec.classes = out;
    }
    layers.push_back(std::move(l));
  }
  if (!r.at_end()) throw Error(ErrorCode::CorruptFile, "trailing bytes after model");
  return Model(std::move(spec), std::move(layers));
}

void save_model(const Model& model, const std::filesystem::path& path) {
  binio::write_file_atomic(path, serialize_model(model));
}

Model load_model(const std::filesystem::path& path) { return deserialize_model(binio::read_file(path)); }

}  // namespace featprior
