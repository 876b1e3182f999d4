#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tunet/keyvalue.hpp"
#include "tunet/nn.hpp"
#include "tunet/performer.hpp"
#include "tunet/tfilm.hpp"

namespace tunet::model {

using ad::Tensor;

struct LayerSpec {
  std::size_t channels;
  std::size_t kernel;
  bool operator==(const LayerSpec&) const = default;
};

// Where encoder skips join the decoder.
enum class SkipJunction { AfterTFiLM, BeforeTFiLM };

struct TUNetConfig {
  std::size_t input_length = 8192;
  std::vector<LayerSpec> encoder{{64, 66}, {128, 18}, {256, 8}};
  std::vector<LayerSpec> decoder{{128, 8}, {64, 18}, {1, 66}};
  std::size_t stride = 4;
  std::size_t tfilm_blocks = 64;
  performer::PerformerConfig performer{};
  double leaky_slope = nn::kDefaultLeakySlope;

  SkipJunction junction = SkipJunction::AfterTFiLM;
  bool skip_input = true;       // input -> final output
  bool skip_encoder = true;     // encoder TFiLM outputs -> mirrored decoder stage
  bool skip_bottleneck = true;  // around the Performer stack

  // Throws naming the offending layer.
  void validate() const;
  std::size_t bottleneck_length() const;
  // Sequence length seen by encoder layer i's output (i < encoder.size()).
  std::size_t encoder_length(std::size_t i) const;

  // Every channel count except the final mono output divided by `divisor`;
  // Performer widths follow the bottleneck.
  TUNetConfig scaled_width(std::size_t divisor) const;

  KeyValues to_key_values() const;
  // Returns false if `key` is not a model key.
  bool apply(const std::string& key, const std::string& value);
  static TUNetConfig from_key_values(const KeyValues& kv);

  bool operator==(const TUNetConfig& o) const;
};

struct ParameterGroup {
  std::string name;
  std::size_t count;
};

template <typename T>
struct ForwardTrace {
  Tensor<T> output;    // (1, L)
  Tensor<T> pre_skip;  // tanh output before the input skip, (1, L)
};

// Convolutional U-Net with TFiLM on the outer encoder/decoder stages and a
// Performer stack at the bottleneck.
template <typename T>
class TUNet {
 public:
  explicit TUNet(TUNetConfig config);

  void init(std::uint64_t seed);
  void redraw_features(std::uint64_t seed);
  // Sets every trainable parameter to zero (buffers untouched).
  void zero_parameters();

  // Accepts (L) or (1, L); returns (1, L).
  Tensor<T> forward(const Tensor<T>& x, performer::FavorDiagnostics* diagnostics = nullptr) const;
  ForwardTrace<T> forward_trace(const Tensor<T>& x, performer::FavorDiagnostics* diagnostics = nullptr) const;

  // Inference helper: runs without recording gradients.
  std::vector<double> infer(const std::vector<double>& x) const;

  nn::ParameterList<T> parameters() const;
  nn::ParameterList<T> buffers() const;
  std::size_t parameter_count() const { return nn::count_parameters(parameters()); }
  // One entry per encoder, TFiLM, Performer and decoder stage, in forward order.
  std::vector<ParameterGroup> parameter_breakdown() const;

  const TUNetConfig& config() const { return config_; }

  std::vector<nn::Conv1d<T>> encoder;
  std::vector<nn::TFiLM<T>> encoder_tfilm;
  performer::PerformerStack<T> bottleneck;
  std::vector<nn::ConvTranspose1d<T>> decoder;
  std::vector<nn::TFiLM<T>> decoder_tfilm;

 private:
  TUNetConfig config_;
};

// Closed-form parameter counts used to cross-check the constructed model.
std::size_t conv_parameter_count(std::size_t in, std::size_t out, std::size_t kernel);
std::size_t tfilm_parameter_count(std::size_t channels);
std::size_t performer_block_parameter_count(const performer::PerformerConfig& cfg);

}  // namespace tunet::model
