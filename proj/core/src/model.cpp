#include "tunet/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace tunet::model {

namespace {
std::size_t ipow(std::size_t b, std::size_t e) {
  std::size_t r = 1;
  while (e--) r *= b;
  return r;
}

void check_layer(const char* side, std::size_t i, const LayerSpec& l, std::size_t stride) {
  const std::string name = std::string(side) + " layer " + std::to_string(i);
  if (l.channels == 0) throw std::invalid_argument("TUNetConfig: " + name + " has zero channels");
  if (l.kernel < stride || (l.kernel - stride) % 2 != 0) {
    throw std::invalid_argument("TUNetConfig: " + name + " kernel " + std::to_string(l.kernel) +
                                " must be >= stride " + std::to_string(stride) + " with an even difference");
  }
}
}  // namespace

void TUNetConfig::validate() const {
  if (encoder.empty() || encoder.size() != decoder.size()) {
    throw std::invalid_argument("TUNetConfig: encoder and decoder need the same, non-zero number of layers");
  }
  if (stride == 0) throw std::invalid_argument("TUNetConfig: stride must be positive");
  const std::size_t n = encoder.size();
  const std::size_t factor = ipow(stride, n);
  if (input_length == 0 || input_length % factor != 0) {
    throw std::invalid_argument("TUNetConfig: input_length " + std::to_string(input_length) +
                                " must be a positive multiple of " + std::to_string(factor));
  }
  for (std::size_t i = 0; i < n; ++i) check_layer("encoder", i, encoder[i], stride);
  for (std::size_t i = 0; i < n; ++i) check_layer("decoder", i, decoder[i], stride);
  if (decoder.back().channels != 1) throw std::invalid_argument("TUNetConfig: final decoder layer must have 1 channel");
  if (tfilm_blocks == 0) throw std::invalid_argument("TUNetConfig: tfilm_blocks must be positive");
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (encoder_length(i) % tfilm_blocks != 0) {
      throw std::invalid_argument("TUNetConfig: TFiLM after encoder layer " + std::to_string(i) + ": " +
                                  std::to_string(tfilm_blocks) + " blocks do not divide length " +
                                  std::to_string(encoder_length(i)));
    }
    const std::size_t mirror = n - 2 - i;
    if (skip_encoder && decoder[mirror].channels != encoder[i].channels) {
      throw std::invalid_argument("TUNetConfig: skip from encoder layer " + std::to_string(i) + " (" +
                                  std::to_string(encoder[i].channels) + " channels) to decoder layer " +
                                  std::to_string(mirror) + " (" + std::to_string(decoder[mirror].channels) +
                                  " channels)");
    }
  }
  if (performer.layers > 0) {
    performer.validate();
    if (performer.model_dim != encoder.back().channels) {
      throw std::invalid_argument("TUNetConfig: performer model_dim " + std::to_string(performer.model_dim) +
                                  " != bottleneck channels " + std::to_string(encoder.back().channels));
    }
  }
}

std::size_t TUNetConfig::encoder_length(std::size_t i) const { return input_length / ipow(stride, i + 1); }
std::size_t TUNetConfig::bottleneck_length() const { return encoder_length(encoder.size() - 1); }

TUNetConfig TUNetConfig::scaled_width(std::size_t divisor) const {
  if (divisor == 0) throw std::invalid_argument("TUNetConfig::scaled_width: divisor must be positive");
  TUNetConfig c = *this;
  auto shrink = [&](std::size_t ch) { return std::max<std::size_t>(1, ch / divisor); };
  for (auto& l : c.encoder) l.channels = shrink(l.channels);
  for (std::size_t i = 0; i + 1 < c.decoder.size(); ++i) c.decoder[i].channels = shrink(c.decoder[i].channels);
  c.performer.model_dim = c.encoder.back().channels;
  c.performer.head_dim = std::max<std::size_t>(1, c.performer.head_dim / divisor);
  while (c.performer.heads * c.performer.head_dim > c.performer.model_dim && c.performer.head_dim > 1) {
    --c.performer.head_dim;
  }
  return c;
}

KeyValues TUNetConfig::to_key_values() const {
  KeyValues kv;
  std::vector<std::size_t> ec, ek, dc, dk;
  for (const auto& l : encoder) ec.push_back(l.channels), ek.push_back(l.kernel);
  for (const auto& l : decoder) dc.push_back(l.channels), dk.push_back(l.kernel);
  kv.set("input_length", std::to_string(input_length));
  kv.set("encoder_channels", format_size_list(ec));
  kv.set("encoder_kernels", format_size_list(ek));
  kv.set("decoder_channels", format_size_list(dc));
  kv.set("decoder_kernels", format_size_list(dk));
  kv.set("stride", std::to_string(stride));
  kv.set("tfilm_blocks", std::to_string(tfilm_blocks));
  kv.set("performer_layers", std::to_string(performer.layers));
  kv.set("performer_heads", std::to_string(performer.heads));
  kv.set("performer_head_dim", std::to_string(performer.head_dim));
  kv.set("performer_ff_mult", std::to_string(performer.ff_mult));
  kv.set("performer_local_heads", std::to_string(performer.local_heads));
  kv.set("performer_random_features", std::to_string(performer.random_features));
  kv.set("performer_local_window", std::to_string(performer.local_window));
  kv.set("leaky_slope", format_double(leaky_slope));
  kv.set("skip_junction", junction == SkipJunction::AfterTFiLM ? "after" : "before");
  kv.set("skip_input", skip_input ? "true" : "false");
  kv.set("skip_encoder", skip_encoder ? "true" : "false");
  kv.set("skip_bottleneck", skip_bottleneck ? "true" : "false");
  return kv;
}

namespace {
std::vector<LayerSpec> with_channels(std::vector<LayerSpec> layers, const std::vector<std::size_t>& v) {
  if (layers.size() != v.size()) layers.resize(v.size(), LayerSpec{1, 1});
  for (std::size_t i = 0; i < v.size(); ++i) layers[i].channels = v[i];
  return layers;
}
std::vector<LayerSpec> with_kernels(std::vector<LayerSpec> layers, const std::vector<std::size_t>& v) {
  if (layers.size() != v.size()) layers.resize(v.size(), LayerSpec{1, 1});
  for (std::size_t i = 0; i < v.size(); ++i) layers[i].kernel = v[i];
  return layers;
}
}  // namespace

bool TUNetConfig::apply(const std::string& key, const std::string& value) {
  if (key == "input_length") input_length = parse_size(key, value);
  else if (key == "encoder_channels") encoder = with_channels(encoder, parse_size_list(key, value));
  else if (key == "encoder_kernels") encoder = with_kernels(encoder, parse_size_list(key, value));
  else if (key == "decoder_channels") decoder = with_channels(decoder, parse_size_list(key, value));
  else if (key == "decoder_kernels") decoder = with_kernels(decoder, parse_size_list(key, value));
  else if (key == "stride") stride = parse_size(key, value);
  else if (key == "tfilm_blocks") tfilm_blocks = parse_size(key, value);
  else if (key == "performer_layers") performer.layers = parse_size(key, value);
  else if (key == "performer_heads") performer.heads = parse_size(key, value);
  else if (key == "performer_head_dim") performer.head_dim = parse_size(key, value);
  else if (key == "performer_ff_mult") performer.ff_mult = parse_size(key, value);
  else if (key == "performer_local_heads") performer.local_heads = parse_size(key, value);
  else if (key == "performer_random_features") performer.random_features = parse_size(key, value);
  else if (key == "performer_local_window") performer.local_window = parse_size(key, value);
  else if (key == "leaky_slope") leaky_slope = parse_double(key, value);
  else if (key == "skip_junction") {
    if (value == "after") junction = SkipJunction::AfterTFiLM;
    else if (value == "before") junction = SkipJunction::BeforeTFiLM;
    else throw std::invalid_argument("config key 'skip_junction': expected 'after' or 'before', got '" + value + "'");
  } else if (key == "skip_input") skip_input = parse_bool(key, value);
  else if (key == "skip_encoder") skip_encoder = parse_bool(key, value);
  else if (key == "skip_bottleneck") skip_bottleneck = parse_bool(key, value);
  else return false;
  if (key == "encoder_channels") performer.model_dim = encoder.back().channels;
  return true;
}

TUNetConfig TUNetConfig::from_key_values(const KeyValues& kv) {
  TUNetConfig c;
  for (const auto& [k, v] : kv.entries) {
    if (!c.apply(k, v)) throw std::invalid_argument("unknown model config key '" + k + "'");
  }
  return c;
}

bool TUNetConfig::operator==(const TUNetConfig& o) const {
  return to_key_values().format() == o.to_key_values().format();
}

std::size_t conv_parameter_count(std::size_t in, std::size_t out, std::size_t kernel) { return in * out * kernel + out; }

std::size_t tfilm_parameter_count(std::size_t c) {
  // LSTM: two (., 4C) weight matrices and one bias; head: C -> 2C.
  return 8 * c * c + 4 * c + 2 * c * c + 2 * c;
}

std::size_t performer_block_parameter_count(const performer::PerformerConfig& cfg) {
  const std::size_t d = cfg.model_dim, inner = cfg.inner_dim(), ff = cfg.ff_mult * cfg.model_dim;
  return 2 * 2 * d + 3 * (d * inner + inner) + (inner * d + d) + (d * ff + ff) + (ff * d + d);
}

// ---------------------------------------------------------------------------

namespace {
const TUNetConfig& validated(const TUNetConfig& c) {
  c.validate();
  return c;
}
}  // namespace

template <typename T>
TUNet<T>::TUNet(TUNetConfig cfg) : bottleneck(validated(cfg).performer), config_(std::move(cfg)) {
  const auto& c = config_;
  const std::size_t n = c.encoder.size();
  std::size_t in = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = c.encoder[i];
    encoder.emplace_back(in, l.channels, l.kernel, c.stride, (l.kernel - c.stride) / 2);
    if (i + 1 < n) encoder_tfilm.emplace_back(l.channels, c.tfilm_blocks);
    in = l.channels;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const auto& l = c.decoder[j];
    decoder.emplace_back(in, l.channels, l.kernel, c.stride, (l.kernel - c.stride) / 2);
    if (j + 1 < n) decoder_tfilm.emplace_back(l.channels, c.tfilm_blocks);
    in = l.channels;
  }
}

template <typename T>
void TUNet<T>::init(std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x1417u});
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    encoder[i].init(rng);
    if (i < encoder_tfilm.size()) encoder_tfilm[i].init(rng);
  }
  bottleneck.init(rng);
  for (std::size_t j = 0; j < decoder.size(); ++j) {
    decoder[j].init(rng);
    if (j < decoder_tfilm.size()) decoder_tfilm[j].init(rng);
  }
}

template <typename T>
void TUNet<T>::redraw_features(std::uint64_t seed) {
  bottleneck.redraw_features(seed);
}

template <typename T>
void TUNet<T>::zero_parameters() {
  for (auto& p : parameters()) {
    auto d = p.tensor.mutable_data();
    std::fill(d.begin(), d.end(), T(0));
  }
}

template <typename T>
ForwardTrace<T> TUNet<T>::forward_trace(const Tensor<T>& input, performer::FavorDiagnostics* diagnostics) const {
  const auto& c = config_;
  const std::size_t len = c.input_length;
  const bool ok = (input.rank() == 1 && input.dim(0) == len) ||
                  (input.rank() == 2 && input.dim(0) == 1 && input.dim(1) == len);
  if (!ok) {
    throw std::invalid_argument("TUNet: expected input of length " + std::to_string(len) + ", got " +
                                ad::shape_str(input.shape()));
  }
  const auto x = input.rank() == 1 ? ad::reshape(input, {1, len}) : input;
  const std::size_t n = encoder.size();

  std::vector<Tensor<T>> skips;
  Tensor<T> h = x;
  for (std::size_t i = 0; i < n; ++i) {
    h = nn::leaky_relu(encoder[i].forward(h), c.leaky_slope);
    if (i + 1 < n) {
      h = encoder_tfilm[i].forward(h);
      skips.push_back(h);
    }
  }
  if (!bottleneck.blocks.empty()) {
    auto p = ad::transpose(bottleneck.forward(ad::transpose(h), diagnostics));
    h = c.skip_bottleneck ? ad::add(p, h) : p;
  } else if (c.skip_bottleneck) {
    h = ad::add(h, h);
  }
  for (std::size_t j = 0; j < n; ++j) {
    h = decoder[j].forward(h);
    if (j + 1 == n) {
      h = nn::tanh(h);
      break;
    }
    h = nn::leaky_relu(h, c.leaky_slope);
    const auto& s = skips[n - 2 - j];
    if (c.junction == SkipJunction::BeforeTFiLM) {
      if (c.skip_encoder) h = ad::add(h, s);
      h = decoder_tfilm[j].forward(h);
    } else {
      h = decoder_tfilm[j].forward(h);
      if (c.skip_encoder) h = ad::add(h, s);
    }
  }
  ForwardTrace<T> out;
  out.pre_skip = h;
  out.output = c.skip_input ? ad::add(h, x) : h;
  return out;
}

template <typename T>
Tensor<T> TUNet<T>::forward(const Tensor<T>& x, performer::FavorDiagnostics* diagnostics) const {
  return forward_trace(x, diagnostics).output;
}

template <typename T>
std::vector<double> TUNet<T>::infer(const std::vector<double>& x) const {
  ad::NoGradScope<T> no_grad;
  Tensor<T> in({1, x.size()}, std::vector<T>(x.begin(), x.end()));
  const auto out = forward(in);
  const auto y = out.data();
  return std::vector<double>(y.begin(), y.end());
}

template <typename T>
nn::ParameterList<T> TUNet<T>::parameters() const {
  nn::ParameterList<T> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const std::string p = "encoder" + std::to_string(i);
    encoder[i].collect(p, out);
    if (i < encoder_tfilm.size()) encoder_tfilm[i].collect(p + ".tfilm", out);
  }
  bottleneck.collect("performer", out);
  for (std::size_t j = 0; j < decoder.size(); ++j) {
    const std::string p = "decoder" + std::to_string(j);
    decoder[j].collect(p, out);
    if (j < decoder_tfilm.size()) decoder_tfilm[j].collect(p + ".tfilm", out);
  }
  return out;
}

template <typename T>
nn::ParameterList<T> TUNet<T>::buffers() const {
  nn::ParameterList<T> out;
  bottleneck.collect_buffers("performer", out);
  return out;
}

template <typename T>
std::vector<ParameterGroup> TUNet<T>::parameter_breakdown() const {
  std::vector<ParameterGroup> out;
  auto add = [&](std::string name, auto collect) {
    nn::ParameterList<T> list;
    collect(list);
    out.push_back({std::move(name), nn::count_parameters(list)});
  };
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const std::string p = "encoder" + std::to_string(i);
    add(p, [&](auto& l) { encoder[i].collect(p, l); });
    if (i < encoder_tfilm.size()) add(p + ".tfilm", [&](auto& l) { encoder_tfilm[i].collect(p, l); });
  }
  for (std::size_t b = 0; b < bottleneck.blocks.size(); ++b) {
    const std::string p = "performer.layer" + std::to_string(b);
    add(p, [&](auto& l) { bottleneck.blocks[b].collect(p, l); });
  }
  for (std::size_t j = 0; j < decoder.size(); ++j) {
    const std::string p = "decoder" + std::to_string(j);
    add(p, [&](auto& l) { decoder[j].collect(p, l); });
    if (j < decoder_tfilm.size()) add(p + ".tfilm", [&](auto& l) { decoder_tfilm[j].collect(p, l); });
  }
  return out;
}

template class TUNet<float>;
template class TUNet<double>;

}  // namespace tunet::model
