#include "scnet/model.hpp"

#include <cmath>

#include "scnet/error.hpp"
#include "scnet/rng.hpp"

namespace scnet::model {

void ModelConfig::validate() const {
  if (in_channels == 0) throw ConfigError("model: in_channels must be positive");
  if (channels.empty()) throw ConfigError("model: need at least one level");
  for (std::size_t c : channels) {
    if (c == 0) throw ConfigError("model: level channel counts must be positive");
  }
  if (bottleneck == 0) throw ConfigError("model: bottleneck channels must be positive");
  if (kernel % 2 == 0) throw ConfigError("model: kernel size must be odd");
  if (ssr.enabled) {
    if (ssr.k == 0) throw ConfigError("ssr: k must be at least 1");
    if (ssr.level < 1 || ssr.level > levels()) {
      throw ConfigError("ssr: level " + std::to_string(ssr.level) + " outside 1.." + std::to_string(levels()));
    }
    if (ssr.enhancer_kernel % 2 == 0) throw ConfigError("ssr: enhancer kernel size must be odd");
    if (!(ssr.eps_relative >= 0.0) || !(ssr.eps_floor > 0.0)) {
      throw ConfigError("ssr: eps_relative must be >= 0 and eps_floor > 0");
    }
  }
  if (lipschitz.enabled && !(lipschitz.beta > 0.0)) throw ConfigError("lipschitz: beta must be positive");
  if (lipschitz.train_iters < 1 || lipschitz.verify_iters < 1) {
    throw ConfigError("lipschitz: iteration counts must be at least 1");
  }
}

Model::Pass Model::forward(Tape& tape, const Tensor& input, bool trainable) const {
  require_rank(input, 4, "model input");
  if (input.dim(1) != in_channels()) {
    throw ShapeError("model: expected " + std::to_string(in_channels()) + " input channels, got " +
                     shape_str(input.shape()));
  }
  const std::size_t m = spatial_multiple();
  if (input.dim(2) % m || input.dim(3) % m) {
    throw ShapeError("model: spatial size " + shape_str(input.shape()) + " must be a multiple of " + std::to_string(m));
  }
  Pass pass;
  pass.params.reserve(params_.size());
  for (const Parameter& p : params_) {
    pass.params.push_back(trainable ? tape.parameter(p.value) : tape.constant(p.value));
  }
  pass.output = build(tape, tape.constant(input), pass.params);
  return pass;
}

Tensor Model::predict(const Tensor& input) const {
  Tape tape;
  const Pass pass = forward(tape, input, false);
  return tape.value(pass.output);
}

std::vector<std::size_t> Model::conv_kernels() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].value.rank() == 4) out.push_back(i);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

std::size_t Model::add_parameter(std::string name, Tensor value) {
  params_.push_back({std::move(name), std::move(value)});
  return params_.size() - 1;
}

// ---------------------------------------------------------------------------

UNet::UNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const double relu_gain = std::sqrt(2.0), linear_gain = 1.0;
  const std::size_t K = cfg_.kernel;
  std::size_t prev = cfg_.in_channels;
  for (std::size_t l = 0; l < cfg_.levels(); ++l) {
    const std::string p = "enc" + std::to_string(l + 1);
    const std::size_t c = cfg_.channels[l];
    const ConvSlot first = add_conv(p + ".conv1", prev, c, K, relu_gain);
    encoder_.emplace_back(first, add_conv(p + ".conv2", c, c, K, relu_gain));
    prev = c;
  }
  bottleneck_ = {add_conv("mid.conv1", prev, cfg_.bottleneck, K, relu_gain),
                 add_conv("mid.conv2", cfg_.bottleneck, cfg_.bottleneck, K, relu_gain)};
  decoder_.resize(cfg_.levels());
  prev = cfg_.bottleneck;
  for (std::size_t l = cfg_.levels(); l-- > 0;) {
    const std::string p = "dec" + std::to_string(l + 1);
    const std::size_t c = cfg_.channels[l];
    decoder_[l].first = add_conv(p + ".conv1", prev + c, c, K, relu_gain);
    decoder_[l].second = add_conv(p + ".conv2", c, c, K, relu_gain);
    prev = c;
  }
  if (cfg_.ssr.enabled) {
    const std::size_t c = cfg_.channels[cfg_.ssr.level - 1];
    const std::size_t ek = cfg_.ssr.enhancer_kernel;
    ssr_up_low_ = add_conv("ssr.up_low", c, c, ek, linear_gain);
    ssr_up_high_ = add_conv("ssr.up_high", c, c, ek, linear_gain);
    ssr_down_low_ = add_conv("ssr.down_low", c, c, ek, linear_gain);
    ssr_down_high_ = add_conv("ssr.down_high", c, c, ek, linear_gain);
    ssr_generator_ = add_conv("ssr.generator", 4 * c, cfg_.ssr.k, ek, linear_gain);
  }
  out_ = add_conv("out", cfg_.channels[0], cfg_.in_channels, 1, linear_gain);
}

ConvSlot UNet::add_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, double gain) {
  // He-style normal init: std = gain / sqrt(fan_in), biases zero.
  Tensor w({out, in, kernel, kernel});
  const double std_dev = gain / std::sqrt(static_cast<double>(in * kernel * kernel));
  CounterRng rng(derive_seed(cfg_.init_seed, init_counter_++));
  for (double& x : w.storage()) x = std_dev * rng.normal();
  ConvSlot s;
  s.weight = add_parameter(name + ".weight", std::move(w));
  s.bias = add_parameter(name + ".bias", Tensor({out}));
  return s;
}

Var UNet::build(Tape& tape, Var input, const std::vector<Var>& params) const {
  const auto conv = [&](Var x, ConvSlot s) {
    const std::size_t k = params_[s.weight].value.dim(2);
    return ops::conv2d(tape, x, params[s.weight], params[s.bias], (k - 1) / 2);
  };
  const auto conv_pair = [&](Var x, const std::pair<ConvSlot, ConvSlot>& p) {
    return ops::relu(tape, conv(ops::relu(tape, conv(x, p.first)), p.second));
  };
  const auto slot = [&](ConvSlot s) { return ssr::ConvParams{params[s.weight], params[s.bias]}; };

  std::vector<Var> skips;
  Var x = input;
  for (std::size_t l = 0; l < cfg_.levels(); ++l) {
    x = conv_pair(x, encoder_[l]);
    skips.push_back(x);
    x = ops::avgpool2(tape, x);
  }
  x = conv_pair(x, bottleneck_);
  for (std::size_t l = cfg_.levels(); l-- > 0;) {
    x = ops::concat_channels(tape, ops::bilinear_up2(tape, x), skips[l]);
    x = conv_pair(x, decoder_[l]);
    if (cfg_.ssr.enabled && l + 1 == cfg_.ssr.level) {
      const ssr::SsrParams sp{{slot(ssr_up_low_), slot(ssr_up_high_), slot(ssr_down_low_), slot(ssr_down_high_)},
                              slot(ssr_generator_)};
      x = ssr::ssr_block(tape, skips[l], x, sp, cfg_.ssr);
    }
  }
  return conv(x, out_);
}

std::size_t unet_parameter_count(const ModelConfig& cfg) {
  const std::size_t K2 = cfg.kernel * cfg.kernel;
  const auto conv = [](std::size_t in, std::size_t out, std::size_t k2) { return out * in * k2 + out; };
  std::size_t n = 0, prev = cfg.in_channels;
  for (std::size_t c : cfg.channels) {
    n += conv(prev, c, K2) + conv(c, c, K2);
    prev = c;
  }
  n += conv(prev, cfg.bottleneck, K2) + conv(cfg.bottleneck, cfg.bottleneck, K2);
  prev = cfg.bottleneck;
  for (std::size_t l = cfg.channels.size(); l-- > 0;) {
    const std::size_t c = cfg.channels[l];
    n += conv(prev + c, c, K2) + conv(c, c, K2);
    prev = c;
  }
  if (cfg.ssr.enabled) {
    const std::size_t c = cfg.channels[cfg.ssr.level - 1];
    const std::size_t e2 = cfg.ssr.enhancer_kernel * cfg.ssr.enhancer_kernel;
    n += 4 * conv(c, c, e2) + conv(4 * c, cfg.ssr.k, e2);
  }
  n += conv(cfg.channels[0], cfg.in_channels, 1);
  return n;
}

// ---------------------------------------------------------------------------

PointwiseModel::PointwiseModel(std::size_t channels, double init_weight) : channels_(channels) {
  Tensor w({channels, channels, 1, 1});
  for (std::size_t c = 0; c < channels; ++c) w(c, c, 0, 0) = init_weight;
  add_parameter("pointwise.weight", std::move(w));
  add_parameter("pointwise.bias", Tensor({channels}));
}

Var PointwiseModel::build(Tape& tape, Var input, const std::vector<Var>& params) const {
  return ops::conv2d(tape, input, params[0], params[1], 0);
}

}  // namespace scnet::model
