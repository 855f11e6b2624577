#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "scnet/autodiff.hpp"
#include "scnet/ssr.hpp"

namespace scnet::model {

struct Parameter {
  std::string name;
  Tensor value;
};

struct LipschitzConfig {
  bool enabled = false;
  double beta = 1.0;
  int train_iters = 1;    // power iterations per training step (warm start)
  int verify_iters = 50;  // fresh-start iterations for verification
};

struct FsdConfig {
  bool enabled = false;
  double cutoff = 0.25;
};

struct ModelConfig {
  std::size_t in_channels = 1;
  std::vector<std::size_t> channels{16, 32};  // one entry per level
  std::size_t bottleneck = 64;
  std::size_t kernel = 3;
  std::uint64_t init_seed = 1;
  ssr::SsrConfig ssr;
  LipschitzConfig lipschitz;
  FsdConfig fsd;

  std::size_t levels() const { return channels.size(); }
  void validate() const;
};

/// A network is a list of named parameter tensors plus a forward graph over
/// them. Parameters are copied onto the tape for every pass.
class Model {
 public:
  virtual ~Model() = default;

  struct Pass {
    Var output;
    std::vector<Var> params;  // same order as parameters()
  };

  /// `trainable` registers parameters as gradient leaves; otherwise they are
  /// recorded as constants and no backward closures are kept.
  Pass forward(Tape& tape, const Tensor& input, bool trainable = true) const;
  /// Untaped inference on a B×C×H×W batch.
  Tensor predict(const Tensor& input) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  /// Indices of convolution kernels (rank-4 parameters).
  std::vector<std::size_t> conv_kernels() const;
  std::size_t parameter_count() const;

  virtual std::size_t in_channels() const = 0;
  /// Spatial extents must be multiples of this.
  virtual std::size_t spatial_multiple() const { return 1; }

 protected:
  virtual Var build(Tape& tape, Var input, const std::vector<Var>& params) const = 0;

  std::size_t add_parameter(std::string name, Tensor value);

  std::vector<Parameter> params_;
};

struct ConvSlot {
  std::size_t weight = 0;
  std::size_t bias = 0;
};

/// U-Net: per level two conv-ReLU layers then avgpool2; a two-layer
/// bottleneck; per decoder level bilinear_up2, skip concat and two conv-ReLU
/// layers; a 1×1 output conv. With SSR enabled, the decoder feature at the
/// configured level is rebuilt from the same-shape encoder feature.
class UNet : public Model {
 public:
  explicit UNet(const ModelConfig& cfg);

  std::size_t in_channels() const override { return cfg_.in_channels; }
  std::size_t spatial_multiple() const override { return std::size_t{1} << cfg_.levels(); }
  const ModelConfig& config() const { return cfg_; }
  ConvSlot output_conv() const { return out_; }

 protected:
  Var build(Tape& tape, Var input, const std::vector<Var>& params) const override;

 private:
  ConvSlot add_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, double gain);

  ModelConfig cfg_;
  std::vector<std::pair<ConvSlot, ConvSlot>> encoder_;
  std::pair<ConvSlot, ConvSlot> bottleneck_;
  std::vector<std::pair<ConvSlot, ConvSlot>> decoder_;  // index ℓ−1 for level ℓ
  ConvSlot out_;
  ConvSlot ssr_up_low_, ssr_up_high_, ssr_down_low_, ssr_down_high_, ssr_generator_;
  std::uint64_t init_counter_ = 0;
};

/// Single 1×1 convolution C→C; the smallest trainable denoiser.
class PointwiseModel : public Model {
 public:
  explicit PointwiseModel(std::size_t channels, double init_weight = 0.0);
  std::size_t in_channels() const override { return channels_; }

 protected:
  Var build(Tape& tape, Var input, const std::vector<Var>& params) const override;

 private:
  std::size_t channels_;
};

/// Closed-form number of scalars in a UNet built from `cfg`.
std::size_t unet_parameter_count(const ModelConfig& cfg);

}  // namespace scnet::model
