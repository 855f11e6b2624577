#pragma once

// Self-supervised training: neighbour sub-sampled pairs, optional
// frequency-selection routing, L2 loss between the network output and the
// mapped noisy sub-image, Adam, and an optional spectral-norm clamp after
// every step. A fixed probe batch drawn before the first epoch tracks PSNR,
// SSIM and the band-similarity curves.

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "scnet/lipschitz.hpp"
#include "scnet/model.hpp"
#include "scnet/noise.hpp"
#include "scnet/rng.hpp"
#include "scnet/spectrum.hpp"

namespace scnet::train {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

void adam_update(std::vector<model::Parameter>& params, const std::vector<Tensor>& grads, AdamState& state,
                 const AdamConfig& cfg);

struct TrainConfig {
  AdamConfig adam;
  std::size_t epochs = 30;
  std::size_t batch_size = 2;
  std::size_t patch_size = 32;  // sub-image side; crops are twice this
  std::size_t crops_per_image = 16;
  std::uint64_t seed = 1;
  std::size_t ipfs_every = 1;
  std::size_t bands = spectrum::kDefaultBands;
  std::size_t probe_images = 16;

  void validate() const;
};

struct TrainState {
  AdamState adam;
  std::vector<lipschitz::SpectralNormState> spectral;  // parallel to Model::conv_kernels()
  std::uint64_t epoch = 0;
  CounterRng rng;  // key = training seed, counter = epochs consumed
};

TrainState init_state(const model::Model& model, const model::LipschitzConfig& lip, std::uint64_t seed);

struct StepResult {
  double loss = 0.0;
  std::size_t clamp_hits = 0;
};

/// One optimizer step on a B×C×H×W input/target batch.
StepResult train_step(model::Model& model, const Tensor& input, const Tensor& target, TrainState& state,
                      const AdamConfig& adam, const model::LipschitzConfig& lip);

/// End-of-epoch tightening: warm-started power iteration per kernel in rounds
/// of `verify_iters` until the estimate settles, then a clamp on it. The per-step single
/// iteration can lag the true norm after large updates. Returns clamp hits.
std::size_t refine_clamp(model::Model& model, TrainState& state, const model::LipschitzConfig& lip);

struct Dataset {
  std::vector<Tensor> clean;  // C×H×W in [0,1]
  std::vector<Tensor> noisy;  // one fixed realization per image
};

/// Noisy image i uses seed derive_seed(noise.seed, i).
Dataset make_dataset(std::vector<Tensor> clean, const noise::NoiseModel& noise);

struct RoutingRow {
  std::size_t image_id = 0;
  std::size_t epoch = 0;
  bool swapped = false;
  double hf_input = 0.0;
  double hf_target = 0.0;
};

struct MetricRow {
  std::size_t epoch = 0;
  double loss = 0.0;
  double psnr_probe = 0.0;
  double ssim_probe = 0.0;
  std::size_t clamp_hits = 0;
};

struct SpectralRow {
  std::size_t epoch = 0;
  std::string layer;
  double sigma = 0.0;
};

struct Probe {
  Tensor input;         // N×C×h×w routed network inputs
  Tensor noisy_target;  // mapped noisy sub-images
  Tensor clean_target;  // clean pixels at the input's positions
};

class Trainer {
 public:
  Trainer(model::Model& model, const model::ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& data);

  /// Runs the next epoch and returns its metric row.
  MetricRow run_epoch();
  /// Probe output and both IPFS records at the current epoch.
  std::vector<spectrum::IpfsRecord> record_ipfs();

  const Probe& probe() const { return probe_; }
  Tensor probe_output() const;
  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }
  std::size_t epoch() const { return state_.epoch; }

  const std::vector<RoutingRow>& routing() const { return routing_; }
  const std::vector<SpectralRow>& spectral_log() const { return spectral_log_; }
  const std::vector<std::pair<std::size_t, Tensor>>& probe_outputs() const { return probe_outputs_; }

 private:
  model::Model& model_;
  model::ModelConfig model_cfg_;
  TrainConfig cfg_;
  const Dataset& data_;
  spectrum::BandSet bands_;
  Probe probe_;
  TrainState state_;
  std::vector<RoutingRow> routing_;
  std::vector<SpectralRow> spectral_log_;
  std::vector<std::pair<std::size_t, Tensor>> probe_outputs_;
};

struct TrainResult {
  std::vector<MetricRow> metrics;
  std::vector<spectrum::IpfsRecord> ipfs;
  std::vector<RoutingRow> routing;
  std::vector<SpectralRow> spectral;
  std::vector<std::pair<std::size_t, Tensor>> probe_outputs;
  Probe probe;
  TrainState state;
};

/// Called after each epoch (and its IPFS record, when due).
using EpochCallback = std::function<void(const Trainer&, const MetricRow&)>;

/// IPFS is recorded before the first epoch and after every `ipfs_every`-th.
TrainResult train(model::Model& model, const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                  const Dataset& data, const EpochCallback& on_epoch = {});

struct DenoiseOptions {
  std::size_t tile = 0;   // 0: one pass over the whole (padded) image
  std::size_t halo = 32;  // context kept around each tile
};

/// Reflect-pads to the model's spatial multiple (plus the halo when tiling),
/// runs the network and crops back. Output is not clipped.
Tensor denoise(const model::Model& model, const Tensor& noisy, const DenoiseOptions& opts = {});

/// Reflection (without edge repeat) padding of a C×H×W image.
Tensor reflect_pad(const Tensor& img, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right);

Tensor clip01(Tensor t);
/// Stacks equally shaped C×H×W images into N×C×H×W.
Tensor stack(const std::vector<Tensor>& images);
/// Image n of an N×C×H×W batch.
Tensor unstack(const Tensor& batch, std::size_t n);

}  // namespace scnet::train
