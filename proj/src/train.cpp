#include "scnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scnet/error.hpp"
#include "scnet/metrics.hpp"
#include "scnet/pairgen.hpp"

namespace scnet::train {

namespace {

constexpr std::uint64_t kProbeTag = 0x9b0be;
constexpr std::uint64_t kCropTag = 0xc809;
constexpr std::uint64_t kPairTag = 0x9a12;
constexpr std::uint64_t kShuffleTag = 0x5f1e;

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - m);
}

Tensor crop(const Tensor& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Tensor out({C, h, w});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < h; ++i)
      std::copy_n(img.data().data() + (c * H + top + i) * W + left, w, out.data().data() + (c * h + i) * w);
  return out;
}

std::string norm_report(const model::Model& m) {
  std::ostringstream os;
  for (std::size_t idx : m.conv_kernels()) {
    const auto& p = m.parameters()[idx];
    double s = 0.0;
    for (double v : p.value.data()) s += v * v;
    os << ' ' << p.name << "=" << std::sqrt(s);
  }
  return os.str();
}

}  // namespace

void adam_update(std::vector<model::Parameter>& params, const std::vector<Tensor>& grads, AdamState& state,
                 const AdamConfig& cfg) {
  if (grads.size() != params.size()) throw Error("adam: gradient count does not match parameters");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor::zeros_like(p.value));
      state.v.push_back(Tensor::zeros_like(p.value));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t), bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value;
    require_same_shape(w, grads[i], "adam");
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grads[i][j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      w[j] -= cfg.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0 || patch_size == 0 || crops_per_image == 0 || ipfs_every == 0 ||
      bands == 0 || probe_images == 0) {
    throw ConfigError("train: epochs, batch_size, patch_size, crops_per_image, ipfs_every, bands and "
                      "probe_images must all be positive");
  }
  if (!(adam.lr > 0.0) || !(adam.eps > 0.0) || adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 ||
      adam.beta2 >= 1.0) {
    throw ConfigError("train: invalid Adam hyperparameters");
  }
}

TrainState init_state(const model::Model& model, const model::LipschitzConfig& lip, std::uint64_t seed) {
  TrainState st;
  st.rng = CounterRng(seed, 0);
  const auto kernels = model.conv_kernels();
  for (std::size_t j = 0; j < kernels.size(); ++j) {
    const auto& p = model.parameters()[kernels[j]];
    const Tensor mat = lipschitz::reshape_kernel(p.value);
    st.spectral.push_back(
        lipschitz::make_state(p.name, mat.dim(0), mat.dim(1), lip.beta > 0.0 ? lip.beta : 1.0, derive_seed(seed, j)));
  }
  return st;
}

StepResult train_step(model::Model& model, const Tensor& input, const Tensor& target, TrainState& state,
                      const AdamConfig& adam, const model::LipschitzConfig& lip) {
  Tape tape;
  const model::Model::Pass pass = model.forward(tape, input, true);
  require_same_shape(tape.value(pass.output), target, "train_step target");
  const Var loss = ops::mse(tape, pass.output, tape.constant(target));
  StepResult res;
  res.loss = tape.value(loss)[0];
  if (!std::isfinite(res.loss)) {
    throw NumericError("train_step: non-finite loss at step " + std::to_string(state.adam.step + 1) +
                       " (lr=" + std::to_string(adam.lr) + "; kernel norms:" + norm_report(model) + ")");
  }
  tape.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(pass.params.size());
  for (Var p : pass.params) grads.push_back(tape.grad(p));
  adam_update(model.parameters(), grads, state.adam, adam);

  const auto kernels = model.conv_kernels();
  if (state.spectral.size() != kernels.size()) throw Error("train_step: spectral state does not match model");
  for (std::size_t j = 0; j < kernels.size(); ++j) {
    Tensor& w = model.parameters()[kernels[j]].value;
    lipschitz::power_iterate(state.spectral[j], lipschitz::reshape_kernel(w), lip.train_iters);
    if (lip.enabled && lipschitz::clamp_weights(w, state.spectral[j], lip.beta)) ++res.clamp_hits;
  }
  return res;
}

std::size_t refine_clamp(model::Model& model, TrainState& state, const model::LipschitzConfig& lip) {
  const auto kernels = model.conv_kernels();
  std::size_t hits = 0;
  for (std::size_t j = 0; j < kernels.size(); ++j) {
    Tensor& w = model.parameters()[kernels[j]].value;
    const Tensor mat = lipschitz::reshape_kernel(w);
    // Nearly tied singular values converge slowly; iterate until the estimate settles.
    double prev = lipschitz::power_iterate(state.spectral[j], mat, lip.verify_iters);
    for (int round = 1; round < 50; ++round) {
      const double next = lipschitz::power_iterate(state.spectral[j], mat, lip.verify_iters);
      const bool settled = std::abs(next - prev) <= 1e-12 * next;
      prev = next;
      if (settled) break;
    }
    if (lipschitz::clamp_weights(w, state.spectral[j], lip.beta)) ++hits;
  }
  return hits;
}

Dataset make_dataset(std::vector<Tensor> clean, const noise::NoiseModel& noise) {
  noise.validate();
  Dataset d;
  d.noisy.reserve(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    require_rank(clean[i], 3, "dataset image");
    d.noisy.push_back(noise::apply(noise, clean[i], derive_seed(noise.seed, i)));
  }
  d.clean = std::move(clean);
  return d;
}

Tensor clip01(Tensor t) {
  for (double& v : t.storage()) v = std::clamp(v, 0.0, 1.0);
  return t;
}

Tensor stack(const std::vector<Tensor>& images) {
  if (images.empty()) throw DataError("stack: no images");
  const Shape& s = images.front().shape();
  Shape out_shape{images.size()};
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  Tensor out(out_shape);
  const std::size_t n = images.front().size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_same_shape(images[i], images.front(), "stack");
    std::copy_n(images[i].data().data(), n, out.data().data() + i * n);
  }
  return out;
}

Tensor unstack(const Tensor& batch, std::size_t n) {
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t len = shape_numel(s);
  return Tensor(s, std::vector<double>(batch.data().begin() + n * len, batch.data().begin() + (n + 1) * len));
}

Tensor reflect_pad(const Tensor& img, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right) {
  require_rank(img, 3, "reflect_pad");
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  const std::size_t h = H + top + bottom, w = W + left + right;
  Tensor out({C, h, w});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < h; ++i) {
      const std::size_t si = reflect_index(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(top), H);
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t sj = reflect_index(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(left), W);
        out(c, i, j) = img(c, si, sj);
      }
    }
  return out;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(model::Model& model, const model::ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& data)
    : model_(model), model_cfg_(model_cfg), cfg_(cfg), data_(data) {
  cfg_.validate();
  if (data_.clean.empty() || data_.clean.size() != data_.noisy.size()) {
    throw DataError("train: dataset is empty or has mismatched clean/noisy lists");
  }
  const std::size_t crop_side = 2 * cfg_.patch_size;
  const std::size_t m = model_.spatial_multiple();
  if (cfg_.patch_size % m) {
    throw ConfigError("train: patch_size " + std::to_string(cfg_.patch_size) + " must be a multiple of " +
                      std::to_string(m));
  }
  std::size_t probe_side = 128;
  const std::size_t probe_count = std::min(cfg_.probe_images, data_.clean.size());
  for (std::size_t i = 0; i < data_.clean.size(); ++i) {
    const Tensor& img = data_.clean[i];
    require_rank(img, 3, "dataset image");
    if (img.dim(0) != model_.in_channels()) {
      throw DataError("train: image " + std::to_string(i) + " has " + std::to_string(img.dim(0)) +
                      " channels, model expects " + std::to_string(model_.in_channels()));
    }
    if (img.dim(1) < crop_side || img.dim(2) < crop_side) {
      throw DataError("train: image " + std::to_string(i) + " (" + shape_str(img.shape()) +
                      ") is smaller than the training crop " + std::to_string(crop_side));
    }
    require_same_shape(img, data_.noisy[i], "dataset noisy/clean pair");
    if (i < probe_count) probe_side = std::min({probe_side, img.dim(1), img.dim(2)});
  }
  probe_side -= probe_side % (2 * m);

  // Probe: centre crops, one fixed sub-sampling draw, fixed routing.
  std::vector<Tensor> in, nos, gt;
  for (std::size_t i = 0; i < probe_count; ++i) {
    const Tensor& clean = data_.clean[i];
    const std::size_t top = (clean.dim(1) - probe_side) / 2, left = (clean.dim(2) - probe_side) / 2;
    const Tensor noisy_crop = crop(data_.noisy[i], top, left, probe_side, probe_side);
    const Tensor clean_crop = crop(clean, top, left, probe_side, probe_side);
    const pairgen::SubImages sub = pairgen::neighbor_pairs(noisy_crop, derive_seed(cfg_.seed, kProbeTag + i));
    const pairgen::NoisePair pair = model_cfg_.fsd.enabled
                                        ? pairgen::fsd_route(sub.sub1, sub.sub2, model_cfg_.fsd.cutoff)
                                        : pairgen::identity_route(sub.sub1, sub.sub2, model_cfg_.fsd.cutoff);
    in.push_back(pair.input_img);
    nos.push_back(pair.target_img);
    gt.push_back(pairgen::apply_selection(clean_crop, sub.selection, pair.swapped));
  }
  probe_ = {stack(in), stack(nos), stack(gt)};
  bands_ = spectrum::band_masks(probe_side / 2, probe_side / 2, cfg_.bands);
  state_ = init_state(model_, model_cfg_.lipschitz, cfg_.seed);
}

Tensor Trainer::probe_output() const { return model_.predict(probe_.input); }

MetricRow Trainer::run_epoch() {
  const std::size_t epoch = state_.epoch + 1;
  const std::uint64_t epoch_key = derive_seed(cfg_.seed, epoch);
  const std::size_t side = 2 * cfg_.patch_size;

  std::vector<pairgen::NoisePair> pairs;
  CounterRng crop_rng(derive_seed(epoch_key, kCropTag));
  for (std::size_t i = 0; i < data_.noisy.size(); ++i) {
    const Tensor& img = data_.noisy[i];
    for (std::size_t c = 0; c < cfg_.crops_per_image; ++c) {
      const std::size_t top = crop_rng.below(img.dim(1) - side + 1);
      const std::size_t left = crop_rng.below(img.dim(2) - side + 1);
      const pairgen::SubImages sub = pairgen::neighbor_pairs(
          crop(img, top, left, side, side), derive_seed(epoch_key, kPairTag + i * cfg_.crops_per_image + c));
      pairs.push_back(model_cfg_.fsd.enabled ? pairgen::fsd_route(sub.sub1, sub.sub2, model_cfg_.fsd.cutoff)
                                             : pairgen::identity_route(sub.sub1, sub.sub2, model_cfg_.fsd.cutoff));
      const auto& p = pairs.back();
      routing_.push_back({i, epoch, p.swapped, p.hf_input, p.hf_target});
    }
  }

  // Fisher–Yates with the epoch's stream.
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  CounterRng shuffle(derive_seed(epoch_key, kShuffleTag));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

  MetricRow row;
  row.epoch = epoch;
  double loss_sum = 0.0;
  std::size_t steps = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    std::vector<Tensor> in, tgt;
    for (std::size_t j = start; j < std::min(order.size(), start + cfg_.batch_size); ++j) {
      in.push_back(pairs[order[j]].input_img);
      tgt.push_back(pairs[order[j]].target_img);
    }
    const StepResult r = train_step(model_, stack(in), stack(tgt), state_, cfg_.adam, model_cfg_.lipschitz);
    loss_sum += r.loss;
    row.clamp_hits += r.clamp_hits;
    ++steps;
  }
  row.loss = loss_sum / static_cast<double>(steps);
  if (model_cfg_.lipschitz.enabled) row.clamp_hits += refine_clamp(model_, state_, model_cfg_.lipschitz);
  state_.epoch = epoch;
  state_.rng = CounterRng(cfg_.seed, epoch);

  const Tensor out = probe_output();
  const std::size_t n = probe_.input.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor o = clip01(unstack(out, i)), g = unstack(probe_.clean_target, i);
    row.psnr_probe += metrics::psnr(o, g) / static_cast<double>(n);
    row.ssim_probe += metrics::ssim(o, g) / static_cast<double>(n);
  }
  for (const auto& s : state_.spectral) spectral_log_.push_back({epoch, s.layer_id, s.last_estimate});
  return row;
}

std::vector<spectrum::IpfsRecord> Trainer::record_ipfs() {
  Tensor out = probe_output();
  std::vector<std::pair<std::size_t, Tensor>> seq{{state_.epoch, out}};
  auto recs = spectrum::ipfs_curve(seq, probe_.noisy_target, spectrum::TargetKind::noisy, bands_);
  auto gt = spectrum::ipfs_curve(seq, probe_.clean_target, spectrum::TargetKind::ground_truth, bands_);
  recs.insert(recs.end(), gt.begin(), gt.end());
  probe_outputs_.emplace_back(state_.epoch, std::move(out));
  return recs;
}

TrainResult train(model::Model& model, const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                  const Dataset& data, const EpochCallback& on_epoch) {
  Trainer trainer(model, model_cfg, cfg, data);
  TrainResult res;
  auto first = trainer.record_ipfs();
  res.ipfs.insert(res.ipfs.end(), first.begin(), first.end());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const MetricRow row = trainer.run_epoch();
    res.metrics.push_back(row);
    if (trainer.epoch() % cfg.ipfs_every == 0) {
      auto recs = trainer.record_ipfs();
      res.ipfs.insert(res.ipfs.end(), recs.begin(), recs.end());
    }
    if (on_epoch) on_epoch(trainer, row);
  }
  res.routing = trainer.routing();
  res.spectral = trainer.spectral_log();
  res.probe_outputs = trainer.probe_outputs();
  res.probe = trainer.probe();
  res.state = trainer.state();
  return res;
}

Tensor denoise(const model::Model& model, const Tensor& noisy, const DenoiseOptions& opts) {
  require_rank(noisy, 3, "denoise");
  const std::size_t C = noisy.dim(0), H = noisy.dim(1), W = noisy.dim(2);
  const std::size_t m = model.spatial_multiple();
  const auto round_up = [m](std::size_t v) { return (v + m - 1) / m * m; };

  if (opts.tile == 0) {
    const std::size_t ph = round_up(H), pw = round_up(W);
    const Tensor padded = reflect_pad(noisy, 0, ph - H, 0, pw - W);
    const Tensor out = unstack(model.predict(padded.reshaped({1, C, ph, pw})), 0);
    return crop(out, 0, 0, H, W);
  }
  if (opts.tile % m || opts.halo % m) {
    throw ConfigError("denoise: tile and halo must be multiples of " + std::to_string(m));
  }
  const std::size_t T = opts.tile, halo = opts.halo;
  const std::size_t ph = (H + T - 1) / T * T, pw = (W + T - 1) / T * T;
  const Tensor big = reflect_pad(noisy, halo, ph - H + halo, halo, pw - W + halo);
  Tensor out({C, H, W});
  const std::size_t win = T + 2 * halo;
  for (std::size_t ty = 0; ty < ph; ty += T)
    for (std::size_t tx = 0; tx < pw; tx += T) {
      const Tensor window = crop(big, ty, tx, win, win);
      const Tensor res = unstack(model.predict(window.reshaped({1, C, win, win})), 0);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < T && ty + i < H; ++i)
          for (std::size_t j = 0; j < T && tx + j < W; ++j) out(c, ty + i, tx + j) = res(c, halo + i, halo + j);
    }
  return out;
}

}  // namespace scnet::train
