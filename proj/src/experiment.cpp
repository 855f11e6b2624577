#include "scnet/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "scnet/checkpoint.hpp"
#include "scnet/error.hpp"
#include "scnet/image_io.hpp"
#include "scnet/lipschitz.hpp"
#include "scnet/metrics.hpp"

namespace scnet::experiment {

namespace fs = std::filesystem;

namespace {

std::string epoch_file(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "output_epoch_%04zu.tensor", epoch);
  return buf;
}

void write_probe(const fs::path& dir, const train::TrainResult& res, const report::Header& h) {
  fs::create_directories(dir);
  checkpoint::save_tensor(dir / "input.tensor", res.probe.input);
  checkpoint::save_tensor(dir / "target_nos.tensor", res.probe.noisy_target);
  checkpoint::save_tensor(dir / "target_gt.tensor", res.probe.clean_target);
  for (const auto& [epoch, out] : res.probe_outputs) checkpoint::save_tensor(dir / epoch_file(epoch), out);
  nlohmann::json meta = {{"config_hash", h.config_hash}, {"seed", h.seed}};
  report::write_file(dir / "meta.json", meta.dump(2) + "\n");
}

}  // namespace

report::Header header_for(const config::ExperimentConfig& cfg) {
  return {config::config_hash(cfg), cfg.train.seed};
}

RunResult run_training(const config::ExperimentConfig& cfg, const fs::path& out_dir,
                       const train::EpochCallback& on_epoch) {
  cfg.validate();
  const train::Dataset data = train::make_dataset(config::load_dataset(cfg.dataset), cfg.noise);
  model::UNet net(cfg.model);
  RunResult out;
  out.train = train::train(net, cfg.model, cfg.train, data, on_epoch);
  for (std::size_t idx : net.conv_kernels()) {
    out.verified_norms.push_back(lipschitz::verified_norm(lipschitz::reshape_kernel(net.parameters()[idx].value),
                                                          cfg.model.lipschitz.verify_iters));
  }
  if (out_dir.empty()) return out;

  const report::Header h = header_for(cfg);
  const auto& r = out.train;
  fs::create_directories(out_dir);
  const nlohmann::json doc = config::to_json(cfg);
  report::write_file(out_dir / kConfigFile, doc.dump(2) + "\n");
  checkpoint::save(out_dir / kCheckpointFile, checkpoint::capture(doc, net, r.state));
  report::write_file(out_dir / kMetricsFile, report::metrics_csv(h, r.metrics));
  report::write_file(out_dir / kIpfsFile, report::ipfs_csv(h, r.ipfs, cfg.train.bands));
  report::write_file(out_dir / kRoutingFile, report::routing_csv(h, r.routing));
  report::write_file(out_dir / kSpectralFile, report::spectral_csv(h, r.spectral));
  write_probe(out_dir / kProbeDir, r, h);
  return out;
}

std::unique_ptr<model::Model> model_from_checkpoint(const fs::path& ckpt_path, config::ExperimentConfig* cfg_out) {
  const checkpoint::Checkpoint ck = checkpoint::load(ckpt_path);
  config::ExperimentConfig cfg = config::from_json(ck.config);
  auto net = std::make_unique<model::UNet>(cfg.model);
  checkpoint::restore(ck, *net);
  if (cfg_out) *cfg_out = cfg;
  return net;
}

std::vector<report::EvalRow> evaluate(const model::Model& model, const fs::path& in_dir, const fs::path& gt_dir,
                                      const fs::path& save_dir) {
  const auto inputs = image_io::list_images(in_dir);
  if (inputs.empty()) throw DataError("eval: no .pgm/.ppm images in " + in_dir.string());
  if (!fs::is_directory(gt_dir)) throw DataError("not a directory: " + gt_dir.string());
  for (const auto& p : inputs) {
    if (!fs::exists(gt_dir / p.filename())) throw DataError("eval: no ground truth for " + p.filename().string());
  }
  if (!save_dir.empty()) fs::create_directories(save_dir);

  std::vector<report::EvalRow> rows(inputs.size());
  std::vector<std::string> errors(inputs.size());
  const auto n = static_cast<std::ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const fs::path& p = inputs[static_cast<std::size_t>(i)];
      const Tensor noisy = image_io::load(p);
      const Tensor gt = image_io::load(gt_dir / p.filename());
      if (noisy.shape() != gt.shape()) {
        throw ShapeError("eval: " + p.filename().string() + " is " + shape_str(noisy.shape()) +
                         " but its ground truth is " + shape_str(gt.shape()));
      }
      if (noisy.dim(0) != model.in_channels()) {
        throw ShapeError("eval: " + p.filename().string() + " has " + std::to_string(noisy.dim(0)) +
                         " channels, model expects " + std::to_string(model.in_channels()));
      }
      const Tensor out = train::clip01(train::denoise(model, noisy));
      if (!save_dir.empty()) image_io::save(save_dir / p.filename(), out);
      rows[static_cast<std::size_t>(i)] = {p.filename().string(), metrics::psnr(noisy, gt), metrics::ssim(noisy, gt),
                                           metrics::psnr(out, gt), metrics::ssim(out, gt)};
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw DataError(e);
  return rows;
}

std::vector<spectrum::IpfsRecord> ipfs_from_probe(const fs::path& dir_in, spectrum::TargetKind kind,
                                                  std::size_t bands, report::Header* header_out) {
  fs::path dir = dir_in;
  if (fs::is_directory(dir / kProbeDir)) dir /= kProbeDir;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  if (bands == 0) throw ConfigError("ipfs: bands must be positive");

  std::map<std::size_t, fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    std::size_t epoch = 0;
    int used = 0;
    if (std::sscanf(name.c_str(), "output_epoch_%zu.tensor%n", &epoch, &used) == 1 &&
        static_cast<std::size_t>(used) == name.size()) {
      files[epoch] = e.path();
    }
  }
  if (files.empty()) throw DataError("ipfs: no output_epoch_*.tensor files in " + dir.string());
  const Tensor target = checkpoint::load_tensor(
      dir / (kind == spectrum::TargetKind::noisy ? "target_nos.tensor" : "target_gt.tensor"));
  if (target.rank() < 2) throw DataError("ipfs: target tensor has rank " + std::to_string(target.rank()));
  std::vector<std::pair<std::size_t, Tensor>> seq;
  for (const auto& [epoch, path] : files) seq.emplace_back(epoch, checkpoint::load_tensor(path));
  const std::size_t h = target.dim(target.rank() - 2), w = target.dim(target.rank() - 1);
  const auto recs = spectrum::ipfs_curve(seq, target, kind, spectrum::band_masks(h, w, bands));

  if (header_out) {
    *header_out = {};
    if (fs::exists(dir / "meta.json")) {
      const auto meta = config::parse_text(report::read_file(dir / "meta.json"), (dir / "meta.json").string());
      header_out->config_hash = meta.value("config_hash", "");
      header_out->seed = meta.value("seed", std::uint64_t{0});
    }
  }
  return recs;
}

std::vector<Toggle> parse_grid(const std::string& spec) {
  std::vector<Toggle> out;
  std::set<std::string> seen;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t end = std::min(spec.find(',', start), spec.size());
    const std::string name = spec.substr(start, end - start);
    if (!seen.insert(name).second) throw ConfigError("grid: duplicate toggle '" + name + "'");
    if (name == "fsd") {
      out.push_back(Toggle::fsd);
    } else if (name == "lipschitz") {
      out.push_back(Toggle::lipschitz);
    } else if (name == "ssr") {
      out.push_back(Toggle::ssr);
    } else {
      throw ConfigError("grid: unknown toggle '" + name + "' (expected fsd, lipschitz, ssr)");
    }
    start = end + 1;
  }
  // Canonical order regardless of how the list was written.
  std::sort(out.begin(), out.end());
  return out;
}

AblationResult ablate(const config::ExperimentConfig& base, const std::vector<Toggle>& grid, std::size_t seeds,
                      const std::function<void(const std::string&)>& log) {
  if (seeds == 0) throw ConfigError("ablate: seeds must be positive");
  base.validate();
  AblationResult res;
  for (std::size_t s = 0; s < seeds; ++s) res.seeds.push_back(base.train.seed + s);

  const train::Dataset data = train::make_dataset(config::load_dataset(base.dataset), base.noise);
  const std::size_t combos = std::size_t{1} << grid.size();
  for (std::size_t mask = 0; mask < combos; ++mask) {
    config::ExperimentConfig cfg = base;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const bool on = (mask >> (grid.size() - 1 - g)) & 1;
      switch (grid[g]) {
        case Toggle::fsd: cfg.model.fsd.enabled = on; break;
        case Toggle::lipschitz: cfg.model.lipschitz.enabled = on; break;
        case Toggle::ssr: cfg.model.ssr.enabled = on; break;
      }
    }
    report::AblationRow row{cfg.model.fsd.enabled, cfg.model.lipschitz.enabled, cfg.model.ssr.enabled, {}, {}};
    for (std::size_t s = 0; s < seeds; ++s) {
      config::ExperimentConfig run = cfg;
      run.train.seed = base.train.seed + s;
      run.model.init_seed = base.model.init_seed + s;
      model::UNet net(run.model);
      const train::TrainResult tr = train::train(net, run.model, run.train, data);
      row.psnr.push_back(tr.metrics.back().psnr_probe);
      row.ssim.push_back(tr.metrics.back().ssim_probe);
      if (log) {
        log("fsd=" + std::to_string(row.fsd) + " lipschitz=" + std::to_string(row.lipschitz) +
            " ssr=" + std::to_string(row.ssr) + " seed=" + std::to_string(run.train.seed) +
            " psnr=" + metrics::format_metric(row.psnr.back()));
      }
    }
    res.rows.push_back(std::move(row));
  }
  return res;
}

}  // namespace scnet::experiment
