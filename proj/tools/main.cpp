// scnet: command-line front end.
//
//   scnet synth  --in img.pgm --noise noise.json --out noisy.pgm [--seed S]
//   scnet train  --config cfg.json [--out dir]
//   scnet eval   --ckpt model.ckpt --in noisy_dir --gt clean_dir --out report.csv [--save dir]
//   scnet ipfs   --ckpt-seq run_or_probe_dir --target nos|gt --bands B --out curves.csv
//   scnet ablate --config cfg.json --grid fsd,lipschitz,ssr [--seeds N] [--out dir]
//   scnet corpus --out dir [--count N] [--size S] [--seed S]
//
// Failures print one line "error[<code>]: <reason>" to stderr and exit with
// 2 (configuration), 3 (data) or 4 (numeric).

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "scnet/config.hpp"
#include "scnet/corpus.hpp"
#include "scnet/error.hpp"
#include "scnet/experiment.hpp"
#include "scnet/image_io.hpp"
#include "scnet/metrics.hpp"

namespace fs = std::filesystem;
using namespace scnet;

namespace {

int fail(int code, std::string msg) {
  for (char& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  std::fprintf(stderr, "error[%d]: %s\n", code, msg.c_str());
  return code;
}

void require_file(const std::string& path, const char* what, bool config) {
  if (!fs::is_regular_file(path)) {
    const std::string msg = std::string(what) + " not found: " + path;
    if (config) throw ConfigError(msg);
    throw DataError(msg);
  }
}

int cmd_synth(const std::string& in, const std::string& noise_path, const std::string& out,
              std::optional<std::uint64_t> seed) {
  require_file(noise_path, "noise config", true);
  const auto doc = config::parse_text(report::read_file(noise_path), noise_path);
  noise::NoiseModel nm = config::noise_from_json(doc);
  const Tensor img = image_io::load(in);
  const Tensor noisy = noise::apply(nm, img, seed.value_or(nm.seed));
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  image_io::save(out, noisy);
  std::printf("%s -> %s (%s, level %s)\n", in.c_str(), out.c_str(), noise::to_string(nm.kind).c_str(),
              metrics::format_metric(noise::sample_level(nm, seed.value_or(nm.seed))).c_str());
  return 0;
}

int cmd_train(const std::string& cfg_path, const std::string& out_flag) {
  require_file(cfg_path, "config", true);
  const config::ExperimentConfig cfg = config::load(cfg_path);
  const fs::path out = config::resolve_output_dir(out_flag, cfg);
  std::printf("config_hash=%s out=%s\n", config::config_hash(cfg).c_str(), out.string().c_str());
  std::fflush(stdout);
  const auto res = experiment::run_training(cfg, out, [](const train::Trainer&, const train::MetricRow& r) {
    std::printf("epoch %zu loss %s psnr %s ssim %s clamp_hits %zu\n", r.epoch, metrics::format_metric(r.loss).c_str(),
                metrics::format_metric(r.psnr_probe).c_str(), metrics::format_metric(r.ssim_probe).c_str(),
                r.clamp_hits);
    std::fflush(stdout);
  });
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& in, const std::string& gt, const std::string& out,
             const std::string& save) {
  require_file(ckpt, "checkpoint", false);
  config::ExperimentConfig cfg;
  const auto net = experiment::model_from_checkpoint(ckpt, &cfg);
  const auto rows = experiment::evaluate(*net, in, gt, save);
  report::write_file(out, report::eval_csv(experiment::header_for(cfg), rows));
  double pin = 0.0, pout = 0.0;
  for (const auto& r : rows) {
    pin += r.psnr_in / static_cast<double>(rows.size());
    pout += r.psnr_out / static_cast<double>(rows.size());
  }
  std::printf("%zu images, mean psnr in %s out %s -> %s\n", rows.size(), metrics::format_metric(pin).c_str(),
              metrics::format_metric(pout).c_str(), out.c_str());
  return 0;
}

int cmd_ipfs(const std::string& dir, const std::string& target, std::size_t bands, const std::string& out) {
  spectrum::TargetKind kind;
  try {
    kind = spectrum::parse_target_kind(target);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  report::Header h;
  const auto recs = experiment::ipfs_from_probe(dir, kind, bands, &h);
  report::write_file(out, report::ipfs_csv(h, recs, bands));
  std::printf("%zu records -> %s\n", recs.size(), out.c_str());
  return 0;
}

int cmd_ablate(const std::string& cfg_path, const std::string& grid, std::size_t seeds, const std::string& out_flag) {
  require_file(cfg_path, "config", true);
  const config::ExperimentConfig cfg = config::load(cfg_path);
  const auto toggles = experiment::parse_grid(grid);
  const fs::path out = config::resolve_output_dir(out_flag, cfg);
  const auto res = experiment::ablate(cfg, toggles, seeds, [](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  });
  report::write_file(out / "ablation.csv", report::ablation_csv(experiment::header_for(cfg), res.seeds, res.rows));
  std::printf("%zu combinations -> %s\n", res.rows.size(), (out / "ablation.csv").string().c_str());
  return 0;
}

int cmd_corpus(const std::string& out, std::size_t count, std::size_t size, std::uint64_t seed) {
  if (count == 0 || size == 0) throw ConfigError("corpus: count and size must be positive");
  fs::create_directories(out);
  const auto imgs = corpus::toy_corpus(count, size, seed);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "texture_%02zu.pgm", i);
    image_io::save(fs::path(out) / name, imgs[i]);
  }
  std::printf("%zu images -> %s\n", imgs.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised denoising with spectral control"};
  app.require_subcommand(1);

  std::string in, out, noise_path, cfg_path, ckpt, gt, save, dir, target, grid = "fsd,lipschitz,ssr";
  std::optional<std::uint64_t> seed;
  std::size_t bands = spectrum::kDefaultBands, seeds = 1, count = 16, size = 128;
  std::uint64_t corpus_seed = 0;

  auto* synth = app.add_subcommand("synth", "Apply a noise model to an image");
  synth->add_option("--in", in, "Clean PGM/PPM image")->required();
  synth->add_option("--noise", noise_path, "Noise JSON (or a full experiment config)")->required();
  synth->add_option("--out", out, "Noisy output image")->required();
  synth->add_option("--seed", seed, "Noise seed (default: the config's noise.seed)");

  auto* trn = app.add_subcommand("train", "Train a denoiser");
  trn->add_option("--config", cfg_path, "Experiment config JSON")->required();
  trn->add_option("--out", out, "Output directory (overrides SCNET_OUTPUT_DIR and the config)");

  auto* evl = app.add_subcommand("eval", "Denoise a directory and report PSNR/SSIM");
  evl->add_option("--ckpt", ckpt, "Checkpoint written by train")->required();
  evl->add_option("--in", in, "Directory of noisy images")->required();
  evl->add_option("--gt", gt, "Directory of clean images with matching names")->required();
  evl->add_option("--out", out, "Report CSV")->required();
  evl->add_option("--save", save, "Directory for denoised images");

  auto* ipf = app.add_subcommand("ipfs", "Recompute band similarity curves from probe dumps");
  ipf->add_option("--ckpt-seq", dir, "Run directory or its probe/ directory")->required();
  ipf->add_option("--target", target, "nos or gt")->required();
  ipf->add_option("--bands", bands, "Number of radial bands");
  ipf->add_option("--out", out, "Output CSV")->required();

  auto* abl = app.add_subcommand("ablate", "Run the toggle grid");
  abl->add_option("--config", cfg_path, "Base experiment config JSON")->required();
  abl->add_option("--grid", grid, "Comma-separated toggles to vary");
  abl->add_option("--seeds", seeds, "Runs per combination");
  abl->add_option("--out", out, "Output directory");

  auto* cor = app.add_subcommand("corpus", "Write the procedural texture corpus as PGM files");
  cor->add_option("--out", out, "Output directory")->required();
  cor->add_option("--count", count, "Number of images");
  cor->add_option("--size", size, "Image side");
  cor->add_option("--seed", corpus_seed, "Corpus seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, e.what());
  }

  try {
    if (*synth) return cmd_synth(in, noise_path, out, seed);
    if (*trn) return cmd_train(cfg_path, out);
    if (*evl) return cmd_eval(ckpt, in, gt, out, save);
    if (*ipf) return cmd_ipfs(dir, target, bands, out);
    if (*abl) return cmd_ablate(cfg_path, grid, seeds, out);
    if (*cor) return cmd_corpus(out, count, size, corpus_seed);
  } catch (const Error& e) {
    return fail(e.exit_code(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(3, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  return 0;
}
