#pragma once

// Orchestration shared by the command-line tool and the test suites:
// training runs with their on-disk artefacts, batch evaluation, IPFS
// recomputation from probe dumps, and the toggle ablation grid.

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "scnet/config.hpp"
#include "scnet/report.hpp"
#include "scnet/train.hpp"

namespace scnet::experiment {

/// Run directory layout.
inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kIpfsFile = "ipfs.csv";
inline constexpr const char* kRoutingFile = "routing.csv";
inline constexpr const char* kSpectralFile = "spectral.csv";
inline constexpr const char* kProbeDir = "probe";

report::Header header_for(const config::ExperimentConfig& cfg);

struct RunResult {
  train::TrainResult train;
  std::vector<double> verified_norms;  // fresh power iteration per conv kernel after the last epoch
};

/// Trains from scratch. With a non-empty `out_dir` the checkpoint, config,
/// CSV logs and probe dumps are written there.
RunResult run_training(const config::ExperimentConfig& cfg, const std::filesystem::path& out_dir = {},
                       const train::EpochCallback& on_epoch = {});

/// Rebuilds the model described by a checkpoint's embedded config.
std::unique_ptr<model::Model> model_from_checkpoint(const std::filesystem::path& ckpt_path,
                                                    config::ExperimentConfig* cfg_out = nullptr);

/// Denoises every image of `in_dir` and scores input and output against the
/// same-named image in `gt_dir`. Images are processed concurrently; rows
/// follow sorted file names.
std::vector<report::EvalRow> evaluate(const model::Model& model, const std::filesystem::path& in_dir,
                                      const std::filesystem::path& gt_dir,
                                      const std::filesystem::path& save_dir = {});

/// IPFS records for every output_epoch_*.tensor under a probe directory (or
/// a run directory containing one).
std::vector<spectrum::IpfsRecord> ipfs_from_probe(const std::filesystem::path& dir, spectrum::TargetKind kind,
                                                  std::size_t bands, report::Header* header_out = nullptr);

enum class Toggle { fsd, lipschitz, ssr };
std::vector<Toggle> parse_grid(const std::string& spec);

struct AblationResult {
  std::vector<std::uint64_t> seeds;
  std::vector<report::AblationRow> rows;
};

/// 2^|grid| toggle combinations × `seeds` runs. Seed s offsets both the
/// training seed and the weight-init seed by s; the noisy dataset is shared.
/// Rows are ordered with fsd as the most significant bit.
AblationResult ablate(const config::ExperimentConfig& base, const std::vector<Toggle>& grid, std::size_t seeds,
                      const std::function<void(const std::string&)>& log = {});

}  // namespace scnet::experiment
