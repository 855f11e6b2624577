#pragma once

// Experiment configuration as a JSON document. Every section and key is
// optional and defaults as below; unknown keys anywhere are rejected.
//
//   {
//     "noise":   {"kind": "gaussian" | "poisson", "sigma" | "lambda": x or [lo, hi], "seed": 0},
//     "model":   {"in_channels": 1, "channels": [16, 32], "bottleneck": 64, "kernel": 3, "init_seed": 1,
//                 "ssr": {"k": 8, "eps_relative": 1e-6, "eps_floor": 1e-12, "level": 1, "residual": true},
//                 "lipschitz": {"beta": 1.0, "train_iters": 1, "verify_iters": 50},
//                 "fsd": {"r_c": 0.25}},
//     "train":   {"epochs": 30, "batch_size": 2, "patch_size": 32, "crops_per_image": 16, "lr": 1e-3,
//                 "seed": 1, "ipfs_every": 1, "probe_images": 16},
//     "bands": 5,
//     "toggles": {"fsd": false, "lipschitz": false, "ssr": false},
//     "dataset": {"kind": "toy", "count": 16, "size": 128, "seed": 0} | {"kind": "dir", "path": "..."},
//     "output_dir": "runs/default"
//   }

#include <filesystem>
#include <string>

#include <json.hpp>

#include "scnet/model.hpp"
#include "scnet/noise.hpp"
#include "scnet/train.hpp"

namespace scnet::config {

struct DatasetConfig {
  enum class Kind { toy, dir } kind = Kind::toy;
  std::size_t count = 16;
  std::size_t size = 128;
  std::uint64_t seed = 0;
  std::string path;  // for Kind::dir; relative paths resolve against the config file
};

struct ExperimentConfig {
  noise::NoiseModel noise;
  model::ModelConfig model;
  train::TrainConfig train;
  DatasetConfig dataset;
  std::string output_dir = "runs/default";

  void validate() const;
};

ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load(const std::filesystem::path& path);
/// Parses a JSON document held in memory; errors mention `origin`.
nlohmann::json parse_text(const std::string& text, const std::string& origin);

/// Complete document with every default filled in; keys are sorted.
nlohmann::json to_json(const ExperimentConfig& cfg);
/// FNV-1a 64 of the canonical dump without output_dir, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// A bare noise section, or a full config whose "noise" section is used.
noise::NoiseModel noise_from_json(const nlohmann::json& doc);

/// Clean images for the configured dataset.
std::vector<Tensor> load_dataset(const DatasetConfig& cfg);

/// --out flag, then SCNET_OUTPUT_DIR, then the config's output_dir.
std::filesystem::path resolve_output_dir(const std::string& flag, const ExperimentConfig& cfg);

}  // namespace scnet::config
