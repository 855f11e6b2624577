#pragma once

// Little-endian binary checkpoint.
//
//   magic "SCNETCKP" | u32 version
//   u64 len, config JSON text
//   u64 epoch | u64 adam_step | u64 rng_key | u64 rng_counter
//   u64 n_params, then per parameter: u64 name_len, name, u64 rank, u64 dims[rank]
//   u8 has_moments
//   f64 parameter values (table order), then Adam m and v when has_moments
//   u64 n_layers, then per layer: u64 name_len, name, u64 rows, u64 cols,
//       f64 beta, f64 last_estimate, f64 u[rows], f64 v[cols]
//
// Tensor files (probe dumps) use magic "SCNETTNS", u32 version, u64 rank,
// u64 dims[rank], f64 values.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "scnet/model.hpp"
#include "scnet/train.hpp"

namespace scnet::checkpoint {

constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
  nlohmann::json config;
  std::uint64_t epoch = 0;
  std::vector<model::Parameter> params;
  train::AdamState adam;
  std::vector<lipschitz::SpectralNormState> spectral;
  CounterRng rng;
};

std::string encode(const Checkpoint& ckpt);
Checkpoint decode(const std::string& bytes, const std::string& origin = "<memory>");
void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

Checkpoint capture(const nlohmann::json& config, const model::Model& model, const train::TrainState& state);
/// Copies parameters into `model` and optimizer/spectral/RNG state into
/// `state`; names and shapes must match.
void restore(const Checkpoint& ckpt, model::Model& model, train::TrainState& state);
/// Parameters only.
void restore(const Checkpoint& ckpt, model::Model& model);

std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::string& bytes, const std::string& origin = "<memory>");
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace scnet::checkpoint
