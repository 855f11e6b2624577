#include "scnet/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "scnet/corpus.hpp"
#include "scnet/error.hpp"
#include "scnet/image_io.hpp"

namespace scnet::config {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  const std::string name = where + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(name + ": expected a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
      throw ConfigError(name + ": expected a non-negative integer");
    }
    out = v.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(name + ": expected a number");
    out = v.get<T>();
  } else {
    if (!v.is_string()) throw ConfigError(name + ": expected a string");
    out = v.get<std::string>();
  }
}

json level_json(const noise::NoiseModel& n) {
  const bool fixed = n.kind == noise::NoiseKind::gaussian_fixed || n.kind == noise::NoiseKind::poisson_fixed;
  return fixed ? json(n.lo) : json::array({n.lo, n.hi});
}

}  // namespace

noise::NoiseModel noise_from_json(const json& doc) {
  if (doc.is_object() && doc.contains("noise") && !doc.contains("kind")) return noise_from_json(doc.at("noise"));
  check_keys(doc, "noise", {"kind", "sigma", "lambda", "seed"});
  noise::NoiseModel n;
  std::string kind = "gaussian";
  read(doc, "kind", "noise", kind);
  // Short forms infer fixed/range from the level's type.
  std::optional<bool> want_range;
  bool gaussian = true;
  if (kind == "gaussian" || kind == "poisson") {
    gaussian = kind == "gaussian";
  } else {
    try {
      const noise::NoiseKind k = noise::parse_noise_kind(kind);
      gaussian = k == noise::NoiseKind::gaussian_fixed || k == noise::NoiseKind::gaussian_range;
      want_range = k == noise::NoiseKind::gaussian_range || k == noise::NoiseKind::poisson_range;
    } catch (const Error&) {
      throw ConfigError("noise.kind: unknown kind '" + kind +
                        "' (expected gaussian, poisson, gaussian_fixed, gaussian_range, poisson_fixed, poisson_range)");
    }
  }
  const char* level_key = gaussian ? "sigma" : "lambda";
  if (doc.contains(gaussian ? "lambda" : "sigma")) {
    throw ConfigError(std::string("noise: '") + (gaussian ? "lambda" : "sigma") + "' does not apply to " + kind);
  }
  n.lo = n.hi = gaussian ? 25.0 : 30.0;
  bool range = false;
  if (doc.contains(level_key)) {
    const json& lv = doc.at(level_key);
    if (lv.is_number()) {
      n.lo = n.hi = lv.get<double>();
    } else if (lv.is_array() && lv.size() == 2 && lv[0].is_number() && lv[1].is_number()) {
      n.lo = lv[0].get<double>();
      n.hi = lv[1].get<double>();
      range = true;
    } else {
      throw ConfigError(std::string("noise.") + level_key + ": expected a number or [lo, hi]");
    }
  } else if (want_range.value_or(false)) {
    throw ConfigError(std::string("noise.") + level_key + ": required as [lo, hi] for " + kind);
  }
  if (want_range && *want_range != range) {
    throw ConfigError(std::string("noise.") + level_key + ": " + kind + " expects " +
                      (*want_range ? "[lo, hi]" : "a single number"));
  }
  n.kind = gaussian ? (range ? noise::NoiseKind::gaussian_range : noise::NoiseKind::gaussian_fixed)
                    : (range ? noise::NoiseKind::poisson_range : noise::NoiseKind::poisson_fixed);
  read(doc, "seed", "noise", n.seed);
  try {
    n.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return n;
}

void ExperimentConfig::validate() const {
  try {
    noise.validate();
    model.validate();
    train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (dataset.kind == DatasetConfig::Kind::toy && (dataset.count == 0 || dataset.size == 0)) {
    throw ConfigError("dataset: count and size must be positive");
  }
  if (dataset.kind == DatasetConfig::Kind::dir && dataset.path.empty()) {
    throw ConfigError("dataset.path: required for kind 'dir'");
  }
}

ExperimentConfig from_json(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc, "config", {"noise", "model", "train", "bands", "toggles", "dataset", "output_dir"});
  ExperimentConfig cfg;
  if (doc.contains("noise")) cfg.noise = noise_from_json(doc.at("noise"));

  if (doc.contains("model")) {
    const json& m = doc.at("model");
    check_keys(m, "model", {"in_channels", "channels", "bottleneck", "kernel", "init_seed", "ssr", "lipschitz", "fsd"});
    read(m, "in_channels", "model", cfg.model.in_channels);
    if (m.contains("channels")) {
      const json& ch = m.at("channels");
      if (!ch.is_array() || ch.empty()) throw ConfigError("model.channels: expected a non-empty array");
      cfg.model.channels.clear();
      for (const json& c : ch) {
        if (!c.is_number_unsigned()) throw ConfigError("model.channels: expected positive integers");
        cfg.model.channels.push_back(c.get<std::size_t>());
      }
    }
    read(m, "bottleneck", "model", cfg.model.bottleneck);
    read(m, "kernel", "model", cfg.model.kernel);
    read(m, "init_seed", "model", cfg.model.init_seed);
    if (m.contains("ssr")) {
      const json& s = m.at("ssr");
      check_keys(s, "model.ssr", {"k", "eps_relative", "eps_floor", "level", "residual"});
      read(s, "k", "model.ssr", cfg.model.ssr.k);
      read(s, "eps_relative", "model.ssr", cfg.model.ssr.eps_relative);
      read(s, "eps_floor", "model.ssr", cfg.model.ssr.eps_floor);
      read(s, "level", "model.ssr", cfg.model.ssr.level);
      read(s, "residual", "model.ssr", cfg.model.ssr.residual);
    }
    if (m.contains("lipschitz")) {
      const json& l = m.at("lipschitz");
      check_keys(l, "model.lipschitz", {"beta", "train_iters", "verify_iters"});
      read(l, "beta", "model.lipschitz", cfg.model.lipschitz.beta);
      read(l, "train_iters", "model.lipschitz", cfg.model.lipschitz.train_iters);
      read(l, "verify_iters", "model.lipschitz", cfg.model.lipschitz.verify_iters);
    }
    if (m.contains("fsd")) {
      const json& f = m.at("fsd");
      check_keys(f, "model.fsd", {"r_c"});
      read(f, "r_c", "model.fsd", cfg.model.fsd.cutoff);
    }
  }

  if (doc.contains("train")) {
    const json& t = doc.at("train");
    check_keys(t, "train", {"epochs", "batch_size", "patch_size", "crops_per_image", "lr", "seed", "ipfs_every",
                            "probe_images"});
    read(t, "epochs", "train", cfg.train.epochs);
    read(t, "batch_size", "train", cfg.train.batch_size);
    read(t, "patch_size", "train", cfg.train.patch_size);
    read(t, "crops_per_image", "train", cfg.train.crops_per_image);
    read(t, "lr", "train", cfg.train.adam.lr);
    read(t, "seed", "train", cfg.train.seed);
    read(t, "ipfs_every", "train", cfg.train.ipfs_every);
    read(t, "probe_images", "train", cfg.train.probe_images);
  }
  read(doc, "bands", "config", cfg.train.bands);

  if (doc.contains("toggles")) {
    const json& tg = doc.at("toggles");
    check_keys(tg, "toggles", {"fsd", "lipschitz", "ssr"});
    read(tg, "fsd", "toggles", cfg.model.fsd.enabled);
    read(tg, "lipschitz", "toggles", cfg.model.lipschitz.enabled);
    read(tg, "ssr", "toggles", cfg.model.ssr.enabled);
  }

  if (doc.contains("dataset")) {
    const json& d = doc.at("dataset");
    if (!d.is_object()) throw ConfigError("dataset: expected an object");
    std::string kind = "toy";
    read(d, "kind", "dataset", kind);
    if (kind == "toy") {
      check_keys(d, "dataset", {"kind", "count", "size", "seed"});
      read(d, "count", "dataset", cfg.dataset.count);
      read(d, "size", "dataset", cfg.dataset.size);
      read(d, "seed", "dataset", cfg.dataset.seed);
    } else if (kind == "dir") {
      check_keys(d, "dataset", {"kind", "path"});
      cfg.dataset.kind = DatasetConfig::Kind::dir;
      read(d, "path", "dataset", cfg.dataset.path);
      if (!cfg.dataset.path.empty() && !base_dir.empty() && std::filesystem::path(cfg.dataset.path).is_relative()) {
        cfg.dataset.path = (base_dir / cfg.dataset.path).lexically_normal().string();
      }
    } else {
      throw ConfigError("dataset.kind: expected 'toy' or 'dir', got '" + kind + "'");
    }
  }
  read(doc, "output_dir", "config", cfg.output_dir);
  cfg.validate();
  return cfg;
}

json parse_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    throw ConfigError(origin + ": malformed JSON (" + msg + ")");
  }
}

ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(parse_text(ss.str(), path.string()), path.parent_path());
}

json to_json(const ExperimentConfig& cfg) {
  json doc;
  doc["noise"] = {{"kind", noise::to_string(cfg.noise.kind)},
                  {cfg.noise.gaussian() ? "sigma" : "lambda", level_json(cfg.noise)},
                  {"seed", cfg.noise.seed}};
  const auto& m = cfg.model;
  doc["model"] = {{"in_channels", m.in_channels},
                  {"channels", m.channels},
                  {"bottleneck", m.bottleneck},
                  {"kernel", m.kernel},
                  {"init_seed", m.init_seed},
                  {"ssr",
                   {{"k", m.ssr.k},
                    {"eps_relative", m.ssr.eps_relative},
                    {"eps_floor", m.ssr.eps_floor},
                    {"level", m.ssr.level},
                    {"residual", m.ssr.residual}}},
                  {"lipschitz",
                   {{"beta", m.lipschitz.beta},
                    {"train_iters", m.lipschitz.train_iters},
                    {"verify_iters", m.lipschitz.verify_iters}}},
                  {"fsd", {{"r_c", m.fsd.cutoff}}}};
  const auto& t = cfg.train;
  doc["train"] = {{"epochs", t.epochs},         {"batch_size", t.batch_size},
                  {"patch_size", t.patch_size}, {"crops_per_image", t.crops_per_image},
                  {"lr", t.adam.lr},            {"seed", t.seed},
                  {"ipfs_every", t.ipfs_every}, {"probe_images", t.probe_images}};
  doc["bands"] = t.bands;
  doc["toggles"] = {{"fsd", m.fsd.enabled}, {"lipschitz", m.lipschitz.enabled}, {"ssr", m.ssr.enabled}};
  if (cfg.dataset.kind == DatasetConfig::Kind::toy) {
    doc["dataset"] = {{"kind", "toy"}, {"count", cfg.dataset.count}, {"size", cfg.dataset.size},
                      {"seed", cfg.dataset.seed}};
  } else {
    doc["dataset"] = {{"kind", "dir"}, {"path", cfg.dataset.path}};
  }
  doc["output_dir"] = cfg.output_dir;
  return doc;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json doc = to_json(cfg);
  doc.erase("output_dir");
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Tensor> load_dataset(const DatasetConfig& cfg) {
  if (cfg.kind == DatasetConfig::Kind::toy) return corpus::toy_corpus(cfg.count, cfg.size, cfg.seed);
  std::vector<Tensor> out;
  for (const auto& p : image_io::list_images(cfg.path)) out.push_back(image_io::load(p));
  if (out.empty()) throw DataError("dataset: no .pgm/.ppm images in " + cfg.path);
  return out;
}

std::filesystem::path resolve_output_dir(const std::string& flag, const ExperimentConfig& cfg) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("SCNET_OUTPUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

}  // namespace scnet::config
