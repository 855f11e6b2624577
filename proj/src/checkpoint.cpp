#include "scnet/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "scnet/error.hpp"
#include "scnet/report.hpp"

namespace scnet::checkpoint {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr char kTensorMagic[8] = {'S', 'C', 'N', 'E', 'T', 'T', 'N', 'S'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void doubles(std::span<const double> v) {
    for (double x : v) f64(x);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& s, const std::string& origin) : s_(s), origin_(origin) {}
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw DataError(origin_ + ": truncated file");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(s_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{u8()} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count(const char* what) {
    const std::uint64_t n = u64();
    if (n > s_.size()) throw DataError(origin_ + ": implausible " + what + " " + std::to_string(n));
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    const std::size_t n = count("string length");
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  void doubles(std::span<double> v) {
    need(8 * v.size());
    for (double& x : v) x = f64();
  }
  void magic(const char (&m)[8], const char* what) {
    need(8);
    if (std::memcmp(s_.data() + pos_, m, 8) != 0) throw DataError(origin_ + ": not a " + what + " file");
    pos_ += 8;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  const std::string& s_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

Shape read_shape(Reader& r) {
  const std::size_t rank = r.count("rank");
  if (rank > 8) throw DataError("checkpoint: rank " + std::to_string(rank) + " unsupported");
  Shape s(rank);
  for (auto& d : s) d = r.count("dimension");
  return s;
}

void write_shape(Writer& w, const Shape& s) {
  w.u64(s.size());
  for (auto d : s) w.u64(d);
}

}  // namespace

std::string encode(const Checkpoint& ck) {
  Writer w;
  w.bytes(kMagic, 8);
  w.u32(kVersion);
  w.str(ck.config.dump());
  w.u64(ck.epoch);
  w.u64(ck.adam.step);
  w.u64(ck.rng.key());
  w.u64(ck.rng.counter());
  w.u64(ck.params.size());
  for (const auto& p : ck.params) {
    w.str(p.name);
    write_shape(w, p.value.shape());
  }
  const bool moments = !ck.adam.m.empty();
  if (moments && (ck.adam.m.size() != ck.params.size() || ck.adam.v.size() != ck.params.size())) {
    throw Error("checkpoint: Adam moments do not match parameters");
  }
  w.u8(moments ? 1 : 0);
  for (const auto& p : ck.params) w.doubles(p.value.data());
  if (moments) {
    for (const auto& m : ck.adam.m) w.doubles(m.data());
    for (const auto& v : ck.adam.v) w.doubles(v.data());
  }
  w.u64(ck.spectral.size());
  for (const auto& s : ck.spectral) {
    w.str(s.layer_id);
    w.u64(s.u.size());
    w.u64(s.v.size());
    w.f64(s.beta);
    w.f64(s.last_estimate);
    w.doubles(s.u);
    w.doubles(s.v);
  }
  return w.take();
}

Checkpoint decode(const std::string& bytes, const std::string& origin) {
  Reader r(bytes, origin);
  r.magic(kMagic, "checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw DataError(origin + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const std::string cfg = r.str();
  try {
    ck.config = nlohmann::json::parse(cfg);
  } catch (const nlohmann::json::parse_error&) {
    throw DataError(origin + ": embedded config is not valid JSON");
  }
  ck.epoch = r.u64();
  ck.adam.step = r.u64();
  const std::uint64_t key = r.u64();
  const std::uint64_t counter = r.u64();
  ck.rng = CounterRng(key, counter);
  const std::size_t n = r.count("parameter count");
  std::vector<Shape> shapes;
  for (std::size_t i = 0; i < n; ++i) {
    std::string name = r.str();
    shapes.push_back(read_shape(r));
    ck.params.push_back({std::move(name), Tensor()});
  }
  const bool moments = r.u8() != 0;
  for (std::size_t i = 0; i < n; ++i) {
    ck.params[i].value = Tensor(shapes[i]);
    r.doubles(ck.params[i].value.storage());
  }
  if (moments) {
    for (auto* vec : {&ck.adam.m, &ck.adam.v})
      for (std::size_t i = 0; i < n; ++i) {
        vec->emplace_back(shapes[i]);
        r.doubles(vec->back().storage());
      }
  }
  const std::size_t layers = r.count("layer count");
  for (std::size_t i = 0; i < layers; ++i) {
    lipschitz::SpectralNormState s;
    s.layer_id = r.str();
    s.u.resize(r.count("rows"));
    s.v.resize(r.count("cols"));
    s.beta = r.f64();
    s.last_estimate = r.f64();
    r.doubles(s.u);
    r.doubles(s.v);
    ck.spectral.push_back(std::move(s));
  }
  if (!r.done()) throw DataError(origin + ": trailing bytes after checkpoint");
  return ck;
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) { report::write_file(path, encode(ckpt)); }

Checkpoint load(const std::filesystem::path& path) { return decode(report::read_file(path), path.string()); }

Checkpoint capture(const nlohmann::json& config, const model::Model& model, const train::TrainState& state) {
  Checkpoint ck;
  ck.config = config;
  ck.epoch = state.epoch;
  ck.params = model.parameters();
  ck.adam = state.adam;
  ck.spectral = state.spectral;
  ck.rng = state.rng;
  return ck;
}

void restore(const Checkpoint& ck, model::Model& model) {
  auto& params = model.parameters();
  if (params.size() != ck.params.size()) {
    throw DataError("checkpoint: has " + std::to_string(ck.params.size()) + " parameters, model has " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != ck.params[i].name || params[i].value.shape() != ck.params[i].value.shape()) {
      throw DataError("checkpoint: parameter " + ck.params[i].name + " " + shape_str(ck.params[i].value.shape()) +
                      " does not match model parameter " + params[i].name + " " +
                      shape_str(params[i].value.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = ck.params[i].value;
}

void restore(const Checkpoint& ck, model::Model& model, train::TrainState& state) {
  restore(ck, model);
  if (ck.spectral.size() != state.spectral.size()) {
    throw DataError("checkpoint: spectral state count does not match model");
  }
  for (std::size_t i = 0; i < ck.spectral.size(); ++i) {
    const auto& a = ck.spectral[i];
    const auto& b = state.spectral[i];
    if (a.layer_id != b.layer_id || a.u.size() != b.u.size() || a.v.size() != b.v.size()) {
      throw DataError("checkpoint: spectral state for " + a.layer_id + " does not match model");
    }
  }
  state.epoch = ck.epoch;
  state.adam = ck.adam;
  state.spectral = ck.spectral;
  state.rng = ck.rng;
}

std::string encode_tensor(const Tensor& t) {
  Writer w;
  w.bytes(kTensorMagic, 8);
  w.u32(kVersion);
  write_shape(w, t.shape());
  w.doubles(t.data());
  return w.take();
}

Tensor decode_tensor(const std::string& bytes, const std::string& origin) {
  Reader r(bytes, origin);
  r.magic(kTensorMagic, "tensor");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw DataError(origin + ": unsupported tensor version " + std::to_string(version));
  Tensor t(read_shape(r));
  r.doubles(t.storage());
  if (!r.done()) throw DataError(origin + ": trailing bytes after tensor");
  return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) { report::write_file(path, encode_tensor(t)); }

Tensor load_tensor(const std::filesystem::path& path) { return decode_tensor(report::read_file(path), path.string()); }

}  // namespace scnet::checkpoint
