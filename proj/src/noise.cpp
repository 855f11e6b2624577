#include "scnet/noise.hpp"

#include <cmath>

#include "scnet/error.hpp"
#include "scnet/rng.hpp"

namespace scnet::noise {

namespace {

constexpr std::uint64_t kLevelTag = 0x1e7e1;
constexpr std::uint64_t kFieldTag = 0xf1e1d;

}  // namespace

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::gaussian_fixed: return "gaussian_fixed";
    case NoiseKind::gaussian_range: return "gaussian_range";
    case NoiseKind::poisson_fixed: return "poisson_fixed";
    case NoiseKind::poisson_range: return "poisson_range";
  }
  return "?";
}

NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "gaussian_fixed") return NoiseKind::gaussian_fixed;
  if (s == "gaussian_range") return NoiseKind::gaussian_range;
  if (s == "poisson_fixed") return NoiseKind::poisson_fixed;
  if (s == "poisson_range") return NoiseKind::poisson_range;
  throw ConfigError("unknown noise kind '" + s + "'");
}

void NoiseModel::validate() const {
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw ConfigError("noise: non-finite level");
  if (lo > hi) throw ConfigError("noise: range lower bound exceeds upper bound");
  if (gaussian() && lo < 0.0) throw ConfigError("noise: sigma must be non-negative");
  if (!gaussian() && lo <= 0.0) throw ConfigError("noise: lambda must be positive");
}

Tensor add_gaussian(const Tensor& img, double sigma255, std::uint64_t seed) {
  if (!(sigma255 >= 0.0)) throw ConfigError("add_gaussian: sigma must be non-negative");
  Tensor out = img;
  if (sigma255 == 0.0) return out;
  const double sigma = sigma255 / 255.0;
  const std::uint64_t key = derive_seed(seed, kFieldTag);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma * counter_normal(key, i);
  return out;
}

double poisson_sample(double mean, std::uint64_t key, std::uint64_t counter) {
  if (mean <= 0.0) return 0.0;
  if (mean < kPoissonInversionLimit) {
    const double u = counter_uniform(key, 2 * counter);
    double p = std::exp(-mean);
    double cdf = p;
    double k = 0.0;
    // The cap guards against u landing in the last ulp of the CDF.
    while (u > cdf && k < 1000.0) {
      k += 1.0;
      p *= mean / k;
      cdf += p;
    }
    return k;
  }
  const double z = counter_normal(key, counter);
  return std::max(0.0, std::round(mean + std::sqrt(mean) * z));
}

Tensor add_poisson(const Tensor& img, double lambda, std::uint64_t seed) {
  if (!(lambda > 0.0)) throw ConfigError("add_poisson: lambda must be positive");
  Tensor out = img;
  const std::uint64_t key = derive_seed(seed, kFieldTag);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = poisson_sample(lambda * std::max(0.0, img[i]), key, i) / lambda;
  }
  return out;
}

double sample_level(const NoiseModel& model, std::uint64_t seed) {
  model.validate();
  if (model.kind == NoiseKind::gaussian_fixed || model.kind == NoiseKind::poisson_fixed) return model.lo;
  return model.lo + (model.hi - model.lo) * counter_uniform(derive_seed(seed, kLevelTag), 0);
}

Tensor apply(const NoiseModel& model, const Tensor& img, std::uint64_t seed) {
  const double level = sample_level(model, seed);
  return model.gaussian() ? add_gaussian(img, level, seed) : add_poisson(img, level, seed);
}

}  // namespace scnet::noise
