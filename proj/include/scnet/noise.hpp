#pragma once

#include <cstdint>
#include <string>

#include "scnet/tensor.hpp"

namespace scnet::noise {

enum class NoiseKind { gaussian_fixed, gaussian_range, poisson_fixed, poisson_range };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& s);

/// Synthetic noise setting. Gaussian levels are standard deviations in
/// 0–255 units; Poisson levels are the photon scale λ. Fixed kinds use `lo`.
struct NoiseModel {
  NoiseKind kind = NoiseKind::gaussian_fixed;
  double lo = 25.0;
  double hi = 25.0;
  std::uint64_t seed = 0;

  bool gaussian() const { return kind == NoiseKind::gaussian_fixed || kind == NoiseKind::gaussian_range; }
  void validate() const;
};

/// Above this Poisson mean the sampler switches from inversion to the
/// rounded normal approximation.
constexpr double kPoissonInversionLimit = 30.0;

/// img + N(0, (sigma255/255)²) per pixel; not clipped.
Tensor add_gaussian(const Tensor& img, double sigma255, std::uint64_t seed);
/// Poisson(λ·img)/λ per pixel.
Tensor add_poisson(const Tensor& img, double lambda, std::uint64_t seed);
/// One Poisson draw with the given mean from a single uniform in (0,1).
double poisson_sample(double mean, std::uint64_t key, std::uint64_t counter);

/// Noise level for one image: the constant for fixed kinds, a uniform draw
/// from [lo, hi] otherwise.
double sample_level(const NoiseModel& model, std::uint64_t seed);

/// Draws the level with `seed` and applies the matching generator.
Tensor apply(const NoiseModel& model, const Tensor& img, std::uint64_t seed);

}  // namespace scnet::noise
