#include "scnet/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scnet/rng.hpp"

namespace scnet::corpus {

Tensor texture(std::size_t size, std::uint64_t seed) {
  CounterRng rng(seed);
  Tensor img({1, size, size}, 0.5);
  const auto n = static_cast<double>(size);

  const std::size_t waves = 3 + rng.below(3);
  for (std::size_t k = 0; k < waves; ++k) {
    const double amp = rng.uniform(0.03, 0.12);
    const double freq = std::exp(rng.uniform(std::log(1.0 / 64.0), std::log(1.0 / 4.0)));  // cycles/pixel
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double fx = freq * std::cos(theta), fy = freq * std::sin(theta);
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j)
        img(0, i, j) += amp * std::sin(2.0 * std::numbers::pi * (fy * i + fx * j) + phase);
  }

  const std::size_t shapes = 3 + rng.below(4);
  for (std::size_t k = 0; k < shapes; ++k) {
    const double level = rng.uniform(-0.25, 0.25);
    const double cy = rng.uniform(0.0, n), cx = rng.uniform(0.0, n);
    const double ry = rng.uniform(n / 16.0, n / 4.0), rx = rng.uniform(n / 16.0, n / 4.0);
    const bool disc = rng.uniform() < 0.5;
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j) {
        const double dy = (static_cast<double>(i) - cy) / ry, dx = (static_cast<double>(j) - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (inside) img(0, i, j) += level;
      }
  }

  const auto [lo, hi] = std::minmax_element(img.storage().begin(), img.storage().end());
  const double mn = *lo, span = std::max(*hi - *lo, 1e-12);
  for (double& v : img.storage()) v = 0.05 + 0.9 * (v - mn) / span;
  return img;
}

std::vector<Tensor> toy_corpus(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(texture(size, derive_seed(seed, i)));
  return out;
}

}  // namespace scnet::corpus
