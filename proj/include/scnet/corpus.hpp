#pragma once

#include <cstdint>
#include <vector>

#include "scnet/tensor.hpp"

namespace scnet::corpus {

/// Procedural grayscale texture (1×size×size, values in [0.05, 0.95]): a
/// seeded sum of oriented sinusoids plus flat rectangles and discs.
Tensor texture(std::size_t size, std::uint64_t seed);

/// `count` textures; image i uses derive_seed(seed, i).
std::vector<Tensor> toy_corpus(std::size_t count = 16, std::size_t size = 128, std::uint64_t seed = 0);

}  // namespace scnet::corpus
