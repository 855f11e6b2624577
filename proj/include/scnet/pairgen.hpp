#pragma once

#include <cstdint>
#include <vector>

#include "scnet/spectrum.hpp"
#include "scnet/tensor.hpp"

namespace scnet::pairgen {

/// Per-cell choice of two distinct positions inside each 2×2 cell.
/// Positions are numbered row-major: 0 = top-left, 1 = top-right,
/// 2 = bottom-left, 3 = bottom-right.
struct CellSelection {
  std::size_t height = 0;  // sub-image height (cells per column)
  std::size_t width = 0;
  std::vector<std::uint8_t> first;
  std::vector<std::uint8_t> second;
};

struct SubImages {
  Tensor sub1;
  Tensor sub2;
  CellSelection selection;
};

/// Draws the 12 ordered position pairs uniformly per cell, keyed by
/// (seed, cell index). Accepts H×W or C×H×W images; all channels share the
/// cell's positions.
CellSelection draw_selection(std::size_t height, std::size_t width, std::uint64_t seed);

/// Gathers one pixel per cell; `second` picks the second position.
Tensor apply_selection(const Tensor& img, const CellSelection& sel, bool second);

SubImages neighbor_pairs(const Tensor& img, std::uint64_t seed);

struct NoisePair {
  Tensor input_img;
  Tensor target_img;
  bool swapped = false;
  double hf_input = 0.0;
  double hf_target = 0.0;
};

constexpr double kTieTolerance = 1e-12;

/// Sends the sub-image with strictly more high-frequency energy through the
/// network; ties (|Δ| < 1e-12) keep sub1 as the input.
NoisePair fsd_route(const Tensor& sub1, const Tensor& sub2, double cutoff = spectrum::kDefaultCutoff);

/// Fixed role assignment (sub1 is the input) used when routing is disabled;
/// the ratios are still measured for logging.
NoisePair identity_route(const Tensor& sub1, const Tensor& sub2, double cutoff = spectrum::kDefaultCutoff);

}  // namespace scnet::pairgen
