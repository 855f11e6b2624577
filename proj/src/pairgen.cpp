#include "scnet/pairgen.hpp"

#include <cmath>

#include "scnet/error.hpp"
#include "scnet/rng.hpp"

namespace scnet::pairgen {

namespace {

struct Layout {
  std::size_t channels, height, width;
};

Layout layout_of(const Tensor& img) {
  if (img.rank() == 2) return {1, img.dim(0), img.dim(1)};
  if (img.rank() == 3) return {img.dim(0), img.dim(1), img.dim(2)};
  throw ShapeError("neighbor_pairs: expected HxW or CxHxW image, got " + shape_str(img.shape()));
}

}  // namespace

CellSelection draw_selection(std::size_t height, std::size_t width, std::uint64_t seed) {
  if (height % 2 || width % 2 || height == 0 || width == 0) {
    throw ShapeError("neighbor_pairs: image dimensions must be even, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  CellSelection sel;
  sel.height = height / 2;
  sel.width = width / 2;
  const std::size_t cells = sel.height * sel.width;
  sel.first.resize(cells);
  sel.second.resize(cells);
  const std::uint64_t key = derive_seed(seed, 0x9a125);
  for (std::size_t c = 0; c < cells; ++c) {
    // 12 ordered pairs: first position, then one of the three others.
    const auto pick = static_cast<std::uint8_t>(counter_hash(key, c) % 12);
    const std::uint8_t a = pick / 3;
    std::uint8_t b = pick % 3;
    if (b >= a) ++b;
    sel.first[c] = a;
    sel.second[c] = b;
  }
  return sel;
}

Tensor apply_selection(const Tensor& img, const CellSelection& sel, bool second) {
  const Layout l = layout_of(img);
  if (l.height != 2 * sel.height || l.width != 2 * sel.width) {
    throw ShapeError("apply_selection: image " + shape_str(img.shape()) + " does not match selection grid");
  }
  Shape shape = img.rank() == 2 ? Shape{sel.height, sel.width} : Shape{l.channels, sel.height, sel.width};
  Tensor out(shape);
  const auto& pos = second ? sel.second : sel.first;
  for (std::size_t c = 0; c < l.channels; ++c)
    for (std::size_t i = 0; i < sel.height; ++i)
      for (std::size_t j = 0; j < sel.width; ++j) {
        const std::uint8_t p = pos[i * sel.width + j];
        const std::size_t r = 2 * i + p / 2, q = 2 * j + p % 2;
        out[(c * sel.height + i) * sel.width + j] = img[(c * l.height + r) * l.width + q];
      }
  return out;
}

SubImages neighbor_pairs(const Tensor& img, std::uint64_t seed) {
  const Layout l = layout_of(img);
  SubImages s;
  s.selection = draw_selection(l.height, l.width, seed);
  s.sub1 = apply_selection(img, s.selection, false);
  s.sub2 = apply_selection(img, s.selection, true);
  return s;
}

NoisePair fsd_route(const Tensor& sub1, const Tensor& sub2, double cutoff) {
  require_same_shape(sub1, sub2, "fsd_route");
  const double h1 = spectrum::hf_ratio(sub1, cutoff);
  const double h2 = spectrum::hf_ratio(sub2, cutoff);
  if (h2 > h1 && std::abs(h2 - h1) >= kTieTolerance) return NoisePair{sub2, sub1, true, h2, h1};
  return NoisePair{sub1, sub2, false, h1, h2};
}

NoisePair identity_route(const Tensor& sub1, const Tensor& sub2, double cutoff) {
  require_same_shape(sub1, sub2, "identity_route");
  return NoisePair{sub1, sub2, false, spectrum::hf_ratio(sub1, cutoff), spectrum::hf_ratio(sub2, cutoff)};
}

}  // namespace scnet::pairgen
