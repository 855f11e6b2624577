#include "scnet/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "scnet/error.hpp"

namespace scnet::metrics {

double psnr(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "psnr");
  if (a.size() == 0) throw ShapeError("psnr: empty images");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> g{};
  double sum = 0.0;
  const double centre = (kSsimWindow - 1) / 2.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - centre;
    g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Valid-mode separable Gaussian filter of an h×w plane.
std::vector<double> filter_valid(const std::vector<double>& x, std::size_t h, std::size_t w,
                                 const std::array<double, kSsimWindow>& g) {
  const std::size_t oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;
  std::vector<double> rows(h * ow), out(oh * ow);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < kSsimWindow; ++t) s += g[t] * x[i * w + j + t];
      rows[i * ow + j] = s;
    }
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < kSsimWindow; ++t) s += g[t] * rows[(i + t) * ow + j];
      out[i * ow + j] = s;
    }
  return out;
}

double ssim_plane(const double* a, const double* b, std::size_t h, std::size_t w) {
  static const auto g = gaussian_taps();
  const std::size_t n = h * w;
  std::vector<double> va(a, a + n), vb(b, b + n), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(va, h, w, g), mu_b = filter_valid(vb, h, w, g);
  const auto s_aa = filter_valid(aa, h, w, g), s_bb = filter_valid(bb, h, w, g), s_ab = filter_valid(ab, h, w, g);
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double var_a = s_aa[i] - ma * ma, var_b = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
    acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return acc / static_cast<double>(mu_a.size());
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ssim");
  if (a.rank() < 2) throw ShapeError("ssim: expected an image, got " + shape_str(a.shape()));
  const std::size_t h = a.dim(a.rank() - 2), w = a.dim(a.rank() - 1);
  if (h < kSsimWindow || w < kSsimWindow) {
    throw DataError("ssim: image " + shape_str(a.shape()) + " smaller than the 11x11 window");
  }
  const std::size_t planes = a.size() / (h * w);
  double acc = 0.0;
  for (std::size_t p = 0; p < planes; ++p) {
    acc += ssim_plane(a.data().data() + p * h * w, b.data().data() + p * h * w, h, w);
  }
  return acc / static_cast<double>(planes);
}

std::string format_metric(double value) {
  if (std::isinf(value) && value > 0) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

}  // namespace scnet::metrics
