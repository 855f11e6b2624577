#include <algorithm>
#include <vector>

#include "scnet/kernels.hpp"

// im2col + GEMM. Columns are laid out (C·Kh·Kw) × (B·H'·W') so every inner
// loop runs over the whole batch's pixels. Each output element has a fixed
// summation order regardless of how rows are shared out to threads.

namespace scnet::kernels {

namespace {

constexpr std::size_t kChunk = 512;  // inner-loop block kept in L1

std::vector<double> im2col(const Conv2dGeometry& g, std::span<const double> x) {
  const std::size_t oh_n = g.out_height(), ow_n = g.out_width(), plane = oh_n * ow_n;
  const std::size_t rows = g.in_channels * g.kernel_h * g.kernel_w, cols = g.batch * plane;
  std::vector<double> out(rows * cols);
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto n_rows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n_rows; ++r) {
    const std::size_t c = static_cast<std::size_t>(r) / (g.kernel_h * g.kernel_w);
    const std::size_t kh = static_cast<std::size_t>(r) / g.kernel_w % g.kernel_h;
    const std::size_t kw = static_cast<std::size_t>(r) % g.kernel_w;
    double* dst = out.data() + r * cols;
    for (std::size_t b = 0; b < g.batch; ++b) {
      const double* in = x.data() + (b * g.in_channels + c) * g.height * g.width;
      for (std::size_t oh = 0; oh < oh_n; ++oh) {
        double* drow = dst + b * plane + oh * ow_n;
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) - pad;
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
          std::fill(drow, drow + ow_n, 0.0);
          continue;
        }
        const double* srow = in + ih * static_cast<std::ptrdiff_t>(g.width);
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kw) - pad;
          drow[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : srow[iw];
        }
      }
    }
  }
  return out;
}

// dst_d[n] += Σ_p coef(d, p) · src_p[n] for d in [0, rows), p in [0, count),
// with coef(d, p) = coef[d·cd + p·cp]. Every element accumulates over p in
// ascending order, so results do not depend on the row blocking.
void gemm_rows(double* dst, std::size_t dst_stride, std::size_t rows, const double* src, std::size_t src_stride,
               std::size_t count, const double* coef, std::size_t cd, std::size_t cp, std::size_t n) {
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t len = std::min(kChunk, n - start);
    std::size_t d = 0;
    for (; d + 4 <= rows; d += 4) {
      double* d0 = dst + d * dst_stride + start;
      double* d1 = d0 + dst_stride;
      double* d2 = d1 + dst_stride;
      double* d3 = d2 + dst_stride;
      const double* c0 = coef + d * cd;
      const double* c1 = c0 + cd;
      const double* c2 = c1 + cd;
      const double* c3 = c2 + cd;
      std::size_t p = 0;
      for (; p + 4 <= count; p += 4) {
        const double* s0 = src + p * src_stride + start;
        const double* s1 = s0 + src_stride;
        const double* s2 = s1 + src_stride;
        const double* s3 = s2 + src_stride;
        const std::size_t q0 = p * cp, q1 = q0 + cp, q2 = q1 + cp, q3 = q2 + cp;
        const double a00 = c0[q0], a01 = c0[q1], a02 = c0[q2], a03 = c0[q3];
        const double a10 = c1[q0], a11 = c1[q1], a12 = c1[q2], a13 = c1[q3];
        const double a20 = c2[q0], a21 = c2[q1], a22 = c2[q2], a23 = c2[q3];
        const double a30 = c3[q0], a31 = c3[q1], a32 = c3[q2], a33 = c3[q3];
#pragma omp simd
        for (std::size_t i = 0; i < len; ++i) {
          const double x0 = s0[i], x1 = s1[i], x2 = s2[i], x3 = s3[i];
          d0[i] = (((d0[i] + a00 * x0) + a01 * x1) + a02 * x2) + a03 * x3;
          d1[i] = (((d1[i] + a10 * x0) + a11 * x1) + a12 * x2) + a13 * x3;
          d2[i] = (((d2[i] + a20 * x0) + a21 * x1) + a22 * x2) + a23 * x3;
          d3[i] = (((d3[i] + a30 * x0) + a31 * x1) + a32 * x2) + a33 * x3;
        }
      }
      for (; p < count; ++p) {
        const double* s = src + p * src_stride + start;
        const std::size_t q = p * cp;
        const double a0 = c0[q], a1 = c1[q], a2 = c2[q], a3 = c3[q];
#pragma omp simd
        for (std::size_t i = 0; i < len; ++i) {
          d0[i] += a0 * s[i];
          d1[i] += a1 * s[i];
          d2[i] += a2 * s[i];
          d3[i] += a3 * s[i];
        }
      }
    }
    for (; d < rows; ++d) {
      double* dd = dst + d * dst_stride + start;
      const double* c = coef + d * cd;
      std::size_t p = 0;
      for (; p + 4 <= count; p += 4) {
        const double* s0 = src + p * src_stride + start;
        const double* s1 = s0 + src_stride;
        const double* s2 = s1 + src_stride;
        const double* s3 = s2 + src_stride;
        const double a0 = c[p * cp], a1 = c[(p + 1) * cp], a2 = c[(p + 2) * cp], a3 = c[(p + 3) * cp];
#pragma omp simd
        for (std::size_t i = 0; i < len; ++i)
          dd[i] = (((dd[i] + a0 * s0[i]) + a1 * s1[i]) + a2 * s2[i]) + a3 * s3[i];
      }
      for (; p < count; ++p) {
        const double* s = src + p * src_stride + start;
        const double a = c[p * cp];
#pragma omp simd
        for (std::size_t i = 0; i < len; ++i) dd[i] += a * s[i];
      }
    }
  }
}

constexpr std::size_t kLanes = 8;

double reduce_lanes(const double* acc) {
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

// out[a·out_stride + b] = <x_a, y_b> for a in [0, na), b in [0, nb). Each dot
// product uses eight interleaved partial sums combined in a fixed tree.
void gemm_dots(double* out, std::size_t out_stride, const double* x, std::size_t na, const double* y, std::size_t nb,
               std::size_t n) {
  const std::size_t body = n / kLanes * kLanes;
  auto single = [&](std::size_t a, std::size_t b) {
    const double* xa = x + a * n;
    const double* yb = y + b * n;
    double acc[kLanes] = {};
    for (std::size_t i = 0; i < body; i += kLanes)
      for (std::size_t l = 0; l < kLanes; ++l) acc[l] += xa[i + l] * yb[i + l];
    for (std::size_t i = body, l = 0; i < n; ++i, ++l) acc[l] += xa[i] * yb[i];
    out[a * out_stride + b] = reduce_lanes(acc);
  };
  std::size_t a = 0;
  for (; a + 2 <= na; a += 2) {
    const double* x0 = x + a * n;
    const double* x1 = x0 + n;
    std::size_t b = 0;
    for (; b + 4 <= nb; b += 4) {
      const double* y0 = y + b * n;
      const double* y1 = y0 + n;
      const double* y2 = y1 + n;
      const double* y3 = y2 + n;
      double acc[8][kLanes] = {};
      for (std::size_t i = 0; i < body; i += kLanes) {
        for (std::size_t l = 0; l < kLanes; ++l) {
          const double u0 = x0[i + l], u1 = x1[i + l];
          const double v0 = y0[i + l], v1 = y1[i + l], v2 = y2[i + l], v3 = y3[i + l];
          acc[0][l] += u0 * v0;
          acc[1][l] += u0 * v1;
          acc[2][l] += u0 * v2;
          acc[3][l] += u0 * v3;
          acc[4][l] += u1 * v0;
          acc[5][l] += u1 * v1;
          acc[6][l] += u1 * v2;
          acc[7][l] += u1 * v3;
        }
      }
      for (std::size_t i = body, l = 0; i < n; ++i, ++l) {
        acc[0][l] += x0[i] * y0[i];
        acc[1][l] += x0[i] * y1[i];
        acc[2][l] += x0[i] * y2[i];
        acc[3][l] += x0[i] * y3[i];
        acc[4][l] += x1[i] * y0[i];
        acc[5][l] += x1[i] * y1[i];
        acc[6][l] += x1[i] * y2[i];
        acc[7][l] += x1[i] * y3[i];
      }
      for (std::size_t j = 0; j < 4; ++j) {
        out[a * out_stride + b + j] = reduce_lanes(acc[j]);
        out[(a + 1) * out_stride + b + j] = reduce_lanes(acc[4 + j]);
      }
    }
    for (; b < nb; ++b) {
      single(a, b);
      single(a + 1, b);
    }
  }
  for (; a < na; ++a)
    for (std::size_t b = 0; b < nb; ++b) single(a, b);
}

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const std::size_t plane = g.out_height() * g.out_width();
  const std::size_t rows = g.in_channels * g.kernel_h * g.kernel_w, n = g.batch * plane;
  const std::vector<double> cols = im2col(g, x);
  std::vector<double> acc(g.out_channels * n);
  const auto blocks = static_cast<std::ptrdiff_t>((g.out_channels + 3) / 4);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t o0 = static_cast<std::size_t>(blk) * 4, cnt = std::min<std::size_t>(4, g.out_channels - o0);
    for (std::size_t o = o0; o < o0 + cnt; ++o)
      std::fill_n(acc.data() + o * n, n, bias.empty() ? 0.0 : bias[o]);
    gemm_rows(acc.data() + o0 * n, n, cnt, cols.data(), n, rows, w.data() + o0 * rows, rows, 1, n);
    for (std::size_t o = o0; o < o0 + cnt; ++o)
      for (std::size_t b = 0; b < g.batch; ++b)
        std::copy_n(acc.data() + o * n + b * plane, plane, y.data() + (b * g.out_channels + o) * plane);
  }
}

void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx) {
  const std::size_t oh_n = g.out_height(), ow_n = g.out_width(), plane = oh_n * ow_n;
  const std::size_t ksize = g.kernel_h * g.kernel_w;
  const std::size_t rows = g.in_channels * ksize, n = g.batch * plane;

  // gy regrouped as O × (B·plane).
  std::vector<double> gy_rows(g.out_channels * n);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      std::copy_n(gy.data() + (b * g.out_channels + o) * plane, plane, gy_rows.data() + o * n + b * plane);

  std::vector<double> gcols(rows * n, 0.0);
  const auto blocks = static_cast<std::ptrdiff_t>((rows + 3) / 4);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t r0 = static_cast<std::size_t>(blk) * 4, cnt = std::min<std::size_t>(4, rows - r0);
    gemm_rows(gcols.data() + r0 * n, n, cnt, gy_rows.data(), n, g.out_channels, w.data() + r0, 1, rows, n);
  }

  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto jobs = static_cast<std::ptrdiff_t>(g.batch * g.in_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t b = static_cast<std::size_t>(job) / g.in_channels;
    const std::size_t c = static_cast<std::size_t>(job) % g.in_channels;
    double* gin = gx.data() + job * g.height * g.width;
    std::fill(gin, gin + g.height * g.width, 0.0);
    for (std::size_t kh = 0; kh < g.kernel_h; ++kh)
      for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
        const double* src = gcols.data() + ((c * g.kernel_h + kh) * g.kernel_w + kw) * n + b * plane;
        for (std::size_t oh = 0; oh < oh_n; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) - pad;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* drow = gin + ih * static_cast<std::ptrdiff_t>(g.width);
          const double* srow = src + oh * ow_n;
          for (std::size_t ow = 0; ow < ow_n; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kw) - pad;
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.width)) drow[iw] += srow[ow];
          }
        }
      }
  }
}

void conv2d_backward_params(const Conv2dGeometry& g, std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            std::span<double> gbias) {
  const std::size_t plane = g.out_height() * g.out_width();
  const std::size_t rows = g.in_channels * g.kernel_h * g.kernel_w, n = g.batch * plane;
  const std::vector<double> cols = im2col(g, x);
  std::vector<double> gy_rows(g.out_channels * n);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      std::copy_n(gy.data() + (b * g.out_channels + o) * plane, plane, gy_rows.data() + o * n + b * plane);

  const auto row_blocks = static_cast<std::ptrdiff_t>((rows + 3) / 4);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < row_blocks; ++blk) {
    const std::size_t r0 = static_cast<std::size_t>(blk) * 4, cnt = std::min<std::size_t>(4, rows - r0);
    gemm_dots(gw.data() + r0, rows, gy_rows.data(), g.out_channels, cols.data() + r0 * n, cnt, n);
  }
  const auto jobs = static_cast<std::ptrdiff_t>(g.out_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < jobs; ++o) {
    const double* go = gy_rows.data() + o * n;
    if (!gbias.empty()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += go[i];
      gbias[o] = acc;
    }
  }
}

}  // namespace scnet::kernels
