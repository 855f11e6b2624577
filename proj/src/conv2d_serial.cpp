#include "scnet/kernels.hpp"

// Direct-sum reference loops: every output element is one explicit sum over
// its receptive field.

namespace scnet::kernels::serial {

namespace {

bool in_bounds(std::ptrdiff_t i, std::size_t n) { return i >= 0 && i < static_cast<std::ptrdiff_t>(n); }

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const std::size_t oh_n = g.out_height(), ow_n = g.out_width();
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t kh = 0; kh < g.kernel_h; ++kh)
              for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) - pad;
                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kw) - pad;
                if (!in_bounds(ih, g.height) || !in_bounds(iw, g.width)) continue;
                acc += w[((o * g.in_channels + c) * g.kernel_h + kh) * g.kernel_w + kw] *
                       x[((b * g.in_channels + c) * g.height + ih) * g.width + iw];
              }
          y[((b * g.out_channels + o) * oh_n + oh) * ow_n + ow] = acc;
        }
}

void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx) {
  const std::size_t oh_n = g.out_height(), ow_n = g.out_width();
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t ih = 0; ih < g.height; ++ih)
        for (std::size_t iw = 0; iw < g.width; ++iw) {
          double acc = 0.0;
          for (std::size_t o = 0; o < g.out_channels; ++o)
            for (std::size_t kh = 0; kh < g.kernel_h; ++kh)
              for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
                const std::ptrdiff_t oh = static_cast<std::ptrdiff_t>(ih) + pad - static_cast<std::ptrdiff_t>(kh);
                const std::ptrdiff_t ow = static_cast<std::ptrdiff_t>(iw) + pad - static_cast<std::ptrdiff_t>(kw);
                if (!in_bounds(oh, oh_n) || !in_bounds(ow, ow_n)) continue;
                acc += w[((o * g.in_channels + c) * g.kernel_h + kh) * g.kernel_w + kw] *
                       gy[((b * g.out_channels + o) * oh_n + oh) * ow_n + ow];
              }
          gx[((b * g.in_channels + c) * g.height + ih) * g.width + iw] = acc;
        }
}

void conv2d_backward_params(const Conv2dGeometry& g, std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            std::span<double> gbias) {
  const std::size_t oh_n = g.out_height(), ow_n = g.out_width();
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t o = 0; o < g.out_channels; ++o)
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t kh = 0; kh < g.kernel_h; ++kh)
        for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
          double acc = 0.0;
          for (std::size_t b = 0; b < g.batch; ++b)
            for (std::size_t oh = 0; oh < oh_n; ++oh)
              for (std::size_t ow = 0; ow < ow_n; ++ow) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) - pad;
                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kw) - pad;
                if (!in_bounds(ih, g.height) || !in_bounds(iw, g.width)) continue;
                acc += gy[((b * g.out_channels + o) * oh_n + oh) * ow_n + ow] *
                       x[((b * g.in_channels + c) * g.height + ih) * g.width + iw];
              }
          gw[((o * g.in_channels + c) * g.kernel_h + kh) * g.kernel_w + kw] = acc;
        }
  if (gbias.empty()) return;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    double acc = 0.0;
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t i = 0; i < oh_n * ow_n; ++i) acc += gy[(b * g.out_channels + o) * oh_n * ow_n + i];
    gbias[o] = acc;
  }
}

}  // namespace scnet::kernels::serial
