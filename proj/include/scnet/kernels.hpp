#pragma once

// Convolution kernels. The default entry points are OpenMP-parallel; the
// `serial` namespace holds straightforward reference loops kept for tests and
// the benchmark. Parallel loops partition output elements only, so results
// do not depend on the thread count.

#include <cstddef>
#include <span>

namespace scnet::kernels {

struct Conv2dGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;  // input height
  std::size_t width = 0;   // input width
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t padding = 0;

  std::size_t out_height() const { return height + 2 * padding - kernel_h + 1; }
  std::size_t out_width() const { return width + 2 * padding - kernel_w + 1; }
};

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx);
void conv2d_backward_params(const Conv2dGeometry& g, std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            std::span<double> gbias);

namespace serial {

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx);
void conv2d_backward_params(const Conv2dGeometry& g, std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            std::span<double> gbias);

}  // namespace serial

}  // namespace scnet::kernels
