#pragma once

#include <string>

#include "scnet/tensor.hpp"

namespace scnet::metrics {

/// 10·log10(1/mse) for images in [0,1]; +infinity when the images match.
double psnr(const Tensor& a, const Tensor& b);

constexpr std::size_t kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), dynamic range
/// 1, averaged over window positions fully inside the image (no padding) and
/// then over channel planes. Accepts H×W, C×H×W or N×C×H×W.
double ssim(const Tensor& a, const Tensor& b);

/// "inf" for the infinite sentinel, six decimals otherwise.
std::string format_metric(double value);

}  // namespace scnet::metrics
