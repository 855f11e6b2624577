#pragma once

// Binary netpbm images: P5 (grey) and P6 (RGB), maxval 255. Pixels load as
// v/255 into a C×H×W tensor and save as round(clip(v)·255).

#include <filesystem>
#include <string>
#include <vector>

#include "scnet/tensor.hpp"

namespace scnet::image_io {

Tensor load(const std::filesystem::path& path);
void save(const std::filesystem::path& path, const Tensor& img);

Tensor decode(const std::string& bytes, const std::string& origin = "<memory>");
std::string encode(const Tensor& img);

/// Sorted *.pgm / *.ppm files directly inside `dir`.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace scnet::image_io
