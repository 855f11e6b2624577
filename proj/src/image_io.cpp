#include "scnet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "scnet/error.hpp"

namespace scnet::image_io {

namespace {

struct Cursor {
  const std::string& s;
  std::size_t pos = 0;
  const std::string& origin;

  void skip_space_and_comments() {
    while (pos < s.size()) {
      if (std::isspace(static_cast<unsigned char>(s[pos]))) {
        ++pos;
      } else if (s[pos] == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      v = v * 10 + static_cast<std::size_t>(s[pos] - '0');
      if (v > (1u << 24)) throw DataError(origin + ": " + what + " out of range");
      ++pos;
    }
    if (pos == start) throw DataError(origin + ": malformed header, expected " + what);
    return v;
  }
};

}  // namespace

Tensor decode(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw DataError(origin + ": not a binary PGM/PPM file (expected P5 or P6)");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  Cursor cur{bytes, 2, origin};
  const std::size_t width = cur.number("width");
  const std::size_t height = cur.number("height");
  const std::size_t maxval = cur.number("maxval");
  if (width == 0 || height == 0) throw DataError(origin + ": zero image dimension");
  if (maxval != 255) throw DataError(origin + ": unsupported maxval " + std::to_string(maxval) + " (need 255)");
  if (cur.pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[cur.pos]))) {
    throw DataError(origin + ": malformed header");
  }
  ++cur.pos;
  const std::size_t n = channels * height * width;
  if (bytes.size() - cur.pos < n) throw DataError(origin + ": truncated pixel data");

  Tensor img({channels, height, width});
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + cur.pos);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        img(c, y, x) = static_cast<double>(px[(y * width + x) * channels + c]) / 255.0;
  return img;
}

std::string encode(const Tensor& img) {
  require_rank(img, 3, "image encode");
  const std::size_t channels = img.dim(0), height = img.dim(1), width = img.dim(2);
  if (channels != 1 && channels != 3) {
    throw ShapeError("image encode: need 1 or 3 channels, got " + std::to_string(channels));
  }
  std::ostringstream os;
  os << (channels == 1 ? "P5" : "P6") << '\n' << width << ' ' << height << "\n255\n";
  std::string out = os.str();
  const std::size_t header = out.size();
  out.resize(header + channels * height * width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = img(c, y, x);
        const double q = std::isnan(v) ? 0.0 : std::round(std::clamp(v, 0.0, 1.0) * 255.0);
        out[header + (y * width + x) * channels + c] = static_cast<char>(static_cast<unsigned char>(q));
      }
  return out;
}

Tensor load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode(ss.str(), path.string());
}

void save(const std::filesystem::path& path, const Tensor& img) {
  const std::string bytes = encode(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace scnet::image_io
