#include "scnet/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "scnet/error.hpp"

namespace scnet::spectrum {

namespace {

bool is_power_of_two(std::size_t n) { return n && !(n & (n - 1)); }

Complex twiddle(std::size_t k, std::size_t n, bool inverse) {
  const double angle = (inverse ? 2.0 : -2.0) * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
  return {std::cos(angle), std::sin(angle)};
}

void fft_radix2(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t start = 0; start < n; start += len)
      for (std::size_t k = 0; k < half; ++k) {
        const Complex w = twiddle(k * (n / len), n, inverse);
        const Complex t = w * a[start + k + half];
        a[start + k + half] = a[start + k] - t;
        a[start + k] += t;
      }
  }
}

void dft_direct(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a[j] * twiddle((j * k) % n, n, inverse);
    out[k] = s;
  }
  a = std::move(out);
}

void transform_2d(std::vector<Complex>& c, std::size_t h, std::size_t w, bool inverse) {
  std::vector<Complex> line(w);
  for (std::size_t i = 0; i < h; ++i) {
    std::copy_n(c.begin() + i * w, w, line.begin());
    dft1(line, inverse);
    std::copy(line.begin(), line.end(), c.begin() + i * w);
  }
  line.resize(h);
  for (std::size_t j = 0; j < w; ++j) {
    for (std::size_t i = 0; i < h; ++i) line[i] = c[i * w + j];
    dft1(line, inverse);
    for (std::size_t i = 0; i < h; ++i) c[i * w + j] = line[i];
  }
}

// Splits a C×H×W or N×C×H×W (or H×W) tensor into H×W planes.
std::vector<Tensor> planes_of(const Tensor& t) {
  if (t.rank() < 2) throw ShapeError("spectrum: expected an image, got " + shape_str(t.shape()));
  const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  const std::size_t count = t.size() / (h * w);
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t p = 0; p < count; ++p) {
    out.emplace_back(Shape{h, w}, std::vector<double>(t.data().begin() + p * h * w,
                                                     t.data().begin() + (p + 1) * h * w));
  }
  return out;
}

long centred(std::size_t u, std::size_t n) {
  const auto half = static_cast<long>(n / 2);
  return static_cast<long>((u + n / 2) % n) - half;
}

}  // namespace

void dft1(std::vector<Complex>& line, bool inverse) {
  if (line.size() <= 1) return;
  if (is_power_of_two(line.size())) {
    fft_radix2(line, inverse);
  } else {
    dft_direct(line, inverse);
  }
}

Spectrum2D dft2(const Tensor& plane) {
  require_rank(plane, 2, "dft2");
  const std::size_t h = plane.dim(0), w = plane.dim(1);
  if (h == 0 || w == 0) throw ShapeError("dft2: empty plane " + shape_str(plane.shape()));
  Spectrum2D s{h, w, std::vector<Complex>(plane.data().begin(), plane.data().end())};
  transform_2d(s.coeffs, h, w, false);
  return s;
}

std::vector<Complex> idft2_complex(const Spectrum2D& spec) {
  std::vector<Complex> c = spec.coeffs;
  transform_2d(c, spec.height, spec.width, true);
  const double scale = 1.0 / static_cast<double>(spec.height * spec.width);
  for (Complex& z : c) z *= scale;
  return c;
}

Tensor idft2(const Spectrum2D& spec) {
  const std::vector<Complex> c = idft2_complex(spec);
  Tensor out({spec.height, spec.width});
  double max_real = 1.0, max_imag = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    out[i] = c[i].real();
    max_real = std::max(max_real, std::abs(c[i].real()));
    max_imag = std::max(max_imag, std::abs(c[i].imag()));
  }
  if (max_imag > 1e-10 * max_real) {
    throw NumericError("idft2: imaginary residue " + std::to_string(max_imag) + " on a real-valued inverse");
  }
  return out;
}

double normalized_radius(std::size_t u, std::size_t v, std::size_t height, std::size_t width) {
  const double fu = static_cast<double>(centred(u, height)) / static_cast<double>(height);
  const double fv = static_cast<double>(centred(v, width)) / static_cast<double>(width);
  return std::sqrt(fu * fu + fv * fv);
}

Tensor BandSet::mask(std::size_t i) const {
  if (i >= count) throw ShapeError("band mask: index " + std::to_string(i) + " out of " + std::to_string(count));
  Tensor m({height, width});
  for (std::size_t p = 0; p < band_of.size(); ++p) m[p] = band_of[p] == i ? 1.0 : 0.0;
  return m;
}

BandSet band_masks(std::size_t height, std::size_t width, std::size_t count) {
  if (count == 0) throw ConfigError("band_masks: band count must be at least 1");
  if (height < 2 || width < 2) {
    throw ShapeError("band_masks: grid must be at least 2x2, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  BandSet bs;
  bs.height = height;
  bs.width = width;
  bs.count = count;
  bs.edges.resize(count + 1);
  for (std::size_t i = 0; i <= count; ++i) bs.edges[i] = static_cast<double>(i) * kMaxRadius / static_cast<double>(count);
  bs.band_of.resize(height * width);
  bs.population.assign(count, 0);
  for (std::size_t u = 0; u < height; ++u)
    for (std::size_t v = 0; v < width; ++v) {
      const double r = normalized_radius(u, v, height, width);
      std::size_t i = 0;
      while (i + 1 < count && r >= bs.edges[i + 1]) ++i;
      bs.band_of[u * width + v] = i;
      ++bs.population[i];
    }
  return bs;
}

namespace {

void require_grid(const Tensor& plane, const BandSet& bands, const char* what) {
  require_rank(plane, 2, what);
  if (plane.dim(0) != bands.height || plane.dim(1) != bands.width) {
    throw ShapeError(std::string(what) + ": plane " + shape_str(plane.shape()) + " does not match band grid " +
                     std::to_string(bands.height) + "x" + std::to_string(bands.width));
  }
}

Tensor masked_inverse(const Spectrum2D& full, const BandSet& bands, std::size_t i) {
  Spectrum2D s{full.height, full.width, std::vector<Complex>(full.coeffs.size())};
  for (std::size_t p = 0; p < s.coeffs.size(); ++p) {
    if (bands.band_of[p] == i) s.coeffs[p] = full.coeffs[p];
  }
  return idft2(s);
}

double cosine(const Tensor& a, const Tensor& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    ab += a[p] * b[p];
    aa += a[p] * a[p];
    bb += b[p] * b[p];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na < kEmptyBandNorm || nb < kEmptyBandNorm) return 0.0;
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

}  // namespace

Tensor band_filter(const Tensor& plane, const BandSet& bands, std::size_t i) {
  require_grid(plane, bands, "band_filter");
  if (i >= bands.count) throw ShapeError("band_filter: band " + std::to_string(i) + " out of range");
  return masked_inverse(dft2(plane), bands, i);
}

std::vector<Tensor> band_decompose(const Tensor& plane, const BandSet& bands) {
  require_grid(plane, bands, "band_decompose");
  const Spectrum2D s = dft2(plane);
  std::vector<Tensor> out;
  out.reserve(bands.count);
  for (std::size_t i = 0; i < bands.count; ++i) out.push_back(masked_inverse(s, bands, i));
  return out;
}

double band_similarity(const Tensor& a, const Tensor& b, const BandSet& bands, std::size_t i) {
  require_same_shape(a, b, "band_similarity");
  return cosine(band_filter(a, bands, i), band_filter(b, bands, i));
}

std::string to_string(TargetKind kind) { return kind == TargetKind::noisy ? "nos" : "gt"; }

TargetKind parse_target_kind(const std::string& s) {
  if (s == "nos" || s == "noisy") return TargetKind::noisy;
  if (s == "gt" || s == "ground_truth") return TargetKind::ground_truth;
  throw ConfigError("unknown IPFS target '" + s + "' (expected nos or gt)");
}

std::vector<IpfsRecord> ipfs_curve(const std::vector<std::pair<std::size_t, Tensor>>& outputs,
                                   const Tensor& target, TargetKind kind, const BandSet& bands) {
  if (outputs.empty()) throw DataError("ipfs_curve: no recorded outputs");
  const std::vector<Tensor> target_planes = planes_of(target);
  std::vector<std::vector<Tensor>> target_bands;
  target_bands.reserve(target_planes.size());
  for (const Tensor& p : target_planes) target_bands.push_back(band_decompose(p, bands));

  std::vector<IpfsRecord> records;
  records.reserve(outputs.size());
  for (const auto& [iteration, image] : outputs) {
    require_same_shape(image, target, "ipfs_curve");
    const std::vector<Tensor> planes = planes_of(image);
    IpfsRecord rec{iteration, kind, std::vector<double>(bands.count, 0.0)};
    for (std::size_t p = 0; p < planes.size(); ++p) {
      const std::vector<Tensor> comp = band_decompose(planes[p], bands);
      for (std::size_t i = 0; i < bands.count; ++i) rec.similarities[i] += cosine(comp[i], target_bands[p][i]);
    }
    for (double& s : rec.similarities) s /= static_cast<double>(planes.size());
    records.push_back(std::move(rec));
  }
  return records;
}

std::string ipfs_csv(const std::vector<IpfsRecord>& records, std::size_t bands) {
  std::string out = "iter,target";
  for (std::size_t i = 0; i < bands; ++i) out += ",band_" + std::to_string(i);
  out += '\n';
  char buf[64];
  for (const IpfsRecord& r : records) {
    out += std::to_string(r.iteration) + ',' + to_string(r.target);
    for (double s : r.similarities) {
      std::snprintf(buf, sizeof buf, ",%.6f", s == 0.0 ? 0.0 : s);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

double hf_ratio(const Tensor& image, double cutoff) {
  double high = 0.0, total = 0.0, all = 0.0;
  for (const Tensor& plane : planes_of(image)) {
    const Spectrum2D s = dft2(plane);
    for (std::size_t u = 0; u < s.height; ++u)
      for (std::size_t v = 0; v < s.width; ++v) {
        const double e = std::norm(s.at(u, v));
        all += e;
        if (u == 0 && v == 0) continue;
        total += e;
        if (normalized_radius(u, v, s.height, s.width) >= cutoff) high += e;
      }
  }
  // Rounding leaves ~1e-30 relative AC energy on constant planes.
  if (total <= 1e-20 * all || total == 0.0) return 0.0;
  return high / total;
}

}  // namespace scnet::spectrum
