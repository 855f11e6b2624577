#pragma once

// 2-D DFT, radial frequency bands and the band-similarity (IPFS) curves.
//
// Spatial planes are rank-2 tensors H×W; images are C×H×W. Frequencies are
// indexed with DC at (0,0). The centred integer frequency of row u is
// u' = ((u + H/2) mod H) − H/2, and the normalized radius is
// r(u,v) = sqrt((u'/H)² + (v'/W)²), which lies in [0, √2/2].

#include <complex>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "scnet/tensor.hpp"

namespace scnet::spectrum {

using Complex = std::complex<double>;

constexpr double kMaxRadius = 0.70710678118654752440;  // √2 / 2
constexpr double kDefaultCutoff = 0.25;
constexpr std::size_t kDefaultBands = 5;
constexpr double kEmptyBandNorm = 1e-12;

struct Spectrum2D {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Complex> coeffs;  // row-major H×W, unnormalized

  Complex& at(std::size_t u, std::size_t v) { return coeffs[u * width + v]; }
  const Complex& at(std::size_t u, std::size_t v) const { return coeffs[u * width + v]; }
};

/// 1-D unnormalized DFT in place; radix-2 when the length is a power of
/// two, direct summation otherwise. `inverse` flips the exponent sign
/// without scaling.
void dft1(std::vector<Complex>& line, bool inverse);

Spectrum2D dft2(const Tensor& plane);
/// Complex inverse (with the 1/(H·W) factor).
std::vector<Complex> idft2_complex(const Spectrum2D& spec);
/// Real part of the inverse; throws NumericError when the imaginary residue
/// exceeds 1e-10 relative to the largest real magnitude (floor 1).
Tensor idft2(const Spectrum2D& spec);

double normalized_radius(std::size_t u, std::size_t v, std::size_t height, std::size_t width);

/// Partition of the H×W frequency grid into `count` equal-width annuli over
/// [0, √2/2]. Band i holds frequencies with edges[i] ≤ r < edges[i+1]; the
/// last band is closed at √2/2.
struct BandSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t count = 0;
  std::vector<double> edges;                    // count + 1 radii
  std::vector<std::size_t> band_of;             // band index per (u,v), row-major
  std::vector<std::size_t> population;          // frequencies per band

  bool empty_band(std::size_t i) const { return population.at(i) == 0; }
  bool in_band(std::size_t i, std::size_t u, std::size_t v) const { return band_of[u * width + v] == i; }
  /// Binary H×W mask of band i.
  Tensor mask(std::size_t i) const;
};

BandSet band_masks(std::size_t height, std::size_t width, std::size_t count);

Tensor band_filter(const Tensor& plane, const BandSet& bands, std::size_t i);
/// All bands at once; one forward transform.
std::vector<Tensor> band_decompose(const Tensor& plane, const BandSet& bands);

/// Cosine similarity of the band-i components of a and b. Returns 0 when
/// either component has norm below 1e-12.
double band_similarity(const Tensor& a, const Tensor& b, const BandSet& bands, std::size_t i);

enum class TargetKind { noisy, ground_truth };
std::string to_string(TargetKind kind);  // "nos" / "gt"
TargetKind parse_target_kind(const std::string& s);

struct IpfsRecord {
  std::size_t iteration = 0;
  TargetKind target = TargetKind::noisy;
  std::vector<double> similarities;
};

/// Band similarities of each recorded output against `target`. Images are
/// C×H×W or N×C×H×W; similarities are averaged over every channel plane.
std::vector<IpfsRecord> ipfs_curve(const std::vector<std::pair<std::size_t, Tensor>>& outputs,
                                   const Tensor& target, TargetKind kind, const BandSet& bands);

/// CSV with header `iter,target,band_0,...`, six decimals per value.
std::string ipfs_csv(const std::vector<IpfsRecord>& records, std::size_t bands);

/// Share of non-DC spectral energy at normalized radius ≥ cutoff, summed
/// over channel planes for C×H×W input. Constant images give 0.
double hf_ratio(const Tensor& image, double cutoff = kDefaultCutoff);

}  // namespace scnet::spectrum
