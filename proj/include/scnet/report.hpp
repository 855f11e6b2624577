#pragma once

// CSV serialization of run logs. Every file opens with a comment line
// "# config_hash=<hex>,seed=<n>" and carries no timestamps, so equal
// configurations produce byte-identical files.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scnet/spectrum.hpp"
#include "scnet/train.hpp"

namespace scnet::report {

struct Header {
  std::string config_hash;
  std::uint64_t seed = 0;
};

std::string comment_line(const Header& h);

std::string metrics_csv(const Header& h, const std::vector<train::MetricRow>& rows);
std::string ipfs_csv(const Header& h, const std::vector<spectrum::IpfsRecord>& recs, std::size_t bands);
std::string routing_csv(const Header& h, const std::vector<train::RoutingRow>& rows);
std::string spectral_csv(const Header& h, const std::vector<train::SpectralRow>& rows);

struct EvalRow {
  std::string image;
  double psnr_in = 0.0;
  double ssim_in = 0.0;
  double psnr_out = 0.0;
  double ssim_out = 0.0;
};
std::string eval_csv(const Header& h, const std::vector<EvalRow>& rows);

struct AblationRow {
  bool fsd = false;
  bool lipschitz = false;
  bool ssr = false;
  std::vector<double> psnr;  // one per seed
  std::vector<double> ssim;
};
std::string ablation_csv(const Header& h, const std::vector<std::uint64_t>& seeds,
                         const std::vector<AblationRow>& rows);

/// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

}  // namespace scnet::report
