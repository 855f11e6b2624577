#include "scnet/report.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include "scnet/error.hpp"
#include "scnet/metrics.hpp"

namespace scnet::report {

using metrics::format_metric;

std::string comment_line(const Header& h) {
  return "# config_hash=" + h.config_hash + ",seed=" + std::to_string(h.seed) + "\n";
}

std::string metrics_csv(const Header& h, const std::vector<train::MetricRow>& rows) {
  std::ostringstream os;
  os << comment_line(h) << "epoch,loss,psnr_probe,ssim_probe,clamp_hits\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << format_metric(r.loss) << ',' << format_metric(r.psnr_probe) << ','
       << format_metric(r.ssim_probe) << ',' << r.clamp_hits << '\n';
  }
  return os.str();
}

std::string ipfs_csv(const Header& h, const std::vector<spectrum::IpfsRecord>& recs, std::size_t bands) {
  return comment_line(h) + spectrum::ipfs_csv(recs, bands);
}

std::string routing_csv(const Header& h, const std::vector<train::RoutingRow>& rows) {
  std::ostringstream os;
  os << comment_line(h) << "image_id,epoch,swapped,hf_input,hf_target\n";
  for (const auto& r : rows) {
    os << r.image_id << ',' << r.epoch << ',' << (r.swapped ? 1 : 0) << ',' << format_metric(r.hf_input) << ','
       << format_metric(r.hf_target) << '\n';
  }
  return os.str();
}

std::string spectral_csv(const Header& h, const std::vector<train::SpectralRow>& rows) {
  std::ostringstream os;
  os << comment_line(h) << "epoch,layer,sigma\n";
  for (const auto& r : rows) os << r.epoch << ',' << r.layer << ',' << format_metric(r.sigma) << '\n';
  return os.str();
}

std::string eval_csv(const Header& h, const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << comment_line(h) << "image,psnr_in,ssim_in,psnr_out,ssim_out\n";
  for (const auto& r : rows) {
    os << r.image << ',' << format_metric(r.psnr_in) << ',' << format_metric(r.ssim_in) << ','
       << format_metric(r.psnr_out) << ',' << format_metric(r.ssim_out) << '\n';
  }
  return os.str();
}

std::string ablation_csv(const Header& h, const std::vector<std::uint64_t>& seeds,
                         const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << comment_line(h) << "fsd,lipschitz,ssr,psnr_mean,ssim_mean";
  for (auto s : seeds) os << ",psnr_seed" << s;
  os << '\n';
  for (const auto& r : rows) {
    const double n = static_cast<double>(r.psnr.size());
    os << (r.fsd ? 1 : 0) << ',' << (r.lipschitz ? 1 : 0) << ',' << (r.ssr ? 1 : 0) << ','
       << format_metric(std::accumulate(r.psnr.begin(), r.psnr.end(), 0.0) / n) << ','
       << format_metric(std::accumulate(r.ssim.begin(), r.ssim.end(), 0.0) / n);
    for (double p : r.psnr) os << ',' << format_metric(p);
    os << '\n';
  }
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DataError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace scnet::report
