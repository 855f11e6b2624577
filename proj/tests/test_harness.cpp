#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "oracles.hpp"
#include "scnet/config.hpp"
#include "scnet/error.hpp"
#include "scnet/experiment.hpp"
#include "scnet/image_io.hpp"
#include "scnet/metrics.hpp"
#include "scnet/noise.hpp"
#include "scnet/report.hpp"

using namespace scnet;
using oracle::random_tensor;
using nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("scnet_unit_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("netpbm round trip within the quantization bound") {
    const auto dir = scratch_dir("pgm");
    for (std::size_t c : {1, 3}) {
      const Tensor x = random_tensor({c, 13, 17}, 3 + c, -0.2, 1.2);
      const auto path = dir / (c == 1 ? "a.pgm" : "a.ppm");
      image_io::save(path, x);
      const Tensor y = image_io::load(path);
      REQUIRE(y.shape() == x.shape());
      double worst = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(y[i] - std::clamp(x[i], 0.0, 1.0)));
      CHECK(worst <= 1.0 / 510.0 + 1e-15);
      CHECK(image_io::encode(y) == image_io::encode(x));
    }
    // Header comments and arbitrary whitespace.
    const std::string bytes = std::string("P5\n# made by hand\n2  1\n255\n") + char(0) + char(255);
    const Tensor t = image_io::decode(bytes);
    CHECK(t.shape() == Shape{1, 1, 2});
    CHECK(t[0] == 0.0);
    CHECK(t[1] == 1.0);
    CHECK_THROWS_AS(image_io::decode("P2\n2 1\n255\n0 0"), DataError);
    CHECK_THROWS_AS(image_io::decode("P5\n2 2\n255\n" + std::string(3, 'x')), DataError);
    CHECK_THROWS_AS(image_io::decode("P5\n2 2\n65535\n" + std::string(8, 'x')), DataError);
    CHECK_THROWS_AS(image_io::load(dir / "missing.pgm"), DataError);
    CHECK_THROWS_AS(image_io::encode(Tensor({2, 4, 4})), ShapeError);
    const auto list = image_io::list_images(dir);
    REQUIRE(list.size() == 2);
    CHECK(list[0].filename() == "a.pgm");
  }

  TEST_CASE("psnr") {
    const Tensor a = random_tensor({1, 16, 16}, 1, 0.1, 0.8);
    CHECK(metrics::psnr(a, a) == std::numeric_limits<double>::infinity());
    Tensor b = a;
    for (double& v : b.storage()) v += 0.1;
    CHECK(metrics::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Tensor p = random_tensor({2, 9, 11}, 10 + s, 0, 1), q = random_tensor({2, 9, 11}, 20 + s, 0, 1);
      CHECK(std::abs(metrics::psnr(p, q) - oracle::psnr(p, q)) < 1e-8);
      CHECK(metrics::psnr(p, q) == metrics::psnr(q, p));
    }
    CHECK(metrics::format_metric(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(metrics::format_metric(20.0) == "20.000000");
  }

  TEST_CASE("ssim") {
    const Tensor a = random_tensor({32, 32}, 2, 0, 1);
    CHECK(metrics::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metrics::ssim(Tensor({20, 20}, 0.5), Tensor({20, 20}, 0.5)) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Tensor p = random_tensor({32, 32}, 30 + s, 0, 1);
      Tensor q = p;
      const Tensor n = random_tensor({32, 32}, 40 + s, -0.2, 0.2);
      for (std::size_t i = 0; i < q.size(); ++i) q[i] += n[i];
      const double got = metrics::ssim(p, q);
      CHECK(std::abs(got - oracle::ssim_plane(p, q)) < 1e-8);
      CHECK(got == doctest::Approx(metrics::ssim(q, p)).epsilon(1e-12));
      CHECK(got < 1.0);
    }
    // Channel planes are averaged.
    const Tensor p = random_tensor({2, 16, 16}, 50, 0, 1), q = random_tensor({2, 16, 16}, 51, 0, 1);
    const auto plane = [](const Tensor& t, std::size_t c) {
      return Tensor({16, 16}, std::vector<double>(t.data().begin() + c * 256, t.data().begin() + (c + 1) * 256));
    };
    const double mean = 0.5 * (oracle::ssim_plane(plane(p, 0), plane(q, 0)) + oracle::ssim_plane(plane(p, 1), plane(q, 1)));
    CHECK(std::abs(metrics::ssim(p, q) - mean) < 1e-8);
    CHECK_THROWS_AS(metrics::ssim(Tensor({8, 8}), Tensor({8, 8})), DataError);
  }

  TEST_CASE("config defaults, round trip and hash") {
    const config::ExperimentConfig def = config::from_json(json::object());
    CHECK(def.train.epochs == 30);
    CHECK(def.noise.kind == noise::NoiseKind::gaussian_fixed);
    CHECK(def.noise.lo == 25.0);
    CHECK(def.dataset.count == 16);
    CHECK(def.dataset.size == 128);
    CHECK_FALSE(def.model.ssr.enabled);
    const json doc = config::to_json(def);
    CHECK(config::config_hash(config::from_json(doc)) == config::config_hash(def));
    CHECK(config::to_json(config::from_json(doc)) == doc);
    CHECK(config::config_hash(def).size() == 16);

    config::ExperimentConfig moved = def;
    moved.output_dir = "elsewhere";
    CHECK(config::config_hash(moved) == config::config_hash(def));
    config::ExperimentConfig other = def;
    other.train.seed = 2;
    CHECK(config::config_hash(other) != config::config_hash(def));

    const auto cfg = config::from_json(json::parse(R"({
      "noise": {"kind": "poisson", "lambda": [5, 50], "seed": 3},
      "model": {"channels": [8, 16], "ssr": {"k": 4}, "lipschitz": {"beta": 2.0}},
      "toggles": {"ssr": true, "lipschitz": true, "fsd": true},
      "train": {"epochs": 2, "batch_size": 4},
      "bands": 4
    })"));
    CHECK(cfg.noise.kind == noise::NoiseKind::poisson_range);
    CHECK(cfg.noise.hi == 50.0);
    CHECK(cfg.model.ssr.enabled);
    CHECK(cfg.model.ssr.k == 4);
    CHECK(cfg.model.lipschitz.enabled);
    CHECK(cfg.model.lipschitz.beta == 2.0);
    CHECK(cfg.model.fsd.enabled);
    CHECK(cfg.train.bands == 4);
    CHECK(config::to_json(config::from_json(config::to_json(cfg))) == config::to_json(cfg));
  }

  TEST_CASE("config rejects unknown keys and bad values") {
    const std::vector<std::string> bad = {
        R"({"nosie": {}})",
        R"({"noise": {"kind": "gaussian", "sigma": 25, "colour": 1}})",
        R"({"model": {"ssr": {"k": 4, "rank": 2}}})",
        R"({"model": {"lipschitz": {"gamma": 1}}})",
        R"({"train": {"epochs": 0}})",
        R"({"train": {"lr": "fast"}})",
        R"({"toggles": {"attention": true}})",
        R"({"noise": {"kind": "gaussian", "sigma": -1}})",
        R"({"noise": {"kind": "poisson", "sigma": 25}})",
        R"({"noise": {"kind": "gaussian_fixed", "sigma": [5, 50]}})",
        R"({"noise": {"kind": "gaussian", "sigma": [50, 5]}})",
        R"({"dataset": {"kind": "dir"}})",
        R"({"dataset": {"kind": "toy", "path": "x"}})",
        R"({"model": {"ssr": {"level": 3}}, "toggles": {"ssr": true}})",
        R"([1, 2])",
    };
    for (const auto& text : bad) {
      INFO(text);
      CHECK_THROWS_AS(config::from_json(json::parse(text)), ConfigError);
    }
    try {
      config::parse_text("{\"noise\": {", "broken.json");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("broken.json") != std::string::npos);
      CHECK(msg.find('\n') == std::string::npos);
    }
    CHECK(config::noise_from_json(json::parse(R"({"kind": "gaussian", "sigma": 10})")).lo == 10.0);
    CHECK(config::noise_from_json(json::parse(R"({"noise": {"kind": "poisson", "lambda": 30}})")).kind ==
          noise::NoiseKind::poisson_fixed);
  }

  TEST_CASE("output directory precedence") {
    config::ExperimentConfig cfg;
    cfg.output_dir = "from_config";
    ::unsetenv("SCNET_OUTPUT_DIR");
    CHECK(config::resolve_output_dir("", cfg) == "from_config");
    ::setenv("SCNET_OUTPUT_DIR", "from_env", 1);
    CHECK(config::resolve_output_dir("", cfg) == "from_env");
    CHECK(config::resolve_output_dir("from_flag", cfg) == "from_flag");
    ::unsetenv("SCNET_OUTPUT_DIR");
  }

  TEST_CASE("csv output is byte-stable") {
    const report::Header h{"0123456789abcdef", 7};
    CHECK(report::comment_line(h) == "# config_hash=0123456789abcdef,seed=7\n");
    const std::vector<train::MetricRow> rows = {{1, 0.5, 20.25, 0.75, 3}, {2, 0.25, 21.5, 0.8, 0}};
    const std::string m = report::metrics_csv(h, rows);
    CHECK(m == report::metrics_csv(h, rows));
    CHECK(m.rfind("# config_hash=0123456789abcdef,seed=7\nepoch,loss,psnr_probe,ssim_probe,clamp_hits\n", 0) == 0);
    const std::vector<spectrum::IpfsRecord> recs = {{0, spectrum::TargetKind::noisy, {1.0, 0.5}},
                                                    {0, spectrum::TargetKind::ground_truth, {0.25, -0.125}}};
    CHECK(report::ipfs_csv(h, recs, 2) ==
          "# config_hash=0123456789abcdef,seed=7\niter,target,band_0,band_1\n0,nos,1.000000,0.500000\n"
          "0,gt,0.250000,-0.125000\n");
    const std::vector<report::EvalRow> ev = {{"a.pgm", std::numeric_limits<double>::infinity(), 1.0, 30.0, 0.9}};
    CHECK(report::eval_csv(h, ev).find("a.pgm,inf,1.000000,30.000000,0.900000") != std::string::npos);
    const std::string ab = report::ablation_csv(h, {0, 1}, {{false, true, true, {25.0, 26.0}, {0.7, 0.8}}});
    CHECK(ab.find("fsd,lipschitz,ssr,psnr_mean,ssim_mean,psnr_seed0,psnr_seed1") != std::string::npos);
    CHECK(ab.find("0,1,1,25.500000,0.750000,25.000000,26.000000") != std::string::npos);

    const auto dir = scratch_dir("csv");
    report::write_file(dir / "m.csv", m);
    CHECK(report::read_file(dir / "m.csv") == m);
    CHECK_FALSE(std::filesystem::exists(dir / "m.csv.tmp"));
  }
}

TEST_SUITE("experiment") {
  config::ExperimentConfig tiny_config() {
    return config::from_json(json::parse(R"({
      "model": {"channels": [4, 6], "bottleneck": 8, "init_seed": 3},
      "train": {"epochs": 2, "batch_size": 2, "patch_size": 16, "crops_per_image": 2, "probe_images": 2},
      "dataset": {"kind": "toy", "count": 3, "size": 48, "seed": 4}
    })"));
  }

  TEST_CASE("grid parsing") {
    using experiment::Toggle;
    CHECK(experiment::parse_grid("ssr,fsd") == std::vector<Toggle>{Toggle::fsd, Toggle::ssr});  // canonical order
    CHECK(experiment::parse_grid("lipschitz") == std::vector<Toggle>{Toggle::lipschitz});
    for (const char* bad : {"", "ssr,", "ssr,ssr", "fsd,dropout", "FSD"}) {
      INFO(std::string(bad));
      CHECK_THROWS_AS(experiment::parse_grid(bad), ConfigError);
    }
  }

  TEST_CASE("artifacts round trip through checkpoint, probe and eval") {
    const auto dir = scratch_dir("experiment");
    const auto cfg = tiny_config();
    const auto res = experiment::run_training(cfg, dir / "run");
    REQUIRE(res.train.metrics.size() == 2);

    // Curves rebuilt from the stored probe outputs match the in-memory ones.
    for (auto kind : {spectrum::TargetKind::noisy, spectrum::TargetKind::ground_truth}) {
      report::Header h;
      const auto recs = experiment::ipfs_from_probe(dir / "run", kind, cfg.train.bands, &h);
      CHECK(h.config_hash == config::config_hash(cfg));
      std::vector<spectrum::IpfsRecord> ref;
      for (const auto& r : res.train.ipfs)
        if (r.target == kind) ref.push_back(r);
      REQUIRE(recs.size() == ref.size());
      for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(recs[i].iteration == ref[i].iteration);
        for (std::size_t b = 0; b < cfg.train.bands; ++b)
          CHECK(recs[i].similarities[b] == doctest::Approx(ref[i].similarities[b]).epsilon(1e-12));
      }
    }

    config::ExperimentConfig loaded;
    const auto net = experiment::model_from_checkpoint(dir / "run" / experiment::kCheckpointFile, &loaded);
    CHECK(config::config_hash(loaded) == config::config_hash(cfg));

    std::filesystem::create_directories(dir / "gt");
    std::filesystem::create_directories(dir / "noisy");
    for (std::uint64_t i = 0; i < 2; ++i) {
      const Tensor clean = random_tensor({1, 16, 16}, 40 + i, 0.0, 1.0);
      const std::string name = "img" + std::to_string(i) + ".pgm";
      image_io::save(dir / "gt" / name, clean);
      image_io::save(dir / "noisy" / name, noise::add_gaussian(clean, 25.0, i));
    }
    const auto same = experiment::evaluate(*net, dir / "gt", dir / "gt");
    REQUIRE(same.size() == 2);
    for (const auto& r : same) {
      CHECK(std::isinf(r.psnr_in));
      CHECK(r.ssim_in == 1.0);
    }
    const auto rows = experiment::evaluate(*net, dir / "noisy", dir / "gt", dir / "out");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].image == "img0.pgm");
    CHECK(std::isfinite(rows[0].psnr_out));
    CHECK(std::filesystem::exists(dir / "out" / "img1.pgm"));

    std::filesystem::remove(dir / "gt" / "img1.pgm");
    CHECK_THROWS_AS(experiment::evaluate(*net, dir / "noisy", dir / "gt"), DataError);
  }

  TEST_CASE("ablation covers every toggle combination") {
    const auto res = experiment::ablate(tiny_config(), experiment::parse_grid("fsd,ssr"), 2);
    CHECK(res.seeds == std::vector<std::uint64_t>{1, 2});
    REQUIRE(res.rows.size() == 4);
    std::set<std::pair<bool, bool>> combos;
    for (const auto& r : res.rows) {
      combos.insert({r.fsd, r.ssr});
      CHECK_FALSE(r.lipschitz);
      CHECK(r.psnr.size() == 2);
    }
    CHECK(combos.size() == 4);
    CHECK_THROWS_AS(experiment::ablate(tiny_config(), {}, 0), ConfigError);
  }
}
