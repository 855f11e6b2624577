#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "scnet/error.hpp"
#include "scnet/lipschitz.hpp"

using namespace scnet;
using namespace scnet::lipschitz;
using oracle::random_tensor;

namespace {

double unit_norm(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

Tensor scaled(Tensor t, double s) {
  for (double& v : t.storage()) v *= s;
  return t;
}

}  // namespace

TEST_SUITE("lipschitz") {
  TEST_CASE("kernel reshape layout") {
    const Tensor one = reshape_kernel(Tensor({1, 1, 1, 1}, 0.7));
    CHECK(one.shape() == Shape{1, 1});
    CHECK(one[0] == 0.7);
    Tensor w({2, 1, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    const Tensor m = reshape_kernel(w);
    CHECK(m.shape() == Shape{2, 4});
    CHECK(m.storage() == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
    const Tensor r = random_tensor({3, 2, 3, 3}, 1);
    const Tensor rm = reshape_kernel(r);
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t a = 0; a < 3; ++a)
          for (std::size_t b = 0; b < 3; ++b) CHECK(rm(o, (c * 3 + a) * 3 + b) == r(o, c, a, b));
    CHECK(unreshape_kernel(rm, r.shape()) == r);
  }

  TEST_CASE("power iteration") {
    Tensor d({2, 2}, {3, 0, 0, 1});
    auto s = make_state("diag", 2, 2, 1.0, 4);
    double est = 0.0;
    for (int i = 0; i < 50; ++i) est = power_iterate(s, d, 1);
    CHECK(std::abs(est - 3.0) < 1e-8);
    CHECK(std::abs(unit_norm(s.u) - 1.0) < 1e-12);
    CHECK(std::abs(unit_norm(s.v) - 1.0) < 1e-12);

    auto z = make_state("zero", 3, 5, 1.0, 2);
    const auto u0 = z.u, v0 = z.v;
    CHECK(power_iterate(z, Tensor({3, 5}), 10) == 0.0);
    CHECK(z.u == u0);
    CHECK(z.v == v0);
    CHECK(z.last_estimate == 0.0);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Tensor m = random_tensor({8, 18}, 50 + seed);
      const double ref = oracle::largest_singular_value(m);
      auto st = make_state("r", 8, 18, 1.0, seed);
      const double got = power_iterate(st, m, 500);
      CHECK(std::abs(got - ref) <= 1e-6 * ref);
      CHECK(st.last_estimate == got);
      CHECK(got >= 0.0);
      CHECK(std::abs(verified_norm(m, 500) - ref) <= 1e-6 * ref);
    }
  }

  TEST_CASE("clamp") {
    Tensor w = random_tensor({2, 2, 3, 3}, 3);
    auto s = make_state("c", 2, 18, 1.0, 1);
    // Scale so the largest singular value is 0.5.
    w = scaled(w, 0.5 / oracle::largest_singular_value(reshape_kernel(w)));
    power_iterate(s, reshape_kernel(w), 200);
    const Tensor keep = w;
    CHECK_FALSE(clamp_weights(w, s, 1.0));
    CHECK(w == keep);

    Tensor two({1, 1, 1, 1}, 2.0);
    auto s2 = make_state("two", 1, 1, 1.0, 1);
    power_iterate(s2, reshape_kernel(two), 5);
    CHECK(clamp_weights(two, s2, 1.0));
    CHECK(two[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(clamp_weights(two, s2, 0.0), ConfigError);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Tensor k = random_tensor({4, 3, 3, 3}, 70 + seed);
      k = scaled(k, 3.7 / oracle::largest_singular_value(reshape_kernel(k)));
      auto st = make_state("k", 4, 27, 1.0, seed);
      power_iterate(st, reshape_kernel(k), 300);
      CHECK(clamp_weights(k, st, 1.0));
      const double after = oracle::largest_singular_value(reshape_kernel(k));
      CHECK(after >= 0.999);
      CHECK(after <= 1.001);
      CHECK(verified_norm(reshape_kernel(k), 50, 1000 + seed) <= 1.0 * (1.0 + 1e-4));
      // A second clamp with a fresh estimate is (numerically) a no-op.
      const Tensor once = k;
      auto again = make_state("k2", 4, 27, 1.0, seed + 100);
      power_iterate(again, reshape_kernel(k), 300);
      clamp_weights(k, again, 1.0);
      CHECK(oracle::max_abs_diff(k, once) <= 1e-9 * once.max_abs());
    }
  }

  TEST_CASE("per-frequency gain") {
    const Tensor flat = per_frequency_gain(Tensor({1, 1, 1, 1}, -0.6), 8, 8);
    for (double v : flat.data()) CHECK(v == doctest::Approx(0.6).epsilon(1e-12));

    const Tensor box = per_frequency_gain(Tensor({1, 1, 3, 3}, 1.0 / 9.0), 16, 16);
    CHECK(box(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 1; i < box.size(); ++i) CHECK(box[i] < 1.0);

    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Tensor w = random_tensor({2, 2, 3, 3}, 90 + seed);
      const Tensor g = per_frequency_gain(w, 16, 16);
      const double circ = oracle::circular_conv_norm(w, 16, 16);
      double mx = 0.0;
      for (double v : g.data()) {
        CHECK(v <= circ + 1e-9);
        mx = std::max(mx, v);
      }
      CHECK(mx >= 0.99 * circ);
      // The operator norm never exceeds the reshaped-matrix proxy times √(Kh·Kw).
      CHECK(circ <= 3.0 * oracle::largest_singular_value(reshape_kernel(w)) + 1e-9);
    }
  }
}
