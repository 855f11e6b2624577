#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "scnet/error.hpp"
#include "scnet/ssr.hpp"

using namespace scnet;
using namespace scnet::ssr;
using oracle::random_tensor;

namespace {

std::vector<double> project(const Tensor& v, const std::vector<double>& x, double floor, double rel = 0.0) {
  Tape t;
  const Tensor y = t.value(project_reconstruct(t, t.constant(v), t.constant(Tensor({x.size()}, x)), {rel, floor}));
  return y.storage();
}

double norm(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) { return random_tensor({n}, seed).storage(); }

ConvParams conv(Tape& t, std::size_t o, std::size_t c, std::size_t k, std::uint64_t seed, double scale = 0.3) {
  Tensor w = random_tensor({o, c, k, k}, seed);
  for (double& v : w.storage()) v *= scale;
  return {t.parameter(w), t.parameter(random_tensor({o}, seed + 1, -0.1, 0.1))};
}

}  // namespace

TEST_SUITE("ssr") {
  TEST_CASE("freq split") {
    Tape t;
    const auto cst = freq_split(t, t.constant(Tensor({1, 2, 8, 8}, 0.6)));
    for (double v : t.value(cst.high).data()) CHECK(std::abs(v) < 1e-15);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Tensor f = random_tensor({1, 2, 8, 8}, 10 + s);
      const auto sp = freq_split(t, t.constant(f));
      CHECK(oracle::max_abs_diff(t.value(sp.low), oracle::avgpool2(f)) < 1e-15);
      const Tensor up = oracle::bilinear_up2(t.value(sp.low));
      Tensor re = up;
      for (std::size_t i = 0; i < re.size(); ++i) re[i] += t.value(sp.high)[i];
      CHECK(oracle::max_abs_diff(re, f) < 1e-12);
      // Inputs already in the upsampled range still reconstruct.
      const Tensor g = oracle::bilinear_up2(random_tensor({1, 2, 4, 4}, 20 + s));
      const auto sg = freq_split(t, t.constant(g));
      const Tensor hi_ref = [&] {
        Tensor h = g;
        const Tensor u = oracle::bilinear_up2(oracle::avgpool2(g));
        for (std::size_t i = 0; i < h.size(); ++i) h[i] -= u[i];
        return h;
      }();
      CHECK(oracle::max_abs_diff(t.value(sg.high), hi_ref) < 1e-12);
    }
  }

  TEST_CASE("basis input") {
    Tape t;
    Enhancer zero;
    for (ConvParams* p : {&zero.up_low, &zero.up_high, &zero.down_low, &zero.down_high})
      *p = {t.constant(random_tensor({3, 2, 3, 3}, 1)), t.constant(Tensor({3}))};
    const Tensor xe0 = t.value(build_basis_input(t, t.constant(Tensor({1, 2, 8, 8})), t.constant(Tensor({1, 2, 8, 8})), zero));
    CHECK(xe0.shape() == Shape{1, 12, 8, 8});
    for (double v : xe0.data()) CHECK(v == 0.0);

    // Identity 1×1 enhancers on constant inputs: the low path carries the
    // constant, the high path is zero.
    Enhancer id;
    Tensor eye({2, 2, 1, 1});
    eye(0, 0, 0, 0) = eye(1, 1, 0, 0) = 1.0;
    for (ConvParams* p : {&id.up_low, &id.up_high, &id.down_low, &id.down_high}) *p = {t.constant(eye), t.constant(Tensor({2}))};
    Tensor a({1, 2, 4, 4}), b({1, 2, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) {
      a[i] = 0.2;
      a[16 + i] = -0.5;
      b[i] = 1.5;
      b[16 + i] = 0.75;
    }
    const Tensor xe = t.value(build_basis_input(t, t.constant(a), t.constant(b), id));
    const std::vector<double> expect = {0.2, -0.5, 0, 0, 1.5, 0.75, 0, 0};
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(xe(0, c, i, j) - expect[c]) < 1e-15);

    // Random inputs against a composition of oracle primitives.
    const Tensor xu = random_tensor({2, 2, 8, 8}, 3), xd = random_tensor({2, 2, 8, 8}, 4);
    Enhancer en;
    std::vector<std::pair<Tensor, Tensor>> wb;
    for (ConvParams* p : {&en.up_low, &en.up_high, &en.down_low, &en.down_high}) {
      wb.emplace_back(random_tensor({3, 2, 3, 3}, 10 + wb.size()), random_tensor({3}, 20 + wb.size()));
      *p = {t.constant(wb.back().first), t.constant(wb.back().second)};
    }
    const Tensor got = t.value(build_basis_input(t, t.constant(xu), t.constant(xd), en));
    auto branch = [&](const Tensor& x, std::size_t lo, std::size_t hi) {
      const Tensor low = oracle::avgpool2(x);
      const Tensor up_low = oracle::bilinear_up2(low);
      Tensor high = x;
      for (std::size_t i = 0; i < high.size(); ++i) high[i] -= up_low[i];
      return std::make_pair(oracle::bilinear_up2(oracle::conv2d(low, wb[lo].first, wb[lo].second, 1)),
                            oracle::conv2d(high, wb[hi].first, wb[hi].second, 1));
    };
    const auto [ul, uh] = branch(xu, 0, 1);
    const auto [dl, dh] = branch(xd, 2, 3);
    const Tensor* parts[4] = {&ul, &uh, &dl, &dh};
    double worst = 0.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t p = 0; p < 4; ++p)
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) worst = std::max(worst, std::abs(got(n, p * 3 + c, i, j) - (*parts[p])(n, c, i, j)));
    CHECK(worst < 1e-12);
  }

  TEST_CASE("basis generation layout") {
    Tape t;
    // k = 1 with a generator that outputs ones.
    const Var ones_gen_w = t.constant(Tensor({1, 4, 1, 1}));
    const Var ones_gen_b = t.constant(Tensor({1}, 1.0));
    const Tensor v1 = t.value(generate_basis(t, t.constant(random_tensor({1, 4, 4, 4}, 1)), {ones_gen_w, ones_gen_b}, 2));
    CHECK(v1.shape() == Shape{1, 32, 1});
    for (double v : v1.data()) CHECK(v == 1.0);

    const Tensor xe = random_tensor({2, 6, 4, 4}, 2);
    const Tensor gw = random_tensor({4, 6, 3, 3}, 3), gb = random_tensor({4}, 4);
    const Tensor v = t.value(generate_basis(t, t.constant(xe), {t.constant(gw), t.constant(gb)}, 3));
    const Tensor maps = oracle::conv2d(xe, gw, gb, 1);
    REQUIRE(v.shape() == Shape{2, 48, 4});
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < 16; ++p)
          for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(v(b, c * 16 + p, j) - maps(b, j, p / 4, p % 4)) < 1e-12);
  }

  TEST_CASE("projection examples") {
    Tensor e1({6, 1});
    e1(0, 0) = 1.0;
    const auto x = random_vec(6, 5);
    const auto y = project(e1, x, 1e-12);
    CHECK(std::abs(y[0] - x[0]) < 1e-10);
    for (std::size_t i = 1; i < 6; ++i) CHECK(y[i] == 0.0);

    // Orthonormal columns: a projected vector in their span is reproduced.
    Tensor q({5, 2});
    q(0, 0) = q(1, 0) = 1.0 / std::sqrt(2.0);
    q(2, 1) = q(3, 1) = q(4, 1) = 1.0 / std::sqrt(3.0);
    std::vector<double> inspan(5);
    for (std::size_t i = 0; i < 5; ++i) inspan[i] = 0.7 * q(i, 0) - 1.9 * q(i, 1);
    const auto ys = project(q, inspan, 1e-12);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(ys[i] - inspan[i]) < 1e-8);

    // Zero basis falls back to the ε-regularized solve and returns zero.
    const auto yz = project(Tensor({4, 2}), random_vec(4, 6), 1e-12);
    for (double v : yz) CHECK(v == 0.0);
  }

  TEST_CASE("projection against the explicit operator") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const std::size_t n = 8 + s % 9, k = 1 + s % 4;
      const Tensor v = random_tensor({n, k}, 100 + s);
      const auto x = random_vec(n, 200 + s);
      const double eps = 1e-12;
      const auto P = oracle::projection(oracle::to_matrix(v), eps);
      const auto ref = oracle::apply(P, x);
      const auto y = project(v, x, eps);
      double diff = 0.0;
      for (std::size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(y[i] - ref[i]));
      CHECK(diff < 1e-9);

      // Idempotence, symmetry and contraction.
      const auto yy = project(v, y, eps);
      std::vector<double> d(n);
      for (std::size_t i = 0; i < n; ++i) d[i] = yy[i] - y[i];
      CHECK(norm(d) < 1e-9);
      const auto z = random_vec(n, 300 + s);
      const auto pz = project(v, z, eps);
      double a = 0.0, b = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        a += z[i] * y[i];
        b += pz[i] * x[i];
      }
      CHECK(std::abs(a - b) < 1e-9 * std::max(1.0, std::abs(a)));
      CHECK(norm(y) <= norm(x) * (1 + 1e-9));
      // A larger ε only shrinks the result.
      const auto ye = project(v, x, 1e-12, 0.5);
      CHECK(norm(ye) <= norm(y) * (1 + 1e-9));
    }
  }

  TEST_CASE("batched projection matches per-item calls") {
    const Tensor v = random_tensor({3, 10, 2}, 7), x = random_tensor({3, 10}, 8);
    Tape t;
    const Tensor y = t.value(project_reconstruct(t, t.constant(v), t.constant(x), {1e-6, 1e-12}));
    for (std::size_t b = 0; b < 3; ++b) {
      Tensor vb({10, 2});
      std::vector<double> xb(10);
      for (std::size_t i = 0; i < 10; ++i) {
        xb[i] = x(b, i);
        for (std::size_t j = 0; j < 2; ++j) vb(i, j) = v(b, i, j);
      }
      const auto yb = project(vb, xb, 1e-12, 1e-6);
      for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(y(b, i) - yb[i]) < 1e-12);
    }
    CHECK_THROWS_AS(project_reconstruct(t, t.constant(Tensor({3, 10, 2})), t.constant(Tensor({3, 9})), {}), ShapeError);
  }

  TEST_CASE("non-finite basis is reported") {
    Tensor v = random_tensor({6, 2}, 9);
    v(2, 1) = std::nan("");
    Tape t;
    CHECK_THROWS_AS(project_reconstruct(t, t.constant(v), t.constant(Tensor({6}, 1.0)), {}), NumericError);
  }

  TEST_CASE("block gradients match central differences") {
    for (bool residual : {false, true})
      for (std::uint64_t s = 0; s < 20; ++s) {
        SsrConfig cfg;
        cfg.enabled = true;
        cfg.k = 3;
        cfg.residual = residual;
        const Tensor xu = random_tensor({1, 2, 4, 4}, 400 + s), xd = random_tensor({1, 2, 4, 4}, 500 + s);
        std::vector<Tensor> init;
        {
          Tape t;
          SsrParams p;
          p.enhancer = {conv(t, 2, 2, 3, s * 10 + 1), conv(t, 2, 2, 3, s * 10 + 2), conv(t, 2, 2, 3, s * 10 + 3),
                        conv(t, 2, 2, 3, s * 10 + 4)};
          p.generator = conv(t, 3, 8, 3, s * 10 + 5);
          for (const ConvParams* c : {&p.enhancer.up_low, &p.enhancer.up_high, &p.enhancer.down_low,
                                      &p.enhancer.down_high, &p.generator}) {
            init.push_back(t.value(c->weight));
            init.push_back(t.value(c->bias));
          }
        }
        init.push_back(xu);
        init.push_back(xd);
        const Tensor r = random_tensor({1, 2, 4, 4}, 600 + s);
        auto build = [&](Tape& t, const std::vector<Tensor>& vals, bool params) {
          std::vector<Var> vars;
          for (const auto& v : vals) vars.push_back(params ? t.parameter(v) : t.constant(v));
          SsrParams p;
          p.enhancer = {{vars[0], vars[1]}, {vars[2], vars[3]}, {vars[4], vars[5]}, {vars[6], vars[7]}};
          p.generator = {vars[8], vars[9]};
          return std::make_pair(ssr_block(t, vars[10], vars[11], p, cfg), vars);
        };
        auto f = [&](const std::vector<Tensor>& vals) {
          Tape t;
          const Tensor y = t.value(build(t, vals, false).first);
          double acc = 0.0;
          for (std::size_t i = 0; i < y.size(); ++i) acc += r[i] * y[i];
          return acc;
        };
        Tape t;
        const auto [y, vars] = build(t, init, true);
        Tensor anchor = t.value(y);
        for (std::size_t i = 0; i < anchor.size(); ++i) anchor[i] -= r[i] * static_cast<double>(anchor.size()) / 2.0;
        t.backward(ops::mse(t, y, t.constant(anchor)));
        double worst = 0.0;
        for (std::size_t k = 0; k < init.size(); ++k) {
          worst = std::max(worst, oracle::fd_check(
                                      [&](const Tensor& xk) {
                                        auto vals = init;
                                        vals[k] = xk;
                                        return f(vals);
                                      },
                                      init[k], t.grad(vars[k])));
        }
        CHECK(worst < 1e-4);
      }
  }
}
