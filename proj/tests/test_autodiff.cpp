#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "scnet/autodiff.hpp"
#include "scnet/error.hpp"

using namespace scnet;
using oracle::random_tensor;

namespace {

// Builds loss = Σ r ⊙ op(inputs) with a fixed random weighting r, so every
// output element contributes a distinct gradient.
using Graph = std::function<Var(Tape&, const std::vector<Var>&)>;

double weighted_sum(const Graph& g, const std::vector<Tensor>& inputs, const Tensor& r) {
  Tape t;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(t.constant(x));
  const Tensor out = t.value(g(t, vars));
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += r[i] * out[i];
  return s;
}

double worst_grad_error(const Graph& g, const std::vector<Tensor>& inputs, std::uint64_t seed) {
  Tape t2;
  std::vector<Var> vars2;
  for (const auto& x : inputs) vars2.push_back(t2.parameter(x));
  const Var out2 = g(t2, vars2);
  const Tensor r = random_tensor(t2.value(out2).shape(), seed ^ 0xabcdef);
  const std::size_t n = t2.value(out2).size();
  // mse(out, out₀ − r·n/2) has gradient r with respect to out at out = out₀.
  const Tensor anchor = [&] {
    Tensor a = t2.value(out2);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= r[i] * static_cast<double>(n) / 2.0;
    return a;
  }();
  const Var l2 = ops::mse(t2, out2, t2.constant(anchor));
  t2.backward(l2);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const Tensor& xk) {
      std::vector<Tensor> in = inputs;
      in[k] = xk;
      return weighted_sum(g, in, r);
    };
    worst = std::max(worst, oracle::fd_check(f, inputs[k], t2.grad(vars2[k])));
  }
  return worst;
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("conv2d 1x1 kernel scales input and adds bias") {
    Tape t;
    const Tensor x = random_tensor({2, 1, 4, 5}, 1);
    const Var y = ops::conv2d(t, t.constant(x), t.constant(Tensor({1, 1, 1, 1}, 2.0)), t.constant(Tensor({1}, 0.5)), 0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(t.value(y)[i] == doctest::Approx(2.0 * x[i] + 0.5).epsilon(1e-15));
  }

  TEST_CASE("conv2d impulse response equals the kernel") {
    Tape t;
    Tensor x({1, 1, 5, 5});
    x(0, 0, 2, 2) = 1.0;
    const Tensor w = random_tensor({1, 1, 3, 3}, 2);
    const Var y = ops::conv2d(t, t.constant(x), t.constant(w), t.constant(Tensor({1})), 1);
    // Cross-correlation: y(2 + a, 2 + b) = w(1 − a, 1 − b).
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b) CHECK(t.value(y)(0, 0, 2 + a, 2 + b) == w(0, 0, 1 - a, 1 - b));
  }

  TEST_CASE("conv2d matches six-loop reference") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Tensor x = random_tensor({1, 2, 5, 5}, 10 + s), w = random_tensor({3, 2, 3, 3}, 20 + s),
                   b = random_tensor({3}, 30 + s);
      Tape t;
      const Var y = ops::conv2d(t, t.constant(x), t.constant(w), t.constant(b), 1);
      CHECK(oracle::max_abs_diff(t.value(y), oracle::conv2d(x, w, b, 1)) < 1e-12);
    }
  }

  TEST_CASE("conv2d rejects bad shapes") {
    Tape t;
    const Var x = t.constant(Tensor({1, 2, 4, 4}));
    CHECK_THROWS_AS(ops::conv2d(t, x, t.constant(Tensor({1, 3, 3, 3})), t.constant(Tensor({1})), 1), ShapeError);
    CHECK_THROWS_AS(ops::conv2d(t, x, t.constant(Tensor({1, 2, 2, 2})), t.constant(Tensor({1})), 0), ShapeError);
    CHECK_THROWS_AS(ops::conv2d(t, x, t.constant(Tensor({1, 2, 3, 3})), t.constant(Tensor({2})), 1), ShapeError);
  }

  TEST_CASE("conv2d is linear without bias") {
    const Tensor x1 = random_tensor({2, 3, 6, 6}, 3), x2 = random_tensor({2, 3, 6, 6}, 4);
    const Tensor w = random_tensor({4, 3, 3, 3}, 5);
    const double alpha = -1.7;
    Tensor mix = x1;
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * x1[i] + x2[i];
    Tape t;
    const Var zb = t.constant(Tensor({4}));
    const Var w_ = t.constant(w);
    const Tensor ym = t.value(ops::conv2d(t, t.constant(mix), w_, zb, 1));
    const Tensor y1 = t.value(ops::conv2d(t, t.constant(x1), w_, zb, 1));
    const Tensor y2 = t.value(ops::conv2d(t, t.constant(x2), w_, zb, 1));
    for (std::size_t i = 0; i < ym.size(); ++i) CHECK(std::abs(ym[i] - (alpha * y1[i] + y2[i])) < 1e-12);
  }

  TEST_CASE("avgpool2 examples") {
    Tape t;
    CHECK(t.value(ops::avgpool2(t, t.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}))))[0] == 2.5);
    const Tensor c = t.value(ops::avgpool2(t, t.constant(Tensor({1, 2, 4, 6}, 0.3))));
    for (double v : c.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
    const Tensor x = random_tensor({2, 3, 8, 8}, 6);
    CHECK(t.value(ops::avgpool2(t, t.constant(x))) == oracle::avgpool2(x));
    CHECK_THROWS_AS(ops::avgpool2(t, t.constant(Tensor({1, 1, 3, 4}))), ShapeError);
  }

  TEST_CASE("bilinear_up2 examples") {
    Tape t;
    const Tensor one = t.value(ops::bilinear_up2(t, t.constant(Tensor({1, 1, 1, 1}, 0.7))));
    CHECK(one.shape() == Shape{1, 1, 2, 2});
    for (double v : one.data()) CHECK(v == 0.7);
    const Tensor c = t.value(ops::bilinear_up2(t, t.constant(Tensor({1, 1, 3, 5}, -0.4))));
    for (double v : c.data()) CHECK(v == doctest::Approx(-0.4).epsilon(1e-15));
    const Tensor x = random_tensor({2, 2, 4, 4}, 7);
    CHECK(oracle::max_abs_diff(t.value(ops::bilinear_up2(t, t.constant(x))), oracle::bilinear_up2(x)) < 1e-12);
  }

  TEST_CASE("avgpool2 then bilinear_up2 keeps constant images") {
    Tape t;
    const Var x = t.constant(Tensor({1, 2, 8, 8}, 0.25));
    const Tensor y = t.value(ops::bilinear_up2(t, ops::avgpool2(t, x)));
    for (double v : y.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }

  TEST_CASE("mse and concat examples") {
    Tape t;
    const Tensor x = random_tensor({2, 3, 4}, 8);
    CHECK(t.value(ops::mse(t, t.constant(x), t.constant(x)))[0] == 0.0);
    CHECK(t.value(ops::mse(t, t.constant(Tensor({3, 5})), t.constant(Tensor({3, 5}, 0.1))))[0] ==
          doctest::Approx(0.01).epsilon(1e-14));
    const Tensor a = random_tensor({2, 2, 3, 3}, 9), b = random_tensor({2, 3, 3, 3}, 10);
    const Tensor c = t.value(ops::concat_channels(t, t.constant(a), t.constant(b)));
    CHECK(c.shape() == Shape{2, 5, 3, 3});
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
          for (std::size_t ch = 0; ch < 2; ++ch) CHECK(c(n, ch, i, j) == a(n, ch, i, j));
          for (std::size_t ch = 0; ch < 3; ++ch) CHECK(c(n, 2 + ch, i, j) == b(n, ch, i, j));
        }
    CHECK_THROWS_AS(ops::add(t, t.constant(Tensor({2, 2})), t.constant(Tensor({2, 3}))), ShapeError);
    CHECK_THROWS_AS(ops::mse(t, t.constant(Tensor({2, 2})), t.constant(Tensor({4}))), ShapeError);
  }

  TEST_CASE("solve_small examples") {
    Tape t;
    const Tensor bm = random_tensor({4, 3}, 11);
    Tensor eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
    CHECK(oracle::max_abs_diff(t.value(ops::solve_small(t, t.constant(eye), t.constant(bm))), bm) < 1e-15);
    Tensor two = eye;
    for (double& v : two.storage()) v *= 2.0;
    const Tensor half = t.value(ops::solve_small(t, t.constant(two), t.constant(bm)));
    for (std::size_t i = 0; i < bm.size(); ++i) CHECK(half[i] == doctest::Approx(bm[i] / 2.0).epsilon(1e-15));

    for (std::uint64_t s = 0; s < 10; ++s) {
      const oracle::Matrix m = oracle::to_matrix(random_tensor({4, 4}, 100 + s));
      oracle::Matrix a = oracle::multiply(oracle::transpose(m), m);
      Tensor A({4, 4});
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) A(i, j) = a[i][j] + (i == j ? 1.0 : 0.0);
      const Tensor B = random_tensor({4, 2}, 200 + s);
      const Tensor& X = t.value(ops::solve_small(t, t.constant(A), t.constant(B)));
      double res = 0.0;
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
          double acc = 0.0;
          for (std::size_t k = 0; k < 4; ++k) acc += A(i, k) * X(k, j);
          res = std::max(res, std::abs(acc - B(i, j)));
        }
      CHECK(res < 1e-10);
    }
  }

  TEST_CASE("solve_small rejects non-SPD and non-finite input with the label") {
    Tape t;
    Tensor a({2, 2}, {1.0, 2.0, 2.0, 1.0});
    try {
      ops::solve_small(t, t.constant(a), t.constant(Tensor({2, 1}, 1.0)), "layer7");
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("layer7") != std::string::npos);
    }
    Tensor nan({1, 1}, std::nan(""));
    CHECK_THROWS_AS(ops::solve_small(t, t.constant(nan), t.constant(Tensor({1, 1}, 1.0))), NumericError);
  }

  TEST_CASE("backward closed form and rules") {
    const double w = 1.3, x = 0.7, y = 2.0;
    Tape t;
    const Var wv = t.parameter(Tensor({1}, w));
    const Var loss = ops::mse(t, ops::mul_scalar(t, wv, x), t.constant(Tensor({1}, y)));
    t.backward(loss);
    CHECK(t.grad(wv)[0] == doctest::Approx(2.0 * x * (w * x - y)).epsilon(1e-14));

    Tape t2;
    const Var p = t2.parameter(Tensor({2, 2}, 0.5));
    const Var unused = t2.parameter(Tensor({3}, 1.0));
    const Var c = t2.constant(Tensor({2, 2}, 0.5));
    const Var l = ops::mse(t2, p, c);
    CHECK_THROWS_AS(t2.backward(p), Error);
    t2.backward(l);
    for (double g : t2.grad(p).data()) CHECK(g == 0.0);
    CHECK(t2.has_grad(unused));
    for (double g : t2.grad(unused).data()) CHECK(g == 0.0);
    CHECK_FALSE(t2.has_grad(c));
    CHECK_THROWS(t2.backward(l));
  }

  TEST_CASE("backward is deterministic") {
    const Tensor x = random_tensor({2, 3, 8, 8}, 12), w = random_tensor({4, 3, 3, 3}, 13);
    auto run = [&] {
      Tape t;
      const Var wv = t.parameter(w);
      const Var y = ops::relu(t, ops::conv2d(t, t.constant(x), wv, t.constant(Tensor({4})), 1));
      const Var l = ops::mse(t, ops::avgpool2(t, y), t.constant(Tensor({2, 4, 4, 4}, 0.1)));
      t.backward(l);
      return std::make_pair(t.value(l), t.grad(wv));
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }

  TEST_CASE("primitive gradients match central differences over 20 seeds") {
    const std::vector<std::pair<const char*, std::function<double(std::uint64_t)>>> cases = {
        {"conv2d",
         [](std::uint64_t s) {
           return worst_grad_error([](Tape& t, const std::vector<Var>& v) { return ops::conv2d(t, v[0], v[1], v[2], 1); },
                                   {random_tensor({2, 2, 5, 4}, s), random_tensor({3, 2, 3, 3}, s + 1),
                                    random_tensor({3}, s + 2)},
                                   s);
         }},
        {"avgpool2",
         [](std::uint64_t s) {
           return worst_grad_error([](Tape& t, const std::vector<Var>& v) { return ops::avgpool2(t, v[0]); },
                                   {random_tensor({2, 2, 4, 6}, s)}, s);
         }},
        {"bilinear_up2",
         [](std::uint64_t s) {
           return worst_grad_error([](Tape& t, const std::vector<Var>& v) { return ops::bilinear_up2(t, v[0]); },
                                   {random_tensor({1, 2, 3, 4}, s)}, s);
         }},
        {"relu",
         [](std::uint64_t s) {
           // Keep entries away from the kink so the finite difference is clean.
           Tensor x = random_tensor({3, 7}, s);
           for (double& v : x.storage()) v += v >= 0 ? 0.05 : -0.05;
           return worst_grad_error([](Tape& t, const std::vector<Var>& v) { return ops::relu(t, v[0]); }, {x}, s);
         }},
        {"add/sub/mul_scalar",
         [](std::uint64_t s) {
           return worst_grad_error(
               [](Tape& t, const std::vector<Var>& v) {
                 return ops::sub(t, ops::mul_scalar(t, ops::add(t, v[0], v[1]), -2.5), v[1]);
               },
               {random_tensor({2, 5}, s), random_tensor({2, 5}, s + 1)}, s);
         }},
        {"concat_channels",
         [](std::uint64_t s) {
           return worst_grad_error([](Tape& t, const std::vector<Var>& v) { return ops::concat_channels(t, v[0], v[1]); },
                                   {random_tensor({2, 1, 3, 3}, s), random_tensor({2, 2, 3, 3}, s + 1)}, s);
         }},
        {"mse",
         [](std::uint64_t s) {
           return worst_grad_error([](Tape& t, const std::vector<Var>& v) { return ops::mse(t, v[0], v[1]); },
                                   {random_tensor({3, 4}, s), random_tensor({3, 4}, s + 1)}, s);
         }},
        {"matmul",
         [](std::uint64_t s) {
           return worst_grad_error([](Tape& t, const std::vector<Var>& v) { return ops::matmul(t, v[0], v[1]); },
                                   {random_tensor({2, 3, 4}, s), random_tensor({2, 4, 2}, s + 1)}, s);
         }},
        {"matmul_tn",
         [](std::uint64_t s) {
           return worst_grad_error([](Tape& t, const std::vector<Var>& v) { return ops::matmul_tn(t, v[0], v[1]); },
                                   {random_tensor({2, 5, 3}, s), random_tensor({2, 5, 2}, s + 1)}, s);
         }},
        {"gram_regularized",
         [](std::uint64_t s) {
           return worst_grad_error(
               [](Tape& t, const std::vector<Var>& v) { return ops::gram_regularized(t, v[0], 1e-2, 1e-12); },
               {random_tensor({2, 6, 3}, s)}, s);
         }},
        {"solve_small",
         [](std::uint64_t s) {
           // A = MᵀM + I built on the tape keeps A symmetric under perturbation of M.
           return worst_grad_error(
               [](Tape& t, const std::vector<Var>& v) {
                 Tensor eye({1, 4, 4});
                 for (std::size_t i = 0; i < 4; ++i) eye(0, i, i) = 1.0;
                 const Var a = ops::add(t, ops::matmul_tn(t, v[0], v[0]), t.constant(eye));
                 return ops::solve_small(t, a, v[1]);
               },
               {random_tensor({1, 4, 4}, s), random_tensor({1, 4, 2}, s + 1)}, s);
         }},
        {"tile_channels",
         [](std::uint64_t s) {
           return worst_grad_error([](Tape& t, const std::vector<Var>& v) { return ops::tile_channels(t, v[0], 3); },
                                   {random_tensor({2, 2, 3, 3}, s)}, s);
         }},
        {"reshape",
         [](std::uint64_t s) {
           return worst_grad_error([](Tape& t, const std::vector<Var>& v) { return ops::reshape(t, v[0], {6, 2}); },
                                   {random_tensor({3, 4}, s)}, s);
         }},
    };
    for (const auto& [name, fn] : cases) {
      double worst = 0.0;
      for (std::uint64_t s = 0; s < 20; ++s) worst = std::max(worst, fn(1000 * s + 17));
      INFO(std::string(name));
      CHECK(worst < 1e-4);
    }
  }

  TEST_CASE("solve_small adjoint against unconstrained A") {
    // Direct perturbation of A entries (not through MᵀM) on a symmetric input.
    for (std::uint64_t s = 0; s < 20; ++s) {
      const oracle::Matrix m = oracle::to_matrix(random_tensor({4, 4}, 300 + s));
      const oracle::Matrix g = oracle::multiply(oracle::transpose(m), m);
      Tensor A({4, 4});
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) A(i, j) = g[i][j] + (i == j ? 1.0 : 0.0);
      const Tensor B = random_tensor({4, 3}, 400 + s);
      // Symmetric perturbations only: differentiate along A + h(E_ij + E_ji).
      const Tensor r = random_tensor({4, 3}, 500 + s);
      auto f = [&](const Tensor& a) {
        Tape t;
        const Tensor x = t.value(ops::solve_small(t, t.constant(a), t.constant(B)));
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += r[i] * x[i];
        return acc;
      };
      Tape t;
      const Var av = t.parameter(A), bv = t.parameter(B);
      const Var x = ops::solve_small(t, av, bv);
      Tensor anchor = t.value(x);
      for (std::size_t i = 0; i < anchor.size(); ++i) anchor[i] -= r[i] * 12.0 / 2.0;
      t.backward(ops::mse(t, x, t.constant(anchor)));
      const Tensor& ga = t.grad(av);
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i; j < 4; ++j) {
          const double h = 1e-6;
          Tensor ap = A, am = A;
          ap(i, j) += h;
          am(i, j) -= h;
          if (i != j) {
            ap(j, i) += h;
            am(j, i) -= h;
          }
          const double num = (f(ap) - f(am)) / (2 * h);
          const double an = i == j ? ga(i, i) : ga(i, j) + ga(j, i);
          CHECK(std::abs(num - an) <= 1e-5 * std::max(1.0, std::abs(num)));
        }
      const double gb = oracle::fd_check([&](const Tensor& b) {
        Tape tt;
        const Tensor xx = tt.value(ops::solve_small(tt, tt.constant(A), tt.constant(b)));
        double acc = 0.0;
        for (std::size_t k = 0; k < xx.size(); ++k) acc += r[k] * xx[k];
        return acc;
      }, B, t.grad(bv));
      CHECK(gb < 1e-5);
    }
  }
}
