#include <doctest.h>

#include "oracles.hpp"
#include "scnet/kernels.hpp"

using namespace scnet;
using kernels::Conv2dGeometry;
using oracle::random_tensor;

namespace {

struct Case {
  Conv2dGeometry g;
  Tensor x, w, b, gy;
};

Case make_case(std::size_t batch, std::size_t c, std::size_t o, std::size_t h, std::size_t w, std::size_t k,
               std::size_t pad, std::uint64_t seed) {
  Case cs;
  cs.g = {batch, c, o, h, w, k, k, pad};
  cs.x = random_tensor({batch, c, h, w}, seed);
  cs.w = random_tensor({o, c, k, k}, seed + 1);
  cs.b = random_tensor({o}, seed + 2);
  cs.gy = random_tensor({batch, o, cs.g.out_height(), cs.g.out_width()}, seed + 3);
  return cs;
}

// Gradient oracles written as direct sums over the forward relation.
Tensor naive_grad_input(const Case& cs) {
  const auto& g = cs.g;
  Tensor gx(cs.x.shape());
  const long P = static_cast<long>(g.padding);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t i = 0; i < g.out_height(); ++i)
        for (std::size_t j = 0; j < g.out_width(); ++j)
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t a = 0; a < g.kernel_h; ++a)
              for (std::size_t d = 0; d < g.kernel_w; ++d) {
                const long y = static_cast<long>(i + a) - P, x = static_cast<long>(j + d) - P;
                if (y < 0 || x < 0 || y >= static_cast<long>(g.height) || x >= static_cast<long>(g.width)) continue;
                gx(n, c, y, x) += cs.gy(n, o, i, j) * cs.w(o, c, a, d);
              }
  return gx;
}

std::pair<Tensor, Tensor> naive_grad_params(const Case& cs) {
  const auto& g = cs.g;
  Tensor gw(cs.w.shape()), gb(cs.b.shape());
  const long P = static_cast<long>(g.padding);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t i = 0; i < g.out_height(); ++i)
        for (std::size_t j = 0; j < g.out_width(); ++j) {
          gb[o] += cs.gy(n, o, i, j);
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t a = 0; a < g.kernel_h; ++a)
              for (std::size_t d = 0; d < g.kernel_w; ++d) {
                const long y = static_cast<long>(i + a) - P, x = static_cast<long>(j + d) - P;
                if (y < 0 || x < 0 || y >= static_cast<long>(g.height) || x >= static_cast<long>(g.width)) continue;
                gw(o, c, a, d) += cs.gy(n, o, i, j) * cs.x(n, c, y, x);
              }
        }
  return {gw, gb};
}

const std::vector<Case>& cases() {
  static const std::vector<Case> all = [] {
    std::vector<Case> v;
    v.push_back(make_case(1, 2, 3, 5, 5, 3, 1, 1));
    v.push_back(make_case(2, 3, 5, 7, 6, 3, 1, 2));
    v.push_back(make_case(3, 1, 1, 4, 9, 1, 0, 3));
    v.push_back(make_case(2, 4, 7, 9, 8, 5, 2, 4));
    v.push_back(make_case(1, 5, 2, 6, 6, 3, 0, 5));
    v.push_back(make_case(2, 16, 9, 12, 10, 3, 1, 6));
    return v;
  }();
  return all;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("parallel and serial forward match the naive loops") {
    for (const auto& cs : cases()) {
      const Tensor ref = oracle::conv2d(cs.x, cs.w, cs.b, cs.g.padding);
      Tensor par(ref.shape()), ser(ref.shape());
      kernels::conv2d_forward(cs.g, cs.x.data(), cs.w.data(), cs.b.data(), par.data());
      kernels::serial::conv2d_forward(cs.g, cs.x.data(), cs.w.data(), cs.b.data(), ser.data());
      CHECK(oracle::max_abs_diff(par, ref) < 1e-12);
      CHECK(oracle::max_abs_diff(ser, ref) < 1e-12);
    }
  }

  TEST_CASE("backward kernels match direct sums") {
    for (const auto& cs : cases()) {
      const Tensor gx_ref = naive_grad_input(cs);
      const auto [gw_ref, gb_ref] = naive_grad_params(cs);
      for (int variant = 0; variant < 2; ++variant) {
        Tensor gx(cs.x.shape()), gw(cs.w.shape()), gb(cs.b.shape());
        if (variant == 0) {
          kernels::conv2d_backward_input(cs.g, cs.gy.data(), cs.w.data(), gx.data());
          kernels::conv2d_backward_params(cs.g, cs.x.data(), cs.gy.data(), gw.data(), gb.data());
        } else {
          kernels::serial::conv2d_backward_input(cs.g, cs.gy.data(), cs.w.data(), gx.data());
          kernels::serial::conv2d_backward_params(cs.g, cs.x.data(), cs.gy.data(), gw.data(), gb.data());
        }
        CHECK(oracle::max_abs_diff(gx, gx_ref) < 1e-12);
        CHECK(oracle::max_abs_diff(gw, gw_ref) < 1e-12);
        CHECK(oracle::max_abs_diff(gb, gb_ref) < 1e-12);
      }
    }
  }

  TEST_CASE("parallel kernels are bit-reproducible") {
    const Case cs = make_case(2, 8, 8, 16, 16, 3, 1, 99);
    auto run = [&] {
      Tensor y({2, 8, 16, 16}), gx(cs.x.shape()), gw(cs.w.shape()), gb(cs.b.shape());
      kernels::conv2d_forward(cs.g, cs.x.data(), cs.w.data(), cs.b.data(), y.data());
      kernels::conv2d_backward_input(cs.g, cs.gy.data(), cs.w.data(), gx.data());
      kernels::conv2d_backward_params(cs.g, cs.x.data(), cs.gy.data(), gw.data(), gb.data());
      return std::vector<Tensor>{y, gx, gw, gb};
    };
    CHECK(run() == run());
  }
}
