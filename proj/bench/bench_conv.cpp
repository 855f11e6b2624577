// Serial reference vs OpenMP convolution kernels on U-Net-sized layers.

#include <benchmark/benchmark.h>

#include <vector>

#include "scnet/kernels.hpp"
#include "scnet/rng.hpp"

namespace {

using scnet::kernels::Conv2dGeometry;

struct Buffers {
  std::vector<double> x, w, b, y;
};

Conv2dGeometry geometry(const benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto side = static_cast<std::size_t>(state.range(1));
  return {8, c, c, side, side, 3, 3, 1};
}

Buffers make_buffers(const Conv2dGeometry& g) {
  scnet::CounterRng rng(42);
  Buffers buf;
  buf.x.resize(g.batch * g.in_channels * g.height * g.width);
  buf.w.resize(g.out_channels * g.in_channels * g.kernel_h * g.kernel_w);
  buf.b.resize(g.out_channels);
  buf.y.resize(g.batch * g.out_channels * g.out_height() * g.out_width());
  for (double& v : buf.x) v = rng.normal();
  for (double& v : buf.w) v = rng.normal();
  return buf;
}

void set_flops(benchmark::State& state, const Conv2dGeometry& g) {
  const double macs = static_cast<double>(g.batch * g.out_channels * g.in_channels * g.out_height() * g.out_width() *
                                          g.kernel_h * g.kernel_w);
  state.counters["GMAC/s"] = benchmark::Counter(macs * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

template <auto Kernel>
void BM_Forward(benchmark::State& state) {
  const Conv2dGeometry g = geometry(state);
  Buffers buf = make_buffers(g);
  for (auto _ : state) {
    Kernel(g, buf.x, buf.w, buf.b, buf.y);
    benchmark::DoNotOptimize(buf.y.data());
  }
  set_flops(state, g);
}

template <auto Kernel>
void BM_BackwardInput(benchmark::State& state) {
  const Conv2dGeometry g = geometry(state);
  Buffers buf = make_buffers(g);
  std::vector<double> gx(buf.x.size());
  for (auto _ : state) {
    Kernel(g, buf.y, buf.w, gx);
    benchmark::DoNotOptimize(gx.data());
  }
  set_flops(state, g);
}

template <auto Kernel>
void BM_BackwardParams(benchmark::State& state) {
  const Conv2dGeometry g = geometry(state);
  Buffers buf = make_buffers(g);
  std::vector<double> gw(buf.w.size()), gb(buf.b.size());
  for (auto _ : state) {
    Kernel(g, buf.x, buf.y, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
  set_flops(state, g);
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({16, 32})->Args({32, 16})->Args({64, 8})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_Forward<scnet::kernels::serial::conv2d_forward>)->Apply(shapes);
BENCHMARK(BM_Forward<scnet::kernels::conv2d_forward>)->Apply(shapes);
BENCHMARK(BM_BackwardInput<scnet::kernels::serial::conv2d_backward_input>)->Apply(shapes);
BENCHMARK(BM_BackwardInput<scnet::kernels::conv2d_backward_input>)->Apply(shapes);
BENCHMARK(BM_BackwardParams<scnet::kernels::serial::conv2d_backward_params>)->Apply(shapes);
BENCHMARK(BM_BackwardParams<scnet::kernels::conv2d_backward_params>)->Apply(shapes);

BENCHMARK_MAIN();
