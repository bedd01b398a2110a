// Parallel conv3d kernels against the serial reference implementation.
#include <benchmark/benchmark.h>

#include "mtvssl/kernels.hpp"
#include "mtvssl/rng.hpp"

using namespace mtvssl;

namespace {

struct Problem {
  Conv3dGeometry g;
  std::vector<double> input, weight, bias, output, grad_out, grad_in, grad_w, grad_b;

  Problem(std::size_t cin, std::size_t cout, std::size_t t, std::size_t hw, std::size_t stride) {
    g.in_channels = cin;
    g.out_channels = cout;
    g.input = {t, hw, hw};
    g.stride = {stride, 2, 2};
    g.validate();
    Rng rng(7);
    auto fill = [&](std::vector<double>& v, std::size_t n) {
      v.resize(n);
      for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    };
    fill(input, g.input_size());
    fill(weight, g.weight_size());
    fill(bias, cout);
    fill(grad_out, g.output_size());
    output.resize(g.output_size());
    grad_in.resize(g.input_size());
    grad_w.resize(g.weight_size());
    grad_b.resize(cout);
  }
};

// (in_channels, out_channels) of the two default encoder layers on 8x32x32 clips.
Problem make(const benchmark::State& state) {
  return state.range(0) == 0 ? Problem(3, 8, 8, 32, 1) : Problem(8, 16, 8, 16, 2);
}

void BM_ForwardParallel(benchmark::State& state) {
  Problem p = make(state);
  for (auto _ : state) {
    kernels::conv3d_forward(p.g, p.input, p.weight, p.bias, p.output);
    benchmark::DoNotOptimize(p.output.data());
  }
}

void BM_ForwardReference(benchmark::State& state) {
  Problem p = make(state);
  for (auto _ : state) {
    reference::conv3d_forward(p.g, p.input, p.weight, p.bias, p.output);
    benchmark::DoNotOptimize(p.output.data());
  }
}

void BM_BackwardParallel(benchmark::State& state) {
  Problem p = make(state);
  for (auto _ : state) {
    kernels::conv3d_backward_input(p.g, p.grad_out, p.weight, p.grad_in);
    kernels::conv3d_backward_weight(p.g, p.input, p.grad_out, p.grad_w, p.grad_b);
    benchmark::DoNotOptimize(p.grad_in.data());
  }
}

void BM_BackwardReference(benchmark::State& state) {
  Problem p = make(state);
  for (auto _ : state) {
    reference::conv3d_backward_input(p.g, p.grad_out, p.weight, p.grad_in);
    reference::conv3d_backward_weight(p.g, p.input, p.grad_out, p.grad_w, p.grad_b);
    benchmark::DoNotOptimize(p.grad_in.data());
  }
}

}  // namespace

BENCHMARK(BM_ForwardParallel)->Arg(0)->Arg(1);
BENCHMARK(BM_ForwardReference)->Arg(0)->Arg(1);
BENCHMARK(BM_BackwardParallel)->Arg(0)->Arg(1);
BENCHMARK(BM_BackwardReference)->Arg(0)->Arg(1);

BENCHMARK_MAIN();
