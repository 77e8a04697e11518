#include <benchmark/benchmark.h>

#include "lpa/nn.hpp"

namespace {

using namespace lpa::nn;

void BM_Conv2dForward(benchmark::State& state) {
  lpa::Rng rng(1);
  const int c = static_cast<int>(state.range(0));
  const int hw = static_cast<int>(state.range(1));
  Var x = constant(Tensor::randn({4, c, hw, hw}, rng));
  Var w = make_var(Tensor::randn({c, c, 3, 3}, rng, 0.1), true);
  Var b = make_var(Tensor({c}), true);
  for (auto _ : state) {
    NoGradGuard ng;
    benchmark::DoNotOptimize(conv2d(x, w, b)->value.data());
  }
}
BENCHMARK(BM_Conv2dForward)->Args({32, 16})->Args({48, 32});

void BM_ConvNetTrainStep(benchmark::State& state) {
  lpa::Rng rng(2);
  Var w1 = make_var(Tensor::randn({24, 3, 3, 3}, rng, 0.3), true);
  Var b1 = make_var(Tensor({24}), true);
  Var w2 = make_var(Tensor::randn({48, 24, 3, 3}, rng, 0.1), true);
  Var b2 = make_var(Tensor({48}), true);
  Adam adam({w1, b1, w2, b2}, 1e-3);
  Var x = constant(Tensor::randn({4, 3, 32, 32}, rng));
  for (auto _ : state) {
    Var h = leaky_relu(conv2d(x, w1, b1, 2));
    h = leaky_relu(conv2d(h, w2, b2, 2));
    Var loss = mean(square(h));
    adam.zero_grad();
    backward(loss);
    adam.step();
  }
}
BENCHMARK(BM_ConvNetTrainStep);

void BM_GridSamplePlane(benchmark::State& state) {
  lpa::Rng rng(3);
  Var plane = make_var(Tensor::randn({8, 32, 32}, rng), true);
  const int m = static_cast<int>(state.range(0));
  Eigen::Matrix<Real, Eigen::Dynamic, 2, Eigen::RowMajor> coords(m, 2);
  for (int i = 0; i < m; ++i) {
    coords(i, 0) = rng.uniform(-1, 1);
    coords(i, 1) = rng.uniform(-1, 1);
  }
  for (auto _ : state) {
    NoGradGuard ng;
    benchmark::DoNotOptimize(grid_sample_plane(plane, coords)->value.data());
  }
  state.SetItemsProcessed(state.iterations() * m);
}
BENCHMARK(BM_GridSamplePlane)->Arg(4096)->Arg(20480);

}  // namespace
