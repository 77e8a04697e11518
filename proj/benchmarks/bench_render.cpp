#include <benchmark/benchmark.h>

#include "lpa/field.hpp"

namespace {

using namespace lpa;

FieldConfig bench_cfg(int n, int c) {
  FieldConfig cfg;
  cfg.plane_res = n;
  cfg.channels = c;
  cfg.decoder_hidden = 24;
  return cfg;
}

void BM_RenderForward(benchmark::State& state) {
  const int img = static_cast<int>(state.range(0));
  const int steps = static_cast<int>(state.range(1));
  Rng rng(1);
  const FieldConfig cfg = bench_cfg(32, 8);
  const RoomBox room(4.5, 2.8, 4.5);
  const TriPlaneField field = TriPlaneField::random_field(cfg, room, rng, 0.3);
  LpaPose pose;
  pose.anchor_id = 0;
  pose.position = Vec3(1.4, 1.3, 1.4);
  pose.fov_deg = 70;
  const RaySet rays = generate_rays(pose, room, img, img);
  for (auto _ : state) {
    nn::NoGradGuard ng;
    benchmark::DoNotOptimize(render(field, rays, steps).packed->value.data());
  }
  state.SetItemsProcessed(state.iterations() * img * img * steps);
}
BENCHMARK(BM_RenderForward)->Args({32, 20})->Args({64, 48});

void BM_RenderBackward(benchmark::State& state) {
  const int img = static_cast<int>(state.range(0));
  Rng rng(2);
  const FieldConfig cfg = bench_cfg(32, 8);
  const RoomBox room(4.5, 2.8, 4.5);
  const TriPlaneField field = TriPlaneField::random_field(cfg, room, rng, 0.3);
  LpaPose pose;
  pose.anchor_id = 0;
  pose.position = Vec3(1.4, 1.3, 1.4);
  pose.fov_deg = 70;
  const RaySet rays = generate_rays(pose, room, img, img);
  for (auto _ : state) {
    const RenderResult rr = render(field, rays, 20);
    nn::backward(nn::mean(rr.rgb()));
    for (const auto& p : field.planes()) p->grad = nn::Tensor();
  }
}
BENCHMARK(BM_RenderBackward)->Arg(32);

void BM_DensityAt(benchmark::State& state) {
  Rng rng(3);
  const FieldConfig cfg = bench_cfg(32, 8);
  const RoomBox room(4.5, 2.8, 4.5);
  const TriPlaneField field = TriPlaneField::random_field(cfg, room, rng, 0.3);
  const Vec3 p(0.4, 1.2, -0.8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(field.density_at(p));
  }
}
BENCHMARK(BM_DensityAt);

}  // namespace
