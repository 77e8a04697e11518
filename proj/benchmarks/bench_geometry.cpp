#include <benchmark/benchmark.h>

#include "lpa/geometry.hpp"
#include "lpa/rng.hpp"

namespace {

using namespace lpa;

GlobalCamera make_camera(Rng& rng, const RoomBox& room) {
  GlobalCamera cam;
  cam.position = Vec3(rng.uniform(room.lo().x() + 0.1, room.hi().x() - 0.1),
                      rng.uniform(0.1, room.size.y() - 0.1),
                      rng.uniform(room.lo().z() + 0.1, room.hi().z() - 0.1));
  cam.yaw_deg = rng.uniform(0, 360);
  cam.pitch_deg = rng.uniform(-60, 60);
  cam.roll_deg = rng.uniform(-10, 10);
  cam.fov_deg = rng.uniform(40, 90);
  return cam;
}

void BM_LpaRoundTrip(benchmark::State& state) {
  Rng rng(1);
  const RoomBox room(4.5, 2.8, 5.2);
  const GlobalCamera cam = make_camera(rng, room);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lpa_to_global(global_to_lpa(cam, room), room));
  }
}
BENCHMARK(BM_LpaRoundTrip);

void BM_AssignAnchor(benchmark::State& state) {
  Rng rng(2);
  const RoomBox room(4.5, 2.8, 5.2);
  const GlobalCamera cam = make_camera(rng, room);
  for (auto _ : state) {
    benchmark::DoNotOptimize(assign_anchor(cam, room));
  }
}
BENCHMARK(BM_AssignAnchor);

void BM_GenerateRays(benchmark::State& state) {
  Rng rng(3);
  const RoomBox room(4.5, 2.8, 5.2);
  const GlobalCamera cam = make_camera(rng, room);
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_rays(cam, n, n));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_GenerateRays)->Arg(32)->Arg(64)->Arg(128);

void BM_RayBoxDistance(benchmark::State& state) {
  Rng rng(4);
  const RoomBox room(4.5, 2.8, 5.2);
  const Vec3 o(0.3, 1.2, -0.4);
  const Vec3 d = Vec3(0.4, -0.1, 0.9).normalized();
  for (auto _ : state) {
    benchmark::DoNotOptimize(ray_box_distance(o, d, room));
  }
}
BENCHMARK(BM_RayBoxDistance);

}  // namespace
