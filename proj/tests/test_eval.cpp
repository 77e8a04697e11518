#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "lpa/eval.hpp"

using namespace lpa;

namespace {

NetConfig tiny_net() {
  NetConfig net;
  net.latent_dim = 12;
  net.gen_base = 10;
  net.disc_base = 10;
  net.backbone_base = 6;
  net.pose_bins = 8;
  return net;
}

FieldConfig tiny_field() {
  FieldConfig cfg;
  cfg.plane_res = 16;
  cfg.channels = 4;
  cfg.decoder_hidden = 8;
  cfg.render_steps = 8;
  return cfg;
}

std::vector<Eigen::VectorXd> gaussian_cloud(Rng& rng, int n, int d, double mean,
                                            double scale) {
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd v(d);
    for (int j = 0; j < d; ++j) v(j) = mean + scale * rng.normal();
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

TEST_CASE("feature distance: identity, symmetry, shuffle invariance") {
  Rng rng(1);
  const auto a = gaussian_cloud(rng, 64, 6, 0.0, 1.0);
  const auto b = gaussian_cloud(rng, 64, 6, 2.0, 1.4);
  CHECK(feature_distribution_distance(a, a) < 1e-6);
  const double ab = feature_distribution_distance(a, b);
  const double ba = feature_distribution_distance(b, a);
  CHECK(ab == doctest::Approx(ba).epsilon(1e-9));
  CHECK(ab > 0.5);

  auto shuffled = a;
  Rng srng(2);
  for (std::size_t i = shuffled.size() - 1; i > 0; --i) {
    std::swap(shuffled[i], shuffled[srng.uniform_index(i + 1)]);
  }
  CHECK(feature_distribution_distance(shuffled, b) == doctest::Approx(ab).epsilon(1e-9));
}

TEST_CASE("feature distance regularizes small sets with a warning flag") {
  Rng rng(3);
  const auto a = gaussian_cloud(rng, 4, 8, 0.0, 1.0);
  const auto b = gaussian_cloud(rng, 4, 8, 0.3, 1.0);
  bool reg = false;
  feature_distribution_distance(a, b, &reg);
  CHECK(reg);
}

TEST_CASE("backbone features separate rooms from noise") {
  SynthConfig priors;
  priors.image_size = 16;
  const std::string dir = "/tmp/lpa_eval_ffd_ds";
  std::filesystem::remove_all(dir);
  build_dataset(96, priors, 3, dir, 2);
  const Dataset ds = load_dataset(dir);

  Rng rng(4);
  const Segmenter seg(tiny_net(), rng);
  std::vector<const ImageU8*> real_a, real_b;
  for (int i = 0; i < 32; ++i) real_a.push_back(&ds.records[(std::size_t)i].image);
  for (int i = 32; i < 64; ++i) real_b.push_back(&ds.records[(std::size_t)i].image);
  std::vector<Image> noise;
  Rng nrng(5);
  for (int i = 0; i < 32; ++i) {
    Image im(16, 16, 3);
    for (auto& v : im.data) v = nrng.uniform();
    noise.push_back(std::move(im));
  }
  const auto fa = embed_images(seg, real_a);
  const auto fb = embed_images(seg, real_b);
  const auto fn = embed_render_outputs(seg, noise);
  const double real_vs_real = feature_distribution_distance(fa, fb);
  const double real_vs_noise = feature_distribution_distance(fa, fn);
  CHECK(real_vs_noise > 5.0 * real_vs_real);
}

TEST_CASE("component counting with an area floor") {
  Image mask(16, 16, 1);
  CHECK(count_core_components(mask, 0.02) == 0);
  // one 4x4 blob (16 px = 6.25%), one single pixel (filtered out at 2%)
  for (int y = 2; y < 6; ++y) {
    for (int x = 2; x < 6; ++x) mask.at(x, y) = 1.0;
  }
  mask.at(12, 12) = 1.0;
  CHECK(count_core_components(mask, 0.02) == 1);
  CHECK(count_core_components(mask, 0.001) == 2);
  // second blob
  for (int y = 10; y < 14; ++y) {
    for (int x = 10; x < 14; ++x) mask.at(x, y) = 1.0;
  }
  CHECK(count_core_components(mask, 0.02) == 2);
}

TEST_CASE("two planted core objects count as abnormal in the oracle top-down view") {
  SynthConfig priors;
  priors.image_size = 16;
  Rng rng(6);
  SceneSpec scene = sample_scene(rng, priors);
  scene.clutter.clear();
  scene.clutter_face_colors.clear();
  // plant a second core-sized box against the opposite wall, leaving a
  // clear gap so the two blobs stay disjoint in the top-down view
  const Vec3 f = scene.core_front;
  Box second = scene.core;
  const int axis = std::abs(f.x()) > 0.5 ? 0 : 2;
  const double room_lo = scene.room.lo()[axis], room_hi = scene.room.hi()[axis];
  const double core_len = scene.core.hi[axis] - scene.core.lo[axis];
  const double len = std::min(core_len, scene.room.size[axis] - core_len - 0.5);
  REQUIRE(len > 0.3);
  if (f[axis] > 0) {
    second.hi[axis] = room_hi;
    second.lo[axis] = room_hi - len;
  } else {
    second.lo[axis] = room_lo;
    second.hi[axis] = room_lo + len;
  }
  scene.clutter.push_back(second);
  scene.clutter_face_colors.push_back(scene.core_face_colors);

  const OrthoRender o = render_oracle_topdown(scene, 48);
  // oracle mask is exact, so the counter itself is what is under test
  CHECK(count_core_components(o.mask, 0.05) == 2);

  SceneSpec single = scene;
  single.clutter.clear();
  single.clutter_face_colors.clear();
  const OrthoRender o1 = render_oracle_topdown(single, 48);
  CHECK(count_core_components(o1.mask, 0.05) == 1);
}

TEST_CASE("field top-down render and abnormality proxy run end to end") {
  Rng rng(7);
  Config cfg;
  cfg.field = tiny_field();
  cfg.net = tiny_net();
  const Generator gen(cfg.net, cfg.field, rng);
  const Segmenter seg(cfg.net, rng);
  Rng arng(8);
  const AbnormalityResult res = layout_abnormality_proxy(gen, seg, 3, arng, cfg, 16, 0.05);
  CHECK(res.scenes == 3);
  CHECK(res.component_counts.size() == 3);
  CHECK(res.rate >= 0.0);
  CHECK(res.rate <= 1.0);
}

TEST_CASE("panorama dimensions and determinism") {
  Rng rng(9);
  const FieldConfig fc = tiny_field();
  const TriPlaneField field = TriPlaneField::random_field(fc, RoomBox(4, 3, 4), rng, 0.4);
  Image depth;
  const Image pano1 = render_panorama(field, Vec3(0, 1.4, 0), 16, &depth);
  const Image pano2 = render_panorama(field, Vec3(0, 1.4, 0), 16);
  CHECK(pano1.width == 2 * pano1.height);
  CHECK(depth.width == pano1.width);
  REQUIRE(pano1.data.size() == pano2.data.size());
  for (std::size_t i = 0; i < pano1.data.size(); ++i) CHECK(pano1.data[i] == pano2.data[i]);
}

TEST_CASE("trajectory frames move smoothly, bounded by an oracle-scene calibration") {
  // calibrate the per-frame pixel delta on an oracle scene along the same path
  SynthConfig priors;
  priors.image_size = 16;
  Rng rng(10);
  const SceneSpec scene = sample_scene(rng, priors);
  const auto frames_count = 6;
  LpaPose a, b;
  a.anchor_id = 0;
  a.position = Vec3(1.0, 1.3, 1.0);
  a.yaw_deg = 30;
  a.fov_deg = 70;
  b = a;
  b.position = Vec3(1.6, 1.3, 1.6);
  b.yaw_deg = 80;

  double oracle_delta = 0;
  {
    Image prev;
    for (int f = 0; f < frames_count; ++f) {
      const double t = (double)f / (frames_count - 1);
      GlobalCamera cam = lpa_to_global(a, scene.room);
      const GlobalCamera cb = lpa_to_global(b, scene.room);
      cam.position = (1 - t) * cam.position + t * cb.position;
      cam.yaw_deg = a.yaw_deg + t * (b.yaw_deg - a.yaw_deg);
      const OracleRender r = render_oracle(scene, cam, 16, 16);
      if (f > 0) {
        double d = 0;
        for (std::size_t i = 0; i < r.rgb.data.size(); ++i) {
          d += std::abs(r.rgb.data[i] - prev.data[i]);
        }
        oracle_delta = std::max(oracle_delta, d / r.rgb.data.size());
      }
      prev = r.rgb;
    }
  }

  Rng frng(11);
  const FieldConfig fc = tiny_field();
  const TriPlaneField field = TriPlaneField::random_field(fc, scene.room, frng, 0.3);
  const auto frames = render_trajectory(field, scene.room, a, b, frames_count, 16);
  REQUIRE(frames.size() == (std::size_t)frames_count);
  for (std::size_t f = 1; f < frames.size(); ++f) {
    double d = 0;
    for (std::size_t i = 0; i < frames[f].data.size(); ++i) {
      d += std::abs(frames[f].data[i] - frames[f - 1].data[i]);
    }
    d /= frames[f].data.size();
    CHECK(d < 3.0 * oracle_delta + 0.05);
  }
}

TEST_CASE("histogram totals and plot dimensions") {
  SynthConfig priors;
  priors.image_size = 16;
  const std::string dir = "/tmp/lpa_eval_hist_ds";
  std::filesystem::remove_all(dir);
  build_dataset(20, priors, 13, dir, 1);
  const Dataset ds = load_dataset(dir);
  Rng rng(14);
  const FieldConfig fc = tiny_field();
  const NetConfig net = tiny_net();
  CameraPredictor pred(net, fc, 16, false, rng);
  const PoseHistograms h = pose_histograms(pred, ds, 12);
  CHECK(h.total == 20);
  for (int c = 0; c < 7; ++c) {
    int sum = 0;
    for (int v : h.component_counts[(std::size_t)c]) sum += v;
    CHECK(sum == 20);
  }
  int anchor_sum = 0;
  for (int v : h.anchor_counts) anchor_sum += v;
  CHECK(anchor_sum == 20);
  write_histograms_csv(h, "/tmp/lpa_eval_hist.csv");
  CHECK(read_csv("/tmp/lpa_eval_hist.csv").size() == 1 + 7 * 12 + 4);
  const Image plot = histogram_plot(h.component_counts[3], 128, 64);
  CHECK(plot.width == 128);
  CHECK(plot.height == 64);
}

TEST_CASE("pose MAE: oracle-encoded logits hit the quantization floor") {
  SynthConfig priors;
  priors.image_size = 16;
  const std::string dir = "/tmp/lpa_eval_mae_ds";
  std::filesystem::remove_all(dir);
  build_dataset(16, priors, 15, dir, 1);
  const Dataset ds = load_dataset(dir);
  const auto gt = load_gt_sidecar(dir, GtAccess::Evaluation);

  // feed ground truth through encode/decode and measure the component error
  const FieldConfig fc;  // full-size ranges
  const PoseCodec codec(32, fc);
  for (const auto& g : gt) {
    const LpaPose dec = codec.decode(codec.encode_logits(g.pose, 200.0));
    CHECK(std::abs(dec.position.x() - g.pose.position.x()) <= 0.5 * codec.bin_width(0) + 1e-9);
    CHECK(circular_diff_deg(dec.yaw_deg, g.pose.yaw_deg) <= 0.5 * codec.bin_width(3) + 1e-9);
    CHECK(std::abs(dec.fov_deg - g.pose.fov_deg) <= 0.5 * codec.bin_width(6) + 1e-9);
  }
  // an untrained predictor on a uniform-pose eval set gives ~90 degree yaw MAE
  // (checked at acceptance scale; here just exercise the aggregate path)
  Rng rng(16);
  CameraPredictor pred(tiny_net(), fc, 16, false, rng);
  // note: codec bins differ; use the predictor's own codec via eval_pose_mae
  const PoseMae mae = eval_pose_mae(pred, ds, gt, 0);
  CHECK(mae.count == 16);
  CHECK(std::isfinite(mae.yaw));
}
