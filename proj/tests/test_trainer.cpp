#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>

#include "lpa/eval.hpp"
#include "lpa/trainer.hpp"

using namespace lpa;

namespace {

Config tiny_config(const std::string& dataset_dir, std::uint64_t seed) {
  Config cfg;
  cfg.dataset_dir = dataset_dir;
  cfg.field.plane_res = 16;
  cfg.field.channels = 4;
  cfg.field.decoder_hidden = 8;
  cfg.field.render_steps = 8;
  cfg.net.latent_dim = 12;
  cfg.net.gen_base = 10;
  cfg.net.disc_base = 10;
  cfg.net.backbone_base = 6;
  cfg.net.pose_bins = 8;
  cfg.net.classifier_width = 8;
  cfg.sampler.gsr_candidates = 4;
  cfg.train.image_size = 16;
  cfg.train.batch_gan = 2;
  cfg.train.batch_cam = 3;
  cfg.train.warmup_steps = 2;
  cfg.train.total_gan_steps = 6;
  cfg.train.ckpt_every = 0;
  cfg.train.eval_every = 0;
  cfg.train.seed = seed;
  cfg.synth.image_size = 16;
  return cfg;
}

struct Fixture {
  std::string dataset_dir = "/tmp/lpa_trainer_ds";
  std::shared_ptr<Segmenter> seg;
  Config cfg;

  explicit Fixture(std::uint64_t seed = 9) : cfg(tiny_config(dataset_dir, seed)) {
    static bool built = false;
    if (!built) {
      std::filesystem::remove_all(dataset_dir);
      build_dataset(48, cfg.synth, 21, dataset_dir, 2);
      built = true;
    }
    Rng rng(1234);
    seg = std::make_shared<Segmenter>(cfg.net, rng);
  }

  Dataset dataset() const { return load_dataset(dataset_dir); }
};

}  // namespace

TEST_CASE("gan step updates G and D only; camera step updates C only") {
  Fixture fx;
  Trainer tr(fx.cfg, fx.dataset(), fx.seg, "/tmp/lpa_trainer_run_freeze");

  const auto g0 = tr.hash_generator();
  const auto d0 = tr.hash_discriminator();
  const auto c0 = tr.hash_predictor();
  const auto s0 = tr.hash_segmenter();

  const StepLog gan_log = tr.train_step_gan();
  CHECK_FALSE(gan_log.aborted);
  CHECK(gan_log.finite());
  CHECK(tr.hash_generator() != g0);
  CHECK(tr.hash_discriminator() != d0);
  CHECK(tr.hash_predictor() == c0);
  CHECK(tr.hash_segmenter() == s0);

  const auto g1 = tr.hash_generator();
  const auto d1 = tr.hash_discriminator();
  const StepLog cam_log = tr.train_step_camera();
  CHECK_FALSE(cam_log.aborted);
  CHECK(std::isfinite(cam_log.lc_cam));
  CHECK(tr.hash_generator() == g1);
  CHECK(tr.hash_discriminator() == d1);
  CHECK(tr.hash_predictor() != c0);
  CHECK(tr.hash_segmenter() == s0);
}

TEST_CASE("an untrained predictor scores near the uniform-logits CE") {
  Fixture fx;
  Trainer tr(fx.cfg, fx.dataset(), fx.seg, "/tmp/lpa_trainer_run_ce0");
  const StepLog log = tr.train_step_camera();
  const double uniform = 7.0 * std::log((double)fx.cfg.net.pose_bins) + std::log(4.0);
  CHECK(log.lc_cam == doctest::Approx(uniform).epsilon(0.10));
}

TEST_CASE("predictor-only steps reduce camera CE against a frozen generator") {
  Fixture fx;
  Trainer tr(fx.cfg, fx.dataset(), fx.seg, "/tmp/lpa_trainer_run_conv");
  double first = 0, last = 0;
  const int steps = 500;
  for (int i = 0; i < steps; ++i) {
    const StepLog log = tr.train_step_camera();
    if (i < 25) first += log.lc_cam;
    if (i >= steps - 25) last += log.lc_cam;
  }
  CHECK(last < first * 0.9);
}

TEST_CASE("large boundary weight pulls background depth to the walls") {
  Fixture fx;
  Config cfg = fx.cfg;
  cfg.train.lambda_b = 100.0;
  cfg.train.warmup_steps = 1000;  // keep PSR poses throughout
  cfg.train.seed = 31;
  Trainer tr(cfg, fx.dataset(), fx.seg, "/tmp/lpa_trainer_run_lb");

  auto probe_gap = [&] {
    // mean |d_p - d_b| over a probe render of a fresh generated scene
    nn::NoGradGuard ng;
    Rng prng(555);
    const nn::Tensor z = nn::Tensor::randn({cfg.net.latent_dim}, prng);
    const RoomBox room(4.5, 2.8, 4.5);
    const TriPlaneField field = tr.generator().generate(z, room);
    LpaPose pose;
    pose.anchor_id = 0;
    pose.position = Vec3(1.4, 1.3, 1.4);
    pose.yaw_deg = 45;
    pose.fov_deg = 70;
    const RaySet rays = generate_rays(pose, room, 16, 16);
    const RenderOutput out = render(field, rays, cfg.field.render_steps).to_output();
    double gap = 0;
    for (int i = 0; i < rays.count(); ++i) {
      const double db = ray_box_distance(rays.origin, rays.directions.col(i), room);
      gap += std::abs(out.depth[(std::size_t)i] - db);
    }
    return gap / rays.count();
  };

  const double before = probe_gap();
  for (int i = 0; i < 200; ++i) tr.train_step_gan();
  const double after = probe_gap();
  CHECK(after < before);
}

TEST_CASE("balanced and raw index sets differ as configured") {
  Fixture fx;
  Config balanced = fx.cfg;
  Config raw = fx.cfg;
  raw.train.balance = false;
  Trainer tb(balanced, fx.dataset(), fx.seg, "/tmp/lpa_trainer_run_bal");
  Trainer trw(raw, fx.dataset(), fx.seg, "/tmp/lpa_trainer_run_raw");
  const Dataset ds = fx.dataset();
  std::array<int, 4> counts{};
  for (const auto& r : ds.records) counts[(std::size_t)r.anchor_label]++;
  const int max_count = *std::max_element(counts.begin(), counts.end());
  CHECK(tb.train_indices().size() == (std::size_t)(4 * max_count));
  CHECK(trw.train_indices().size() == ds.records.size());
}

TEST_CASE("two runs with one seed are bit-identical; different seeds diverge") {
  Fixture fx;
  auto run_hashes = [&](std::uint64_t seed) {
    Config cfg = tiny_config(fx.dataset_dir, seed);
    cfg.train.total_gan_steps = 4;
    Rng srng(1234);
    auto seg = std::make_shared<Segmenter>(cfg.net, srng);
    Trainer tr(cfg, load_dataset(fx.dataset_dir), seg, "/tmp/lpa_trainer_run_det_" +
                                                            std::to_string(seed));
    tr.train();
    return std::array<std::uint64_t, 3>{tr.hash_generator(), tr.hash_discriminator(),
                                        tr.hash_predictor()};
  };
  const auto h1 = run_hashes(7);
  const auto h2 = run_hashes(7);
  CHECK(h1 == h2);
  const auto h3 = run_hashes(8);
  CHECK(h1 != h3);
}

TEST_CASE("checkpoint resume reproduces the next step bit-for-bit") {
  Fixture fx;
  Config cfg = fx.cfg;
  cfg.train.seed = 99;
  const std::string ckpt_dir = "/tmp/lpa_trainer_ckpt";
  std::filesystem::remove_all(ckpt_dir);

  Rng srng(1234);
  auto seg1 = std::make_shared<Segmenter>(cfg.net, srng);
  Trainer tr1(cfg, fx.dataset(), seg1, "/tmp/lpa_trainer_run_ck1");
  for (int i = 0; i < 3; ++i) tr1.train_step_gan();
  tr1.train_step_camera();
  tr1.save_checkpoint(ckpt_dir);
  const StepLog next1 = tr1.train_step_gan();

  Rng srng2(777);  // different init; overwritten by the checkpoint load
  auto seg2 = std::make_shared<Segmenter>(cfg.net, srng2);
  Trainer tr2(cfg, fx.dataset(), seg2, "/tmp/lpa_trainer_run_ck2");
  tr2.load_checkpoint(ckpt_dir);
  const StepLog next2 = tr2.train_step_gan();

  CHECK(next1.loss_g == next2.loss_g);
  CHECK(next1.loss_d == next2.loss_d);
  CHECK(next1.lb == next2.lb);
  CHECK(tr1.hash_generator() == tr2.hash_generator());
  CHECK(tr1.hash_discriminator() == tr2.hash_discriminator());
  CHECK(tr1.hash_predictor() == tr2.hash_predictor());

  // config fingerprint mismatch is rejected
  Config other = cfg;
  other.train.lr_g = 123.0;
  Rng srng3(1);
  auto seg3 = std::make_shared<Segmenter>(other.net, srng3);
  Trainer tr3(other, fx.dataset(), seg3, "/tmp/lpa_trainer_run_ck3");
  CHECK_THROWS(tr3.load_checkpoint(ckpt_dir));
}

TEST_CASE("training never opens the ground-truth sidecar when eval is off") {
  Fixture fx;
  Config cfg = fx.cfg;
  cfg.train.total_gan_steps = 3;
  cfg.train.eval_every = 0;
  const auto before = gt_sidecar_open_count();
  Rng srng(1234);
  auto seg = std::make_shared<Segmenter>(cfg.net, srng);
  Trainer tr(cfg, fx.dataset(), seg, "/tmp/lpa_trainer_run_taint");
  tr.train();
  CHECK(gt_sidecar_open_count() == before);
  // the evaluation path itself does open it
  tr.evaluate_pose_mae(8);
  CHECK(gt_sidecar_open_count() == before + 1);
}

TEST_CASE("pose-MAE evaluation emits rows when enabled") {
  Fixture fx;
  Config cfg = fx.cfg;
  cfg.train.total_gan_steps = 2;
  cfg.train.eval_every = 1;
  cfg.train.eval_subset = 16;
  Rng srng(1234);
  auto seg = std::make_shared<Segmenter>(cfg.net, srng);
  Trainer tr(cfg, fx.dataset(), seg, "/tmp/lpa_trainer_run_eval");
  tr.train();
  const auto rows = read_csv("/tmp/lpa_trainer_run_eval/eval.csv");
  CHECK(rows.size() >= 3);  // header + initial + per-step rows
  const PoseMae mae = tr.evaluate_pose_mae(16);
  CHECK(mae.count == 16);
  CHECK(std::isfinite(mae.yaw));
  CHECK(mae.anchor_accuracy >= 0.0);
  CHECK(mae.anchor_accuracy <= 1.0);
}
