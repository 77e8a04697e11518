// Command-line surface for the LPA-GAN pipeline: dataset generation, the
// auxiliary supervised trainings, the joint optimization loop, and the
// evaluation suite.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "lpa/eval.hpp"
#include "lpa/samplers.hpp"
#include "lpa/synthroom.hpp"
#include "lpa/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

lpa::Config load_config_or_default(const std::string& path) {
  if (path.empty()) return lpa::Config{};
  return lpa::Config::load(path);
}

std::shared_ptr<lpa::Segmenter> load_segmenter(const lpa::Config& cfg,
                                               const std::string& path) {
  lpa::Rng rng(1);
  auto seg = std::make_shared<lpa::Segmenter>(cfg.net, rng);
  if (!path.empty()) seg->load(path);
  return seg;
}

std::vector<std::pair<lpa::Image, lpa::Image>> topdown_pairs(const lpa::SynthConfig& priors,
                                                             std::uint64_t seed, int count) {
  std::vector<std::pair<lpa::Image, lpa::Image>> out;
  lpa::Rng base(seed);
  for (int i = 0; i < count; ++i) {
    lpa::Rng srng = base.fork(0x70d0 + (std::uint64_t)i);
    const lpa::SceneSpec scene = lpa::sample_scene(srng, priors);
    lpa::OrthoRender o = lpa::render_oracle_topdown(scene, priors.image_size);
    out.emplace_back(std::move(o.rgb), std::move(o.mask));
  }
  return out;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LPA-GAN: anchor-aligned 3D room generation at desk scale"};
  app.require_subcommand(1);
  app.fallthrough();  // --config/--seed/--out are accepted after any verb

  std::string config_path, out_dir = "out", data_dir, seg_path, ckpt_dir;
  std::uint64_t seed = 1;
  app.add_option("--config", config_path, "JSON config file")->capture_default_str();
  app.add_option("--seed", seed, "Base RNG seed")->capture_default_str();
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();

  // genworld
  auto* genworld = app.add_subcommand("genworld", "Build a procedural room dataset");
  int gw_count = 1000, gw_views = 1;
  genworld->add_option("--count", gw_count, "Number of images");
  genworld->add_option("--views-per-scene", gw_views, "Views per scene (eval mode)");

  // train-segmenter
  auto* tseg = app.add_subcommand("train-segmenter", "Train the fg/bg segmenter on oracle masks");
  int ts_labels = 2000, ts_epochs = 10, ts_topdown = 128;
  tseg->add_option("--data", data_dir, "Dataset directory");
  tseg->add_option("--labels", ts_labels, "Number of training pairs");
  tseg->add_option("--epochs", ts_epochs, "Training epochs");
  tseg->add_option("--topdown", ts_topdown, "Extra top-down pairs in the mix");

  // train-anchor
  auto* tanchor = app.add_subcommand("train-anchor", "Train the anchor classifier");
  int ta_labels = 2000, ta_epochs = 12;
  tanchor->add_option("--data", data_dir, "Dataset directory");
  tanchor->add_option("--labels", ta_labels, "Number of labeled images");
  tanchor->add_option("--epochs", ta_epochs, "Training epochs");
  tanchor->add_option("--segmenter", seg_path, "Pretrained segmenter parameters");

  // train
  auto* train = app.add_subcommand("train", "Joint GAN + camera predictor training");
  bool no_balance = false, anchor_free = false, scratch = false;
  train->add_option("--data", data_dir, "Dataset directory (overrides config)");
  train->add_option("--segmenter", seg_path, "Pretrained segmenter parameters");
  train->add_flag("--no-balance", no_balance, "Disable anchor balancing");
  train->add_flag("--anchor-free", anchor_free, "Anchor-free ablation");
  train->add_flag("--scratch-predictor", scratch, "ScratchPredictor ablation");
  std::string resume_dir;
  train->add_option("--resume", resume_dir, "Checkpoint directory to resume from");

  // eval-pose
  auto* epose = app.add_subcommand("eval-pose", "Pose-MAE table against the GT sidecar");
  int ep_subset = 0;
  epose->add_option("--ckpt", ckpt_dir, "Checkpoint directory")->required();
  epose->add_option("--data", data_dir, "Eval dataset directory (defaults to config)");
  epose->add_option("--subset", ep_subset, "Evaluate on a strided subset");

  // histograms
  auto* hist = app.add_subcommand("histograms", "Predicted pose histograms");
  int h_bins = 36;
  hist->add_option("--ckpt", ckpt_dir, "Checkpoint directory")->required();
  hist->add_option("--data", data_dir, "Image set directory");
  hist->add_option("--bins", h_bins, "Histogram bins");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Feature-distribution distance");
  int m_count = 256;
  metrics->add_option("--ckpt", ckpt_dir, "Checkpoint directory")->required();
  metrics->add_option("--data", data_dir, "Real dataset directory");
  metrics->add_option("--count", m_count, "Generated/real sample count");

  // abnormality
  auto* abn = app.add_subcommand("abnormality", "Layout abnormality proxy rate");
  int a_scenes = 50, a_res = 48;
  abn->add_option("--ckpt", ckpt_dir, "Checkpoint directory")->required();
  abn->add_option("--scenes", a_scenes, "Number of generated scenes");
  abn->add_option("--resolution", a_res, "Top-down render resolution");

  // render
  auto* render_cmd = app.add_subcommand("render", "Panorama / trajectory renders");
  std::string r_mode = "panorama", r_room = "";
  int r_size = 128, r_frames = 16;
  render_cmd->add_option("--ckpt", ckpt_dir, "Checkpoint directory")->required();
  render_cmd->add_option("--mode", r_mode, "panorama | trajectory");
  render_cmd->add_option("--room", r_room, "Room size `x,y,z` (sampled when empty)");
  render_cmd->add_option("--size", r_size, "Image height (panorama) / size (trajectory)");
  render_cmd->add_option("--frames", r_frames, "Trajectory frame count");

  CLI11_PARSE(app, argc, argv);

  try {
    lpa::Config cfg = load_config_or_default(config_path);
    if (!data_dir.empty()) cfg.dataset_dir = data_dir;
    fs::create_directories(out_dir);

    if (*genworld) {
      cfg.synth.image_size = cfg.train.image_size;
      const lpa::BuildSummary s =
          lpa::build_dataset(gw_count, cfg.synth, seed, out_dir, cfg.train.threads, gw_views);
      std::printf("built %d images at %s (hash %016llx)\n", s.count, out_dir.c_str(),
                  (unsigned long long)s.content_hash);
      return 0;
    }

    if (*tseg) {
      lpa::Dataset ds = lpa::load_dataset(cfg.dataset_dir, /*with_masks=*/true);
      std::vector<const lpa::DatasetRecord*> recs;
      for (const auto& r : ds.records) {
        recs.push_back(&r);
        if ((int)recs.size() >= ts_labels) break;
      }
      lpa::Rng rng(seed);
      lpa::Segmenter seg(cfg.net, rng);
      lpa::SupervisedTrainOptions opt;
      opt.epochs = ts_epochs;
      const auto extra = topdown_pairs(cfg.synth, seed, ts_topdown);
      const auto res = lpa::train_segmenter(seg, recs, extra, opt, rng);
      seg.save(out_dir + "/segmenter.bin");
      write_json(out_dir + "/segmenter.json",
                 {{"pixel_accuracy", res.holdout_accuracy}, {"steps", res.steps}});
      std::printf("segmenter holdout pixel accuracy: %.4f\n", res.holdout_accuracy);
      return 0;
    }

    if (*tanchor) {
      lpa::Dataset ds = lpa::load_dataset(cfg.dataset_dir);
      std::vector<const lpa::DatasetRecord*> recs;
      for (const auto& r : ds.records) {
        recs.push_back(&r);
        if ((int)recs.size() >= ta_labels) break;
      }
      lpa::Rng rng(seed);
      lpa::AnchorClassifier cls(cfg.net, rng);
      if (!seg_path.empty()) {
        const auto seg = load_segmenter(cfg, seg_path);
        cls.init_backbone_from(*seg, true);
      }
      lpa::SupervisedTrainOptions opt;
      opt.epochs = ta_epochs;
      const auto res = lpa::train_anchor_classifier(cls, recs, opt, rng);
      cls.params().save(out_dir + "/anchor_classifier.bin");
      write_json(out_dir + "/anchor_classifier.json",
                 {{"holdout_accuracy", res.holdout_accuracy},
                  {"labels", (int)recs.size()},
                  {"steps", res.steps}});
      std::printf("anchor classifier holdout accuracy: %.4f\n", res.holdout_accuracy);
      return 0;
    }

    if (*train) {
      cfg.train.seed = seed;
      if (no_balance) cfg.train.balance = false;
      if (anchor_free) cfg.train.anchor_free = true;
      if (scratch) cfg.train.scratch_predictor = true;
      lpa::Dataset ds = lpa::load_dataset(cfg.dataset_dir);
      auto seg = load_segmenter(cfg, seg_path);
      lpa::Trainer trainer(cfg, std::move(ds), seg, out_dir);
      if (!resume_dir.empty()) trainer.load_checkpoint(resume_dir);
      trainer.train();
      std::printf("training finished at step %ld (gsr fallbacks: %d)\n",
                  trainer.gan_steps_done(), trainer.gsr_fallbacks());
      return 0;
    }

    if (*epose) {
      const lpa::CheckpointBundle b = lpa::load_checkpoint_bundle(ckpt_dir);
      const std::string dir = data_dir.empty() ? b.cfg.dataset_dir : data_dir;
      const lpa::Dataset ds = lpa::load_dataset(dir);
      const auto gt = lpa::load_gt_sidecar(dir, lpa::GtAccess::Evaluation);
      const lpa::PoseMae mae = lpa::eval_pose_mae(*b.pred, ds, gt, ep_subset);
      std::printf("pose MAE over %d images\n", mae.count);
      std::printf("  x     %7.3f m\n  y     %7.3f m\n  z     %7.3f m\n", mae.x, mae.y, mae.z);
      std::printf("  yaw   %7.2f deg\n  pitch %7.2f deg\n  roll  %7.2f deg\n", mae.yaw,
                  mae.pitch, mae.roll);
      std::printf("  fov   %7.2f deg\n  anchor accuracy %.4f\n", mae.fov, mae.anchor_accuracy);
      std::ofstream f(out_dir + "/pose_mae.csv");
      f << "mae_x,mae_y,mae_z,mae_yaw,mae_pitch,mae_roll,mae_fov,anchor_acc,count\n"
        << mae.x << "," << mae.y << "," << mae.z << "," << mae.yaw << "," << mae.pitch << ","
        << mae.roll << "," << mae.fov << "," << mae.anchor_accuracy << "," << mae.count << "\n";
      return 0;
    }

    if (*hist) {
      const lpa::CheckpointBundle b = lpa::load_checkpoint_bundle(ckpt_dir);
      const std::string dir = data_dir.empty() ? b.cfg.dataset_dir : data_dir;
      const lpa::Dataset ds = lpa::load_dataset(dir);
      const lpa::PoseHistograms h = lpa::pose_histograms(*b.pred, ds, h_bins);
      lpa::write_histograms_csv(h, out_dir + "/histograms.csv");
      static const char* names[7] = {"x", "y", "z", "yaw", "pitch", "roll", "fov"};
      for (int c = 0; c < 7; ++c) {
        lpa::write_png(out_dir + "/hist_" + names[c] + ".png",
                       lpa::histogram_plot(h.component_counts[(std::size_t)c]));
      }
      std::vector<int> anchors(h.anchor_counts.begin(), h.anchor_counts.end());
      lpa::write_png(out_dir + "/hist_anchor.png", lpa::histogram_plot(anchors));
      // label histogram straight from labels.csv for cross-checking
      std::array<int, 4> label_counts{};
      for (const auto& r : ds.records) label_counts[(std::size_t)r.anchor_label]++;
      write_json(out_dir + "/label_anchor_counts.json",
                 {{"counts", label_counts}, {"total", (int)ds.records.size()}});
      std::printf("histograms over %d images written to %s\n", h.total, out_dir.c_str());
      return 0;
    }

    if (*metrics) {
      const lpa::CheckpointBundle b = lpa::load_checkpoint_bundle(ckpt_dir);
      const std::string dir = data_dir.empty() ? b.cfg.dataset_dir : data_dir;
      const lpa::Dataset ds = lpa::load_dataset(dir);
      lpa::Rng rng(seed);
      const lpa::PoseCodec codec(b.cfg.net.pose_bins, b.cfg.field, b.cfg.train.anchor_free);

      std::vector<lpa::Image> generated;
      for (int i = 0; i < m_count; ++i) {
        lpa::nn::NoGradGuard ng;
        const lpa::nn::Tensor z = lpa::nn::Tensor::randn({b.cfg.net.latent_dim}, rng);
        const lpa::RoomBox room(rng.uniform(b.cfg.synth.room_min_x, b.cfg.synth.room_max_x),
                                rng.uniform(b.cfg.synth.room_min_y, b.cfg.synth.room_max_y),
                                rng.uniform(b.cfg.synth.room_min_z, b.cfg.synth.room_max_z));
        const lpa::TriPlaneField field = b.gen->generate(z, room);
        const auto poses = lpa::psr_sample(field, room, 1, rng, codec, b.cfg.sampler);
        const lpa::RaySet rays = lpa::generate_rays(codec.to_global(poses[0], room),
                                                    b.cfg.train.image_size,
                                                    b.cfg.train.image_size);
        const lpa::RenderOutput out =
            lpa::render(field, rays, b.cfg.field.render_steps).to_output();
        lpa::Image img(out.width, out.height, 3);
        img.data = out.rgb;
        generated.push_back(std::move(img));
      }
      std::vector<const lpa::ImageU8*> real;
      for (int i = 0; i < std::min<int>(m_count, (int)ds.records.size()); ++i) {
        real.push_back(&ds.records[(std::size_t)i].image);
      }
      const auto f_real = lpa::embed_images(*b.seg, real);
      const auto f_fake = lpa::embed_render_outputs(*b.seg, generated);
      bool reg = false;
      const double d = lpa::feature_distribution_distance(f_real, f_fake, &reg);
      write_json(out_dir + "/metrics.json",
                 {{"feature_distribution_distance", d},
                  {"generated", (int)generated.size()},
                  {"real", (int)real.size()},
                  {"regularized", reg}});
      std::printf("feature distribution distance: %.6f\n", d);
      return 0;
    }

    if (*abn) {
      const lpa::CheckpointBundle b = lpa::load_checkpoint_bundle(ckpt_dir);
      lpa::Rng rng(seed);
      const lpa::AbnormalityResult res =
          lpa::layout_abnormality_proxy(*b.gen, *b.seg, a_scenes, rng, b.cfg, a_res);
      json counts = json::array();
      for (int c : res.component_counts) counts.push_back(c);
      write_json(out_dir + "/abnormality.json",
                 {{"rate", res.rate}, {"scenes", res.scenes}, {"component_counts", counts}});
      std::printf("abnormality rate: %.4f over %d scenes\n", res.rate, res.scenes);
      return 0;
    }

    if (*render_cmd) {
      const lpa::CheckpointBundle b = lpa::load_checkpoint_bundle(ckpt_dir);
      lpa::Rng rng(seed);
      lpa::RoomBox room(rng.uniform(b.cfg.synth.room_min_x, b.cfg.synth.room_max_x),
                        rng.uniform(b.cfg.synth.room_min_y, b.cfg.synth.room_max_y),
                        rng.uniform(b.cfg.synth.room_min_z, b.cfg.synth.room_max_z));
      if (!r_room.empty()) {
        double x, y, z;
        if (std::sscanf(r_room.c_str(), "%lf,%lf,%lf", &x, &y, &z) != 3) {
          throw std::runtime_error("--room expects `x,y,z`");
        }
        room = lpa::RoomBox(x, y, z);
      }
      lpa::nn::NoGradGuard ng;
      const lpa::nn::Tensor z = lpa::nn::Tensor::randn({b.cfg.net.latent_dim}, rng);
      const lpa::TriPlaneField field = b.gen->generate(z, room);
      if (r_mode == "panorama") {
        lpa::Image depth;
        const lpa::Image pano =
            lpa::render_panorama(field, lpa::Vec3(0, room.size.y() / 2, 0), r_size, &depth);
        lpa::write_png(out_dir + "/panorama_rgb.png", pano);
        lpa::write_png(out_dir + "/panorama_depth.png", depth);
      } else if (r_mode == "trajectory") {
        lpa::LpaPose a, bpose;
        a.anchor_id = 0;
        a.position = lpa::Vec3(room.size.x() * 0.25, room.size.y() * 0.45,
                               room.size.z() * 0.25);
        a.yaw_deg = 20;
        a.fov_deg = 70;
        bpose = a;
        bpose.anchor_id = 0;
        bpose.position = lpa::Vec3(room.size.x() * 0.7, room.size.y() * 0.5,
                                   room.size.z() * 0.7);
        bpose.yaw_deg = 120;
        std::vector<lpa::Image> depths;
        const auto frames =
            lpa::render_trajectory(field, room, a, bpose, r_frames, r_size, &depths);
        for (std::size_t i = 0; i < frames.size(); ++i) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "frame_%03zu", i);
          lpa::write_png(out_dir + "/" + buf + "_rgb.png", frames[i]);
          lpa::write_png(out_dir + "/" + buf + "_depth.png", depths[i]);
        }
      } else {
        throw std::runtime_error("unknown render mode: " + r_mode);
      }
      std::printf("renders written to %s\n", out_dir.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    const json err = {{"error", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
