#pragma once

#include <cstdint>
#include <string>

namespace lpa {

/// Tri-plane field and renderer sizes. `max_room_*` is the predefined maximum
/// room volume all plane extents cover; it never changes across scenes.
struct FieldConfig {
  int plane_res = 64;
  int channels = 16;
  int decoder_hidden = 64;
  double max_room_x = 6.0;
  double max_room_y = 3.2;
  double max_room_z = 6.0;
  int render_steps = 48;
  double near_dist = 0.05;
  double background = 0.5;

  double far_dist() const;  // diameter of the maximum room box
};

struct NetConfig {
  int latent_dim = 128;
  int gen_base = 64;
  int disc_base = 64;
  int backbone_base = 16;
  int predictor_head = 64;
  int classifier_width = 32;
  int pose_bins = 32;
};

struct SamplerConfig {
  double softmin_tau = 1.0;
  int psr_fanout = 8;
  int gsr_candidates = 16;
  double fov_min = 40.0;
  double fov_max = 90.0;
  // PriorCam-style alternative: fov ~ Normal(60, 15), clamped to (fov_min, fov_max).
  bool fov_normal_prior = false;
  double pitch_min = -10.0;
  double pitch_max = 40.0;
  double roll_min = -5.0;
  double roll_max = 5.0;
};

struct TrainConfig {
  int image_size = 64;
  int batch_gan = 16;
  int batch_cam = 16;
  double lr_g = 2e-3;
  double lr_d = 2e-3;
  double lr_c = 1e-4;
  double lambda_b = 1.0;
  double lambda_c = 1.0;
  double lambda_r1 = 1.0;
  double lambda_k = 1.0;
  bool enable_distill = false;  // L_K stub off by default; term contributes 0
  int gan_steps_per_cam = 4;
  int warmup_steps = 500;
  int total_gan_steps = 4000;
  int ckpt_every = 1000;
  int eval_every = 500;
  int eval_subset = 512;
  bool balance = true;
  bool anchor_free = false;
  bool scratch_predictor = false;
  // Anchor-only CE on real images for the discriminator's pose head; pins the
  // generator's anchor gauge to the labels' core-object convention.
  bool anchor_ce_on_real = true;
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Priors of the procedural room world.
struct SynthConfig {
  int image_size = 64;
  double room_min_x = 3.0, room_max_x = 6.0;
  double room_min_y = 2.4, room_max_y = 3.2;
  double room_min_z = 3.0, room_max_z = 6.0;
  int clutter_min = 0, clutter_max = 6;
  double core_len_frac_min = 0.38, core_len_frac_max = 0.52;   // along front axis
  double core_wid_frac_min = 0.34, core_wid_frac_max = 0.46;   // along right axis
  double core_height_min = 0.45, core_height_max = 0.70;
  double clutter_size_min = 0.25, clutter_size_max = 0.8;
  // Camera prior for dataset images ("photographer" bias): with this
  // probability the yaw points at the core object center plus jitter,
  // otherwise it is uniform. Mirrors the heavy view bias of in-the-wild
  // photo collections.
  double cam_toward_core_prob = 0.9;
  double cam_yaw_jitter = 35.0;
  double cam_height_min = 0.9, cam_height_max = 1.9;
  double cam_pitch_min = -10.0, cam_pitch_max = 25.0;
  double cam_roll_max = 3.0;
  double cam_fov_min = 45.0, cam_fov_max = 75.0;
  double cam_wall_margin = 0.25;
  int rejection_budget = 200;
};

std::string synth_to_json(const SynthConfig& priors);
SynthConfig synth_from_json(const std::string& s);

struct Config {
  FieldConfig field;
  NetConfig net;
  SamplerConfig sampler;
  TrainConfig train;
  SynthConfig synth;
  std::string dataset_dir;

  static Config load(const std::string& path);
  void save(const std::string& path) const;
  std::string to_json_string() const;
  static Config from_json_string(const std::string& s);
  /// Hash of the canonical JSON dump; stored in checkpoints and manifests.
  std::uint64_t fingerprint() const;
};

}  // namespace lpa
