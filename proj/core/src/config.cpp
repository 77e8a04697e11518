#include "lpa/config.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "lpa/common.hpp"

namespace lpa {

using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    FieldConfig, plane_res, channels, decoder_hidden, max_room_x, max_room_y, max_room_z,
    render_steps, near_dist, background)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    NetConfig, latent_dim, gen_base, disc_base, backbone_base, predictor_head,
    classifier_width, pose_bins)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    SamplerConfig, softmin_tau, psr_fanout, gsr_candidates, fov_min, fov_max,
    fov_normal_prior, pitch_min, pitch_max, roll_min, roll_max)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    TrainConfig, image_size, batch_gan, batch_cam, lr_g, lr_d, lr_c, lambda_b, lambda_c,
    lambda_r1, lambda_k, enable_distill, gan_steps_per_cam, warmup_steps, total_gan_steps,
    ckpt_every, eval_every, eval_subset, balance, anchor_free, scratch_predictor,
    anchor_ce_on_real, seed, threads)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    SynthConfig, image_size, room_min_x, room_max_x, room_min_y, room_max_y, room_min_z,
    room_max_z, clutter_min, clutter_max, core_len_frac_min, core_len_frac_max,
    core_wid_frac_min, core_wid_frac_max, core_height_min, core_height_max,
    clutter_size_min, clutter_size_max, cam_toward_core_prob, cam_yaw_jitter,
    cam_height_min, cam_height_max, cam_pitch_min, cam_pitch_max, cam_roll_max,
    cam_fov_min, cam_fov_max, cam_wall_margin, rejection_budget)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    Config, field, net, sampler, train, synth, dataset_dir)

double FieldConfig::far_dist() const {
  return std::sqrt(max_room_x * max_room_x + max_room_y * max_room_y +
                   max_room_z * max_room_z);
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  in >> j;
  return j.get<Config>();
}

void Config::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config: " + path);
  out << to_json_string() << "\n";
}

std::string Config::to_json_string() const { return json(*this).dump(2); }

Config Config::from_json_string(const std::string& s) {
  return json::parse(s).get<Config>();
}

std::uint64_t Config::fingerprint() const { return fnv1a64(to_json_string()); }

std::string synth_to_json(const SynthConfig& priors) { return json(priors).dump(2); }

SynthConfig synth_from_json(const std::string& s) {
  return json::parse(s).get<SynthConfig>();
}

}  // namespace lpa
