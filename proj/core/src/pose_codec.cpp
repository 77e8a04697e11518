#include "lpa/pose_codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lpa {

PoseCodec::PoseCodec(int bins, const FieldConfig& field, bool anchor_free)
    : bins_(bins), anchor_free_(anchor_free) {
  if (bins < 2) throw std::invalid_argument("PoseCodec: bins must be >= 2");
  // Position ranges span the maximum room size. Local anchor frames put the
  // interior in the (+x, +z) quadrant; global (anchor-free) coordinates are
  // centered on the floor center.
  if (anchor_free_) {
    lo_ = {-field.max_room_x / 2, 0.0, -field.max_room_z / 2, 0.0, -90.0, -180.0, 0.0};
    hi_ = {field.max_room_x / 2, field.max_room_y, field.max_room_z / 2, 360.0, 90.0, 180.0,
           180.0};
  } else {
    lo_ = {0.0, 0.0, 0.0, 0.0, -90.0, -180.0, 0.0};
    hi_ = {field.max_room_x, field.max_room_y, field.max_room_z, 360.0, 90.0, 180.0, 180.0};
  }
}

int PoseCodec::bin_of(int comp, double v) const {
  const double t = (v - lo(comp)) / (hi(comp) - lo(comp));
  const int b = static_cast<int>(std::floor(t * bins_));
  return std::clamp(b, 0, bins_ - 1);
}

double PoseCodec::bin_center(int comp, int b) const {
  return lo(comp) + (b + 0.5) * bin_width(comp);
}

std::array<double, PoseCodec::kComponents> PoseCodec::components_of(const LpaPose& p) const {
  return {p.position.x(), p.position.y(), p.position.z(),
          p.yaw_deg,      p.pitch_deg,    p.roll_deg,
          p.fov_deg};
}

std::array<int, 8> PoseCodec::encode(const LpaPose& pose) const {
  std::array<int, 8> out{};
  out[0] = pose.anchor_id;
  const auto c = components_of(pose);
  for (int i = 0; i < kComponents; ++i) out[static_cast<std::size_t>(i) + 1] = bin_of(i, c[static_cast<std::size_t>(i)]);
  return out;
}

PoseLogits PoseCodec::encode_logits(const LpaPose& pose, double margin) const {
  PoseLogits l;
  l.bins = bins_;
  l.data = Eigen::VectorXd::Zero(logits_size());
  const auto t = encode(pose);
  l.data(t[0]) = margin;
  for (int i = 0; i < kComponents; ++i) {
    l.data(4 + static_cast<Eigen::Index>(i) * bins_ + t[static_cast<std::size_t>(i) + 1]) = margin;
  }
  return l;
}

LpaPose PoseCodec::decode(const PoseLogits& logits) const {
  if (logits.data.size() != logits_size()) {
    throw std::invalid_argument("PoseCodec::decode: logits size mismatch");
  }
  LpaPose pose;
  if (anchor_free_) {
    pose.anchor_id = 0;
  } else {
    Eigen::Index arg = 0;
    logits.anchor_logits().maxCoeff(&arg);
    pose.anchor_id = static_cast<int>(arg);
  }
  std::array<double, kComponents> vals{};
  for (int comp = 0; comp < kComponents; ++comp) {
    const Eigen::VectorXd lg = logits.component_logits(comp);
    const double mx = lg.maxCoeff();
    Eigen::ArrayXd p = (lg.array() - mx).exp();
    p /= p.sum();
    double v = 0;
    for (int b = 0; b < bins_; ++b) v += p(b) * bin_center(comp, b);
    vals[static_cast<std::size_t>(comp)] = v;
  }
  pose.position = Vec3(vals[0], vals[1], vals[2]);
  pose.yaw_deg = wrap_deg_0_360(vals[3]);
  pose.pitch_deg = vals[4];
  pose.roll_deg = vals[5];
  pose.fov_deg = vals[6];
  return pose;
}

GlobalCamera PoseCodec::to_global(const LpaPose& pose, const RoomBox& room) const {
  if (!anchor_free_) return lpa_to_global(pose, room);
  GlobalCamera cam;
  cam.position = pose.position;
  cam.yaw_deg = pose.yaw_deg;
  cam.pitch_deg = pose.pitch_deg;
  cam.roll_deg = pose.roll_deg;
  cam.fov_deg = pose.fov_deg;
  return cam;
}

LpaPose PoseCodec::from_global(const GlobalCamera& cam, const RoomBox& room) const {
  if (!anchor_free_) return global_to_lpa(cam, room);
  LpaPose pose;
  pose.anchor_id = 0;
  pose.position = cam.position;
  pose.yaw_deg = wrap_deg_0_360(cam.yaw_deg);
  pose.pitch_deg = cam.pitch_deg;
  pose.roll_deg = cam.roll_deg;
  pose.fov_deg = cam.fov_deg;
  return pose;
}

}  // namespace lpa
