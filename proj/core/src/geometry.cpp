#include "lpa/geometry.hpp"

#include <cmath>
#include <limits>

namespace lpa {

bool RoomBox::contains(const Vec3& p, double margin) const {
  const Vec3 l = lo(), h = hi();
  return p.x() >= l.x() + margin && p.x() <= h.x() - margin &&
         p.y() >= l.y() + margin && p.y() <= h.y() - margin &&
         p.z() >= l.z() + margin && p.z() <= h.z() - margin;
}

Mat3 GlobalCamera::rotation() const {
  return rotation_from_euler(yaw_deg, pitch_deg, roll_deg);
}

Mat3 rotation_from_euler(double yaw_deg, double pitch_deg, double roll_deg) {
  const double a = deg2rad(yaw_deg), b = deg2rad(pitch_deg), c = deg2rad(roll_deg);
  Mat3 ry, rx, rz;
  ry << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  rx << 1, 0, 0, 0, std::cos(b), -std::sin(b), 0, std::sin(b), std::cos(b);
  rz << std::cos(c), -std::sin(c), 0, std::sin(c), std::cos(c), 0, 0, 0, 1;
  return ry * rx * rz;
}

Eigen::Vector3d euler_from_rotation(const Mat3& r) {
  // r = Ry(a) Rx(b) Rz(c); r(1,2) = -sin b.
  double sb = -r(1, 2);
  sb = std::max(-1.0, std::min(1.0, sb));
  const double b = std::asin(sb);
  double a, c;
  const double cb = std::cos(b);
  if (cb > 1e-12) {
    a = std::atan2(r(0, 2), r(2, 2));
    c = std::atan2(r(1, 0), r(1, 1));
  } else {
    // Gimbal lock: only a -+ c is determined; fix roll = 0.
    c = 0.0;
    a = std::atan2(r(0, 1) * (sb > 0 ? 1.0 : -1.0), r(0, 0));
  }
  return {wrap_deg_0_360(rad2deg(a)), rad2deg(b), wrap_deg_pm180(rad2deg(c))};
}

namespace {

void require_valid_room(const RoomBox& room) {
  if (!room.valid()) {
    throw std::invalid_argument("RoomBox: all extents must be strictly positive");
  }
}

// Exact 90-degree yaw steps; basis k = yaw_90^k.
const Mat3& yaw90(int k) {
  static const std::array<Mat3, 4> m = [] {
    std::array<Mat3, 4> out;
    out[0] = Mat3::Identity();
    out[1] << 0, 0, 1, 0, 1, 0, -1, 0, 0;
    out[2] << -1, 0, 0, 0, 1, 0, 0, 0, -1;
    out[3] << 0, 0, -1, 0, 1, 0, 1, 0, 0;
    return out;
  }();
  return m[((k % 4) + 4) % 4];
}

}  // namespace

std::array<AnchorFrame, 4> anchor_frames(const RoomBox& room) {
  require_valid_room(room);
  const double hx = room.size.x() / 2.0, hz = room.size.z() / 2.0;
  // Positive-yaw (counter-clockwise from above) corner order.
  const std::array<Vec3, 4> corners = {Vec3(-hx, 0, -hz), Vec3(-hx, 0, hz),
                                       Vec3(hx, 0, hz), Vec3(hx, 0, -hz)};
  std::array<AnchorFrame, 4> frames;
  for (int k = 0; k < 4; ++k) {
    frames[k].anchor_id = k;
    frames[k].origin = corners[k];
    frames[k].basis = yaw90(k);
  }
  return frames;
}

std::array<AnchorFrame, 4> anchor_frames_for_core(const RoomBox& room,
                                                  const Vec3& core_front) {
  auto canonical = anchor_frames(room);
  if (std::abs(core_front.y()) > 1e-9 || core_front.norm() < 1e-9) {
    throw std::invalid_argument("core_front must be a horizontal direction");
  }
  const Vec3 f = core_front.normalized();
  const Vec3 left = Vec3(0, 1, 0).cross(f);
  // Head wall is the one the core object backs onto (inward normal = f).
  // The head-left corner maximizes projection on `left` among that wall's
  // two corners.
  const int axis = std::abs(f.x()) > std::abs(f.z()) ? 0 : 2;
  const double half_extent = room.size[axis] / 2.0;
  int best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 4; ++k) {
    const Vec3& c = canonical[k].origin;
    const bool on_head_wall = c.dot(-f) > half_extent * 0.5;
    if (!on_head_wall) continue;
    const double score = c.dot(left);
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }
  std::array<AnchorFrame, 4> out;
  for (int j = 0; j < 4; ++j) {
    out[j] = canonical[(best + j) % 4];
    out[j].anchor_id = j;
  }
  return out;
}

GlobalCamera lpa_to_global(const LpaPose& pose, const std::array<AnchorFrame, 4>& frames) {
  if (pose.anchor_id < 0 || pose.anchor_id > 3) {
    throw std::invalid_argument("LpaPose: anchor_id out of range");
  }
  const AnchorFrame& fr = frames[static_cast<std::size_t>(pose.anchor_id)];
  GlobalCamera cam;
  cam.position = fr.origin + fr.basis * pose.position;
  const Mat3 r_local = rotation_from_euler(pose.yaw_deg, pose.pitch_deg, pose.roll_deg);
  const Eigen::Vector3d e = euler_from_rotation(fr.basis * r_local);
  cam.yaw_deg = e.x();
  cam.pitch_deg = e.y();
  cam.roll_deg = e.z();
  cam.fov_deg = pose.fov_deg;
  return cam;
}

GlobalCamera lpa_to_global(const LpaPose& pose, const RoomBox& room) {
  return lpa_to_global(pose, anchor_frames(room));
}

LpaPose global_to_lpa(const GlobalCamera& cam, const RoomBox& /*room*/,
                      const std::array<AnchorFrame, 4>& frames) {
  const int a = assign_anchor(cam, frames);
  const AnchorFrame& fr = frames[static_cast<std::size_t>(a)];
  LpaPose pose;
  pose.anchor_id = a;
  pose.position = fr.basis.transpose() * (cam.position - fr.origin);
  const Eigen::Vector3d e = euler_from_rotation(fr.basis.transpose() * cam.rotation());
  pose.yaw_deg = e.x();
  pose.pitch_deg = e.y();
  pose.roll_deg = e.z();
  pose.fov_deg = cam.fov_deg;
  return pose;
}

LpaPose global_to_lpa(const GlobalCamera& cam, const RoomBox& room) {
  return global_to_lpa(cam, room, anchor_frames(room));
}

int assign_anchor(const GlobalCamera& cam, const RoomBox& room) {
  require_valid_room(room);
  return assign_anchor(cam, anchor_frames(room));
}

int assign_anchor(const GlobalCamera& cam, const std::array<AnchorFrame, 4>& frames) {
  if (!(cam.fov_deg > 0.0 && cam.fov_deg < 180.0)) {
    throw std::invalid_argument("assign_anchor: fov must be in (0, 180)");
  }
  const Mat3 r_t = cam.rotation().transpose();
  const double half_tan = std::tan(deg2rad(cam.fov_deg) / 2.0);

  int best_visible = -1;
  double best_sx = std::numeric_limits<double>::infinity();
  int best_fallback = 0;
  double best_leftward = std::numeric_limits<double>::infinity();

  for (int k = 0; k < 4; ++k) {
    const Vec3 v = r_t * (frames[static_cast<std::size_t>(k)].origin - cam.position);
    const double depth = -v.z();
    if (depth > 1e-12) {
      const double sx = v.x() / (depth * half_tan);
      const double sy = v.y() / (depth * half_tan);
      if (std::abs(sx) <= 1.0 && std::abs(sy) <= 1.0) {
        // Ascending k means screen-x ties resolve to the smaller anchor id.
        if (sx < best_sx - 1e-12) {
          best_sx = sx;
          best_visible = k;
        }
        continue;
      }
    }
    // Horizontal view angle; left image edge sits at -fov/2 (aspect 1 makes
    // the horizontal half-angle equal the vertical one).
    const double phi = std::atan2(v.x(), depth);
    double leftward = deg2rad(cam.fov_deg) / 2.0 * -1.0 - phi;
    leftward = std::fmod(leftward, 2.0 * kPi);
    if (leftward < 0) leftward += 2.0 * kPi;
    if (leftward < best_leftward - 1e-15) {
      best_leftward = leftward;
      best_fallback = k;
    }
  }
  return best_visible >= 0 ? best_visible : best_fallback;
}

RaySet generate_rays(const GlobalCamera& cam, int width, int height) {
  if (width != height || width < 1) {
    throw std::invalid_argument("generate_rays: resolution must be square and >= 1");
  }
  if (!(cam.fov_deg > 0.0 && cam.fov_deg < 180.0)) {
    throw std::invalid_argument("generate_rays: fov must be in (0, 180)");
  }
  RaySet rays;
  rays.origin = cam.position;
  rays.width = width;
  rays.height = height;
  rays.directions.resize(3, static_cast<Eigen::Index>(width) * height);
  const Mat3 r = cam.rotation();
  const double t = std::tan(deg2rad(cam.fov_deg) / 2.0);
  for (int j = 0; j < height; ++j) {
    const double v = (1.0 - 2.0 * (j + 0.5) / height) * t;
    for (int i = 0; i < width; ++i) {
      const double u = (2.0 * (i + 0.5) / width - 1.0) * t;
      const Vec3 d = (r * Vec3(u, v, -1.0)).normalized();
      rays.directions.col(static_cast<Eigen::Index>(j) * width + i) = d;
    }
  }
  return rays;
}

RaySet generate_rays(const LpaPose& pose, const RoomBox& room, int width, int height) {
  return generate_rays(lpa_to_global(pose, room), width, height);
}

double ray_box_distance(const Vec3& origin, const Vec3& direction, const RoomBox& room) {
  require_valid_room(room);
  const Vec3 l = room.lo(), h = room.hi();
  for (int i = 0; i < 3; ++i) {
    if (!(origin[i] > l[i] && origin[i] < h[i])) {
      throw std::invalid_argument("ray_box_distance: origin must be strictly inside the box");
    }
  }
  double t_exit = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(direction[i]) < 1e-300) continue;
    const double t1 = (l[i] - origin[i]) / direction[i];
    const double t2 = (h[i] - origin[i]) / direction[i];
    t_exit = std::min(t_exit, std::max(t1, t2));
  }
  return t_exit;
}

}  // namespace lpa
