#pragma once

#include <Eigen/Dense>
#include <array>

#include "lpa/common.hpp"

namespace lpa {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Cuboid room. Origin is the center of the floor, y-axis up:
/// floor at y = 0, ceiling at y = size.y(), walls at x = +-size.x()/2 and
/// z = +-size.z()/2.
struct RoomBox {
  Vec3 size{4.0, 3.0, 4.0};

  RoomBox() = default;
  explicit RoomBox(const Vec3& s) : size(s) {}
  RoomBox(double x, double y, double z) : size(x, y, z) {}

  bool valid() const {
    return size.x() > 0.0 && size.y() > 0.0 && size.z() > 0.0;
  }
  Vec3 lo() const { return {-size.x() / 2.0, 0.0, -size.z() / 2.0}; }
  Vec3 hi() const { return {size.x() / 2.0, size.y(), size.z() / 2.0}; }
  bool contains(const Vec3& p, double margin = 0.0) const;
  double diameter() const { return size.norm(); }
};

/// One wall-floor corner frame. `basis` columns are the local x, y, z axes in
/// room coordinates; the room interior lies in the local (+x, +z) quadrant and
/// local +y is up. All four bases are exact axis permutations (right-handed).
struct AnchorFrame {
  int anchor_id = 0;
  Vec3 origin = Vec3::Zero();
  Mat3 basis = Mat3::Identity();
};

/// The 8-DoF camera pose {a, x, y, z, yaw, pitch, roll, fov} in an anchor's
/// local frame. Angles in degrees; fov is the vertical field of view and the
/// aspect ratio is always 1.
struct LpaPose {
  int anchor_id = 0;
  Vec3 position = Vec3::Zero();
  double yaw_deg = 0.0;    // [0, 360)
  double pitch_deg = 0.0;  // [-90, 90]
  double roll_deg = 0.0;   // (-180, 180]
  double fov_deg = 60.0;   // (0, 180)
};

/// Camera in room coordinates.
struct GlobalCamera {
  Vec3 position = Vec3::Zero();
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  double roll_deg = 0.0;
  double fov_deg = 60.0;

  Mat3 rotation() const;
  Vec3 forward() const { return rotation() * Vec3(0, 0, -1); }
};

/// Intrinsic yaw (about +y), then pitch (about +x), then roll (about +z).
/// Camera forward is local -z after rotation, up is +y.
Mat3 rotation_from_euler(double yaw_deg, double pitch_deg, double roll_deg);

/// Inverse of rotation_from_euler. Returns {yaw in [0,360), pitch in
/// [-90,90], roll in (-180,180]}. At pitch = +-90 the roll is fixed to 0.
Eigen::Vector3d euler_from_rotation(const Mat3& r);

/// The four anchor frames in the canonical enumeration: anchor 0 at corner
/// (-x/2, 0, -z/2), ids advancing in positive-yaw order viewed from above.
/// Generated scenes use this enumeration directly.
std::array<AnchorFrame, 4> anchor_frames(const RoomBox& room);

/// Anchor frames re-enumerated for a scene whose core object backs onto a
/// wall and faces along `core_front` (axis-aligned horizontal unit vector
/// pointing into the room). Anchor 0 becomes the corner at the head-left of
/// the core object; order stays positive-yaw.
std::array<AnchorFrame, 4> anchor_frames_for_core(const RoomBox& room,
                                                  const Vec3& core_front);

GlobalCamera lpa_to_global(const LpaPose& pose, const RoomBox& room);

/// Re-expresses a camera in the frame chosen by assign_anchor.
LpaPose global_to_lpa(const GlobalCamera& cam, const RoomBox& room);

// Overloads against an explicit enumeration (e.g. the core-relative frames of
// a synthetic scene). pose.anchor_id indexes into `frames`.
GlobalCamera lpa_to_global(const LpaPose& pose, const std::array<AnchorFrame, 4>& frames);
LpaPose global_to_lpa(const GlobalCamera& cam, const RoomBox& room,
                      const std::array<AnchorFrame, 4>& frames);
int assign_anchor(const GlobalCamera& cam, const std::array<AnchorFrame, 4>& frames);

/// The leftmost-visible-corner rule. If at least one corner projects inside
/// the image with positive view depth, returns the one with minimum
/// normalized screen x (ties to the smaller id). Otherwise returns the corner
/// whose horizontal view angle is closest to the left image edge, measuring
/// leftward.
int assign_anchor(const GlobalCamera& cam, const RoomBox& room);

struct RaySet {
  Vec3 origin = Vec3::Zero();
  Eigen::Matrix3Xd directions;  // unit, room coordinates, one column per pixel
  /// Per-ray origins (orthographic renders); empty means the shared origin.
  Eigen::Matrix3Xd origins;
  int width = 0;
  int height = 0;

  int count() const { return static_cast<int>(directions.cols()); }
  Vec3 origin_of(int i) const { return origins.cols() ? Vec3(origins.col(i)) : origin; }
  /// Column index of pixel (col i, row j); row 0 is the top of the image.
  int pixel_index(int i, int j) const { return j * width + i; }
};

/// One ray per pixel center, pinhole with vertical FoV = pose.fov_deg.
/// Requires a square resolution.
RaySet generate_rays(const LpaPose& pose, const RoomBox& room, int width, int height);
RaySet generate_rays(const GlobalCamera& cam, int width, int height);

/// Exit distance of a ray from the room cuboid (slab method). The origin must
/// be strictly inside the box.
double ray_box_distance(const Vec3& origin, const Vec3& direction, const RoomBox& room);

}  // namespace lpa
