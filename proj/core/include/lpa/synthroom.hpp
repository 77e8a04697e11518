#pragma once

#include <array>
#include <string>
#include <vector>

#include "lpa/config.hpp"
#include "lpa/dataset.hpp"
#include "lpa/geometry.hpp"
#include "lpa/image_io.hpp"
#include "lpa/rng.hpp"

namespace lpa {

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool intersects(const Box& o, double margin = 0.0) const;
  bool contains_point(const Vec3& p) const;
  Vec3 center() const { return (lo + hi) / 2.0; }
  Vec3 size() const { return hi - lo; }
};

/// Procedurally sampled cuboid room: a core object backed onto one wall plus
/// axis-aligned clutter, flat per-face colors.
struct SceneSpec {
  RoomBox room;
  Box core;
  Vec3 core_front = Vec3(1, 0, 0);
  Vec3 core_right = Vec3(0, 0, 1);
  std::vector<Box> clutter;
  Eigen::Vector3d floor_color = Eigen::Vector3d::Zero();
  Eigen::Vector3d ceiling_color = Eigen::Vector3d::Zero();
  std::array<Eigen::Vector3d, 4> wall_colors{};  // -x, +x, -z, +z
  std::array<Eigen::Vector3d, 6> core_face_colors{};  // -x,+x,-y,+y,-z,+z
  std::vector<std::array<Eigen::Vector3d, 6>> clutter_face_colors;

  /// Anchor enumeration tied to the core object (anchor 0 = head-left).
  std::array<AnchorFrame, 4> frames() const {
    return anchor_frames_for_core(room, core_front);
  }
  std::vector<Box> all_boxes() const;
};

SceneSpec sample_scene(Rng& rng, const SynthConfig& priors);

struct OracleRender {
  Image rgb;                  // W x H x 3
  std::vector<double> depth;  // W*H first-hit distance
  Image mask;                 // W x H, 1 = foreground object pixel
  std::vector<int> visible_corners;
};

/// Exact ray-cast render of the scene. The camera must be inside the room
/// and outside every box.
OracleRender render_oracle(const SceneSpec& scene, const GlobalCamera& cam, int width,
                           int height);

/// Top-down orthographic render (used by the layout-abnormality proxy and
/// the segmenter's training mix). `height_map` is distance above the floor of
/// the first hit.
struct OrthoRender {
  Image rgb;
  std::vector<double> height_map;
  Image mask;
};
OrthoRender render_oracle_topdown(const SceneSpec& scene, int resolution);

/// Camera prior used for dataset images: position clear of furniture, yaw
/// biased toward the core object (photographer bias), modest pitch and roll.
GlobalCamera sample_dataset_camera(const SceneSpec& scene, Rng& rng,
                                   const SynthConfig& priors);

/// Anchor label of a camera in the scene's core-relative enumeration.
int scene_anchor_label(const SceneSpec& scene, const GlobalCamera& cam);
LpaPose scene_gt_pose(const SceneSpec& scene, const GlobalCamera& cam);

struct BuildSummary {
  int count = 0;
  std::uint64_t content_hash = 0;
  std::string manifest_path;
};

/// One independent scene per image (views_per_scene > 1 is the multi-view
/// evaluation mode). Writes images/, masks/, labels.csv, poses_gt.csv and
/// manifest.json under out_dir.
BuildSummary build_dataset(int n_images, const SynthConfig& priors, std::uint64_t seed,
                           const std::string& out_dir, int threads = 1,
                           int views_per_scene = 1);

}  // namespace lpa
