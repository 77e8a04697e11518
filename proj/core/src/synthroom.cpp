#include "lpa/synthroom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "lpa/common.hpp"

namespace lpa {

namespace fs = std::filesystem;
using nlohmann::json;

bool Box::intersects(const Box& o, double margin) const {
  for (int i = 0; i < 3; ++i) {
    if (hi[i] + margin <= o.lo[i] || o.hi[i] + margin <= lo[i]) return false;
  }
  return true;
}

bool Box::contains_point(const Vec3& p) const {
  for (int i = 0; i < 3; ++i) {
    if (p[i] < lo[i] || p[i] > hi[i]) return false;
  }
  return true;
}

std::vector<Box> SceneSpec::all_boxes() const {
  std::vector<Box> out;
  out.reserve(clutter.size() + 1);
  out.push_back(core);
  out.insert(out.end(), clutter.begin(), clutter.end());
  return out;
}

namespace {

Eigen::Vector3d hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const int i = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

std::array<Eigen::Vector3d, 6> jittered_faces(const Eigen::Vector3d& base, Rng& rng) {
  std::array<Eigen::Vector3d, 6> out;
  for (auto& f : out) {
    const double j = rng.uniform(-0.08, 0.08);
    f = (base.array() + j).cwiseMax(0.02).cwiseMin(0.98);
  }
  return out;
}

// Wall order matches SceneSpec::wall_colors: -x, +x, -z, +z.
constexpr int kWallMinusX = 0, kWallPlusX = 1, kWallMinusZ = 2, kWallPlusZ = 3;

Vec3 wall_inward_normal(int wall) {
  switch (wall) {
    case kWallMinusX: return {1, 0, 0};
    case kWallPlusX: return {-1, 0, 0};
    case kWallMinusZ: return {0, 0, 1};
    default: return {0, 0, -1};
  }
}

}  // namespace

SceneSpec sample_scene(Rng& rng, const SynthConfig& p) {
  SceneSpec s;
  s.room = RoomBox(rng.uniform(p.room_min_x, p.room_max_x),
                   rng.uniform(p.room_min_y, p.room_max_y),
                   rng.uniform(p.room_min_z, p.room_max_z));

  // Core object backed onto a uniformly chosen wall.
  const int wall = static_cast<int>(rng.uniform_index(4));
  s.core_front = wall_inward_normal(wall);
  s.core_right = s.core_front.cross(Vec3(0, 1, 0));  // right = front x up
  const int f_axis = std::abs(s.core_front.x()) > 0.5 ? 0 : 2;
  const int r_axis = f_axis == 0 ? 2 : 0;
  const double f_extent = s.room.size[f_axis];
  const double r_extent = s.room.size[r_axis];
  const double len = rng.uniform(p.core_len_frac_min, p.core_len_frac_max) * f_extent;
  const double wid = rng.uniform(p.core_wid_frac_min, p.core_wid_frac_max) * r_extent;
  const double hgt = rng.uniform(p.core_height_min, p.core_height_max);

  const double wall_coord = s.core_front[f_axis] > 0 ? s.room.lo()[f_axis] : s.room.hi()[f_axis];
  const double lat_half = (r_extent - wid) / 2.0 - 0.05;
  const double lat = rng.uniform(-std::max(lat_half, 0.0), std::max(lat_half, 0.0));
  Vec3 lo, hi;
  lo[1] = 0.0;
  hi[1] = hgt;
  if (s.core_front[f_axis] > 0) {
    lo[f_axis] = wall_coord;
    hi[f_axis] = wall_coord + len;
  } else {
    hi[f_axis] = wall_coord;
    lo[f_axis] = wall_coord - len;
  }
  lo[r_axis] = lat - wid / 2.0;
  hi[r_axis] = lat + wid / 2.0;
  s.core = Box{lo, hi};

  // Clutter: rejection sample boxes on the floor, inside the room, away from
  // the core object and each other.
  const int want = p.clutter_min +
                   static_cast<int>(rng.uniform_index(
                       static_cast<std::uint64_t>(p.clutter_max - p.clutter_min + 1)));
  int budget = p.rejection_budget;
  while (static_cast<int>(s.clutter.size()) < want && budget-- > 0) {
    const double sx = rng.uniform(p.clutter_size_min, p.clutter_size_max);
    const double sy = rng.uniform(p.clutter_size_min, p.clutter_size_max);
    const double sz = rng.uniform(p.clutter_size_min, p.clutter_size_max);
    const double cx = rng.uniform(s.room.lo().x() + sx / 2, s.room.hi().x() - sx / 2);
    const double cz = rng.uniform(s.room.lo().z() + sz / 2, s.room.hi().z() - sz / 2);
    Box b{Vec3(cx - sx / 2, 0.0, cz - sz / 2), Vec3(cx + sx / 2, sy, cz + sz / 2)};
    bool ok = !b.intersects(s.core, 0.05);
    for (const auto& other : s.clutter) ok = ok && !b.intersects(other, 0.05);
    if (ok) s.clutter.push_back(b);
  }
  // A short budget only trims clutter; the scene stays valid. The core
  // placement itself never needs rejection.

  // Colors: wood-ish floor, light ceiling, mid-value walls with distinct
  // hues, saturated core object.
  s.floor_color = hsv_to_rgb(rng.uniform(20, 45), rng.uniform(0.3, 0.7), rng.uniform(0.2, 0.55));
  s.ceiling_color = hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.0, 0.15), rng.uniform(0.75, 0.95));
  for (int attempt = 0; attempt < 50; ++attempt) {
    for (auto& w : s.wall_colors) {
      w = hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.15, 0.6), rng.uniform(0.35, 0.8));
    }
    double min_d = 1e9;
    for (int i = 0; i < 4; ++i) {
      min_d = std::min(min_d, (s.wall_colors[i] - s.wall_colors[(i + 1) % 4]).norm());
    }
    if (min_d > 0.12) break;
  }
  const Eigen::Vector3d core_base =
      hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.6, 1.0), rng.uniform(0.45, 0.9));
  s.core_face_colors = jittered_faces(core_base, rng);
  for (std::size_t i = 0; i < s.clutter.size(); ++i) {
    const Eigen::Vector3d base =
        hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.1, 0.9), rng.uniform(0.25, 0.85));
    s.clutter_face_colors.push_back(jittered_faces(base, rng));
  }
  return s;
}

namespace {

// First positive entry of the ray into the box; returns false if no hit.
// face: axis*2 + (0 if the low face, 1 if the high face).
bool ray_box_entry(const Vec3& o, const Vec3& d, const Box& b, double& t_hit, int& face) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  int enter_axis = -1;
  bool enter_high = false;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-300) {
      if (o[i] < b.lo[i] || o[i] > b.hi[i]) return false;
      continue;
    }
    double ta = (b.lo[i] - o[i]) / d[i];
    double tb = (b.hi[i] - o[i]) / d[i];
    bool high = false;
    if (ta > tb) {
      std::swap(ta, tb);
      high = true;
    }
    if (ta > t0) {
      t0 = ta;
      enter_axis = i;
      enter_high = high;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  if (enter_axis < 0 || t0 <= 1e-12) return false;  // origin inside or behind
  t_hit = t0;
  face = enter_axis * 2 + (enter_high ? 1 : 0);
  return true;
}

int room_exit_face(const Vec3& o, const Vec3& d, const RoomBox& room, double t_exit) {
  const Vec3 p = o + t_exit * d;
  const Vec3 l = room.lo(), h = room.hi();
  int best_axis = 0;
  bool best_high = false;
  double best_err = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double e_lo = std::abs(p[i] - l[i]);
    const double e_hi = std::abs(p[i] - h[i]);
    if (e_lo < best_err) {
      best_err = e_lo;
      best_axis = i;
      best_high = false;
    }
    if (e_hi < best_err) {
      best_err = e_hi;
      best_axis = i;
      best_high = true;
    }
  }
  return best_axis * 2 + (best_high ? 1 : 0);
}

Eigen::Vector3d room_face_color(const SceneSpec& s, int face) {
  switch (face) {
    case 0: return s.wall_colors[kWallMinusX];
    case 1: return s.wall_colors[kWallPlusX];
    case 2: return s.floor_color;
    case 3: return s.ceiling_color;
    case 4: return s.wall_colors[kWallMinusZ];
    default: return s.wall_colors[kWallPlusZ];
  }
}

}  // namespace

OracleRender render_oracle(const SceneSpec& scene, const GlobalCamera& cam, int width,
                           int height) {
  if (!scene.room.contains(cam.position)) {
    throw std::invalid_argument("render_oracle: camera outside the room");
  }
  for (const auto& b : scene.all_boxes()) {
    if (b.contains_point(cam.position)) {
      throw std::invalid_argument("render_oracle: camera inside an object");
    }
  }
  const RaySet rays = generate_rays(cam, width, height);
  OracleRender out;
  out.rgb = Image(width, height, 3);
  out.mask = Image(width, height, 1);
  out.depth.assign(static_cast<std::size_t>(width) * height, 0.0);

  const auto boxes = scene.all_boxes();
  for (int j = 0; j < height; ++j) {
    for (int i = 0; i < width; ++i) {
      const Eigen::Index col = rays.pixel_index(i, j);
      const Vec3 d = rays.directions.col(col);
      const double t_room = ray_box_distance(rays.origin, d, scene.room);
      double t_best = t_room;
      Eigen::Vector3d color = room_face_color(scene, room_exit_face(rays.origin, d, scene.room, t_room));
      bool fg = false;
      for (std::size_t b = 0; b < boxes.size(); ++b) {
        double t_hit;
        int face;
        if (ray_box_entry(rays.origin, d, boxes[b], t_hit, face) && t_hit < t_best) {
          t_best = t_hit;
          fg = true;
          color = b == 0 ? scene.core_face_colors[static_cast<std::size_t>(face)]
                         : scene.clutter_face_colors[b - 1][static_cast<std::size_t>(face)];
        }
      }
      for (int c = 0; c < 3; ++c) out.rgb.at(i, j, c) = color(c);
      out.mask.at(i, j) = fg ? 1.0 : 0.0;
      out.depth[static_cast<std::size_t>(col)] = t_best;
    }
  }

  // Frustum visibility of the four wall-floor corners (positive view depth,
  // inside the image), in the scene's core-relative enumeration.
  const auto frames = scene.frames();
  const Mat3 r_t = cam.rotation().transpose();
  const double half_tan = std::tan(deg2rad(cam.fov_deg) / 2.0);
  for (int k = 0; k < 4; ++k) {
    const Vec3 v = r_t * (frames[static_cast<std::size_t>(k)].origin - cam.position);
    const double depth = -v.z();
    if (depth <= 0) continue;
    if (std::abs(v.x() / (depth * half_tan)) <= 1.0 && std::abs(v.y() / (depth * half_tan)) <= 1.0) {
      out.visible_corners.push_back(k);
    }
  }
  return out;
}

OrthoRender render_oracle_topdown(const SceneSpec& scene, int resolution) {
  OrthoRender out;
  out.rgb = Image(resolution, resolution, 3);
  out.mask = Image(resolution, resolution, 1);
  out.height_map.assign(static_cast<std::size_t>(resolution) * resolution, 0.0);
  const auto boxes = scene.all_boxes();
  for (int j = 0; j < resolution; ++j) {
    for (int i = 0; i < resolution; ++i) {
      // Pixel (i, j) covers the (x, z) plane; +x right, +z down.
      const double x = (i + 0.5) / resolution * scene.room.size.x() + scene.room.lo().x();
      const double z = (j + 0.5) / resolution * scene.room.size.z() + scene.room.lo().z();
      double top = 0.0;
      Eigen::Vector3d color = scene.floor_color;
      bool fg = false;
      for (std::size_t b = 0; b < boxes.size(); ++b) {
        const Box& box = boxes[b];
        if (x >= box.lo.x() && x <= box.hi.x() && z >= box.lo.z() && z <= box.hi.z() &&
            box.hi.y() > top) {
          top = box.hi.y();
          fg = true;
          color = b == 0 ? scene.core_face_colors[3] : scene.clutter_face_colors[b - 1][3];
        }
      }
      for (int c = 0; c < 3; ++c) out.rgb.at(i, j, c) = color(c);
      out.mask.at(i, j) = fg ? 1.0 : 0.0;
      out.height_map[static_cast<std::size_t>(j) * resolution + i] = top;
    }
  }
  return out;
}

GlobalCamera sample_dataset_camera(const SceneSpec& scene, Rng& rng, const SynthConfig& p) {
  const auto boxes = scene.all_boxes();
  for (int attempt = 0; attempt < p.rejection_budget; ++attempt) {
    GlobalCamera cam;
    const double m = p.cam_wall_margin;
    const Vec3 lo = scene.room.lo(), hi = scene.room.hi();
    cam.position = Vec3(rng.uniform(lo.x() + m, hi.x() - m),
                        rng.uniform(p.cam_height_min,
                                    std::min(p.cam_height_max, scene.room.size.y() - 0.2)),
                        rng.uniform(lo.z() + m, hi.z() - m));
    bool inside = false;
    for (const auto& b : boxes) inside = inside || b.contains_point(cam.position);
    if (inside) continue;

    if (rng.uniform() < p.cam_toward_core_prob) {
      const Vec3 to_core = scene.core.center() - cam.position;
      // Yaw convention: forward(yaw) = (-sin yaw, 0, -cos yaw).
      const double yaw = rad2deg(std::atan2(-to_core.x(), -to_core.z()));
      cam.yaw_deg = wrap_deg_0_360(yaw + rng.uniform(-p.cam_yaw_jitter, p.cam_yaw_jitter));
    } else {
      cam.yaw_deg = rng.uniform(0.0, 360.0);
    }
    cam.pitch_deg = rng.uniform(p.cam_pitch_min, p.cam_pitch_max);
    cam.roll_deg = rng.uniform(-p.cam_roll_max, p.cam_roll_max);
    cam.fov_deg = rng.uniform(p.cam_fov_min, p.cam_fov_max);
    return cam;
  }
  throw std::runtime_error("sample_dataset_camera: rejection budget exhausted");
}

int scene_anchor_label(const SceneSpec& scene, const GlobalCamera& cam) {
  return assign_anchor(cam, scene.frames());
}

LpaPose scene_gt_pose(const SceneSpec& scene, const GlobalCamera& cam) {
  return global_to_lpa(cam, scene.room, scene.frames());
}

namespace {

std::string record_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

std::string csv_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

BuildSummary build_dataset(int n_images, const SynthConfig& priors, std::uint64_t seed,
                           const std::string& out_dir, int threads, int views_per_scene) {
  if (n_images < 1) throw std::invalid_argument("build_dataset: n_images must be >= 1");
  if (views_per_scene < 1) views_per_scene = 1;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");

  struct Row {
    int anchor = 0;
    int scene_id = 0;
    LpaPose pose;
    GlobalCamera cam;
    RoomBox room;
    std::uint64_t hash = 0;
  };
  std::vector<Row> rows(static_cast<std::size_t>(n_images));
  const Rng base(seed);

  std::mutex io_err_mutex;
  std::string io_error;
  parallel_for(static_cast<std::size_t>(n_images), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t idx = lo; idx < hi; ++idx) {
      try {
        const int scene_id = static_cast<int>(idx) / views_per_scene;
        Rng scene_rng = base.fork(static_cast<std::uint64_t>(scene_id));
        const SceneSpec scene = sample_scene(scene_rng, priors);
        Rng cam_rng = base.fork(0x5eed0000ull + idx);
        const GlobalCamera cam = sample_dataset_camera(scene, cam_rng, priors);
        const OracleRender r = render_oracle(scene, cam, priors.image_size, priors.image_size);

        Row& row = rows[idx];
        row.scene_id = scene_id;
        row.anchor = scene_anchor_label(scene, cam);
        row.pose = scene_gt_pose(scene, cam);
        row.cam = cam;
        row.room = scene.room;

        const std::string id = record_id(static_cast<int>(idx));
        write_png((fs::path(out_dir) / "images" / (id + ".png")).string(), r.rgb);
        write_png((fs::path(out_dir) / "masks" / (id + ".png")).string(), r.mask);

        const ImageU8 img8 = ImageU8::from_image(r.rgb);
        std::uint64_t h = fnv1a64(img8.data.data(), img8.data.size());
        h = fnv1a64(&row.anchor, sizeof(row.anchor), h);
        row.hash = h;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(io_err_mutex);
        if (io_error.empty()) io_error = std::string(e.what()) + " (record " + std::to_string(idx) + ")";
      }
    }
  });
  if (!io_error.empty()) throw std::runtime_error("build_dataset: " + io_error);

  std::vector<std::string> label_rows, pose_rows;
  std::uint64_t content = 0xcbf29ce484222325ull;
  for (int i = 0; i < n_images; ++i) {
    const Row& row = rows[static_cast<std::size_t>(i)];
    const std::string id = record_id(i);
    label_rows.push_back(id + "," + std::to_string(row.anchor) + "," + std::to_string(row.scene_id));
    std::ostringstream ps;
    ps << id << "," << row.anchor << "," << csv_double(row.pose.position.x()) << ","
       << csv_double(row.pose.position.y()) << "," << csv_double(row.pose.position.z()) << ","
       << csv_double(row.pose.yaw_deg) << "," << csv_double(row.pose.pitch_deg) << ","
       << csv_double(row.pose.roll_deg) << "," << csv_double(row.pose.fov_deg) << ","
       << csv_double(row.room.size.x()) << "," << csv_double(row.room.size.y()) << ","
       << csv_double(row.room.size.z()) << "," << csv_double(row.cam.position.x()) << ","
       << csv_double(row.cam.position.y()) << "," << csv_double(row.cam.position.z()) << ","
       << csv_double(row.cam.yaw_deg) << "," << csv_double(row.cam.pitch_deg) << ","
       << csv_double(row.cam.roll_deg);
    pose_rows.push_back(ps.str());
    content = fnv1a64(&row.hash, sizeof(row.hash), content);
  }
  write_csv((fs::path(out_dir) / "labels.csv").string(), "id,anchor_label,scene_id", label_rows);
  write_csv((fs::path(out_dir) / "poses_gt.csv").string(),
            "id,anchor,x,y,z,yaw,pitch,roll,fov,room_x,room_y,room_z,gx,gy,gz,gyaw,gpitch,groll",
            pose_rows);

  json manifest;
  manifest["seed"] = seed;
  manifest["count"] = n_images;
  manifest["views_per_scene"] = views_per_scene;
  manifest["image_size"] = priors.image_size;
  manifest["content_hash"] = content;
  manifest["priors"] = json::parse(synth_to_json(priors));
  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  std::ofstream mf(manifest_path);
  if (!mf) throw std::runtime_error("build_dataset: cannot write " + manifest_path);
  mf << manifest.dump(2) << "\n";

  BuildSummary summary;
  summary.count = n_images;
  summary.content_hash = content;
  summary.manifest_path = manifest_path;
  return summary;
}

}  // namespace lpa
