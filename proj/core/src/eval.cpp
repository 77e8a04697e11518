#include "lpa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>

#include "lpa/samplers.hpp"
#include "lpa/synthroom.hpp"

namespace lpa {

PoseMae eval_pose_mae(const CameraPredictor& pred, const Dataset& ds,
                      const std::vector<GtPoseRecord>& gt, int subset,
                      std::array<PoseMae, 4>* per_anchor) {
  if (ds.records.empty() || gt.size() != ds.records.size()) {
    throw std::invalid_argument("eval_pose_mae: empty eval set or gt mismatch");
  }
  const PoseCodec& codec = pred.codec();
  PoseMae mae;
  if (per_anchor) per_anchor->fill(PoseMae{});
  const std::size_t n = ds.records.size();
  const std::size_t want =
      subset > 0 ? std::min<std::size_t>(n, static_cast<std::size_t>(subset)) : n;
  const std::size_t stride = std::max<std::size_t>(1, n / want);

  std::vector<const ImageU8*> imgs;
  std::vector<const GtPoseRecord*> gts;
  for (std::size_t i = 0; i < n && imgs.size() < want; i += stride) {
    imgs.push_back(&ds.records[i].image);
    gts.push_back(&gt[i]);
  }
  auto accumulate = [](PoseMae& acc, const LpaPose& p, const LpaPose& t) {
    acc.x += std::abs(p.position.x() - t.position.x());
    acc.y += std::abs(p.position.y() - t.position.y());
    acc.z += std::abs(p.position.z() - t.position.z());
    acc.yaw += circular_diff_deg(p.yaw_deg, t.yaw_deg);
    acc.pitch += std::abs(p.pitch_deg - t.pitch_deg);
    acc.roll += std::abs(p.roll_deg - t.roll_deg);
    acc.fov += std::abs(p.fov_deg - t.fov_deg);
    acc.anchor_accuracy += p.anchor_id == t.anchor_id ? 1.0 : 0.0;
    ++acc.count;
  };
  auto normalize = [](PoseMae& acc) {
    if (acc.count == 0) return;
    const double inv = 1.0 / acc.count;
    acc.x *= inv;
    acc.y *= inv;
    acc.z *= inv;
    acc.yaw *= inv;
    acc.pitch *= inv;
    acc.roll *= inv;
    acc.fov *= inv;
    acc.anchor_accuracy *= inv;
  };
  const std::size_t chunk = 64;
  for (std::size_t off = 0; off < imgs.size(); off += chunk) {
    std::vector<const ImageU8*> part(
        imgs.begin() + static_cast<std::ptrdiff_t>(off),
        imgs.begin() + static_cast<std::ptrdiff_t>(std::min(off + chunk, imgs.size())));
    const auto logits = pred.predict_batch(part);
    for (std::size_t j = 0; j < logits.size(); ++j) {
      const LpaPose p = codec.decode(logits[j]);
      const GtPoseRecord& g = *gts[off + j];
      const LpaPose t = codec.anchor_free() ? codec.from_global(g.camera, g.room) : g.pose;
      accumulate(mae, p, t);
      if (per_anchor) accumulate((*per_anchor)[static_cast<std::size_t>(t.anchor_id)], p, t);
    }
  }
  normalize(mae);
  if (per_anchor) {
    for (auto& a : *per_anchor) normalize(a);
  }
  return mae;
}

PoseHistograms pose_histograms(const CameraPredictor& pred, const Dataset& ds, int bins) {
  const PoseCodec& codec = pred.codec();
  PoseHistograms h;
  h.bins = bins;
  for (int c = 0; c < PoseCodec::kComponents; ++c) {
    h.component_counts[static_cast<std::size_t>(c)].assign(static_cast<std::size_t>(bins), 0);
    h.lo[static_cast<std::size_t>(c)] = codec.lo(c);
    h.hi[static_cast<std::size_t>(c)] = codec.hi(c);
  }
  const std::size_t chunk = 64;
  for (std::size_t off = 0; off < ds.records.size(); off += chunk) {
    std::vector<const ImageU8*> part;
    for (std::size_t i = off; i < std::min(off + chunk, ds.records.size()); ++i) {
      part.push_back(&ds.records[i].image);
    }
    for (const PoseLogits& pl : pred.predict_batch(part)) {
      const LpaPose p = codec.decode(pl);
      const std::array<double, 7> comps = {p.position.x(), p.position.y(), p.position.z(),
                                           p.yaw_deg,      p.pitch_deg,    p.roll_deg,
                                           p.fov_deg};
      for (int c = 0; c < PoseCodec::kComponents; ++c) {
        const double t = (comps[static_cast<std::size_t>(c)] - codec.lo(c)) /
                         (codec.hi(c) - codec.lo(c));
        const int b = std::clamp(static_cast<int>(t * bins), 0, bins - 1);
        h.component_counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)]++;
      }
      h.anchor_counts[static_cast<std::size_t>(p.anchor_id)]++;
      ++h.total;
    }
  }
  return h;
}

void write_histograms_csv(const PoseHistograms& h, const std::string& path) {
  static const char* names[7] = {"x", "y", "z", "yaw", "pitch", "roll", "fov"};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "component,bin_lo,bin_hi,count\n";
  for (int c = 0; c < PoseCodec::kComponents; ++c) {
    const auto& counts = h.component_counts[static_cast<std::size_t>(c)];
    const double width = (h.hi[static_cast<std::size_t>(c)] - h.lo[static_cast<std::size_t>(c)]) /
                         static_cast<double>(h.bins);
    for (int b = 0; b < h.bins; ++b) {
      f << names[c] << "," << h.lo[static_cast<std::size_t>(c)] + b * width << ","
        << h.lo[static_cast<std::size_t>(c)] + (b + 1) * width << ","
        << counts[static_cast<std::size_t>(b)] << "\n";
    }
  }
  for (int a = 0; a < 4; ++a) {
    f << "anchor," << a << "," << a + 1 << "," << h.anchor_counts[static_cast<std::size_t>(a)]
      << "\n";
  }
}

Image histogram_plot(const std::vector<int>& counts, int width, int height) {
  Image img(width, height, 3);
  std::fill(img.data.begin(), img.data.end(), 1.0);
  const int n = static_cast<int>(counts.size());
  if (n == 0) return img;
  const int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));
  const double bar_w = static_cast<double>(width) / n;
  for (int b = 0; b < n; ++b) {
    const int barh = static_cast<int>(std::lround(
        static_cast<double>(counts[static_cast<std::size_t>(b)]) / peak * (height - 2)));
    const int x0 = static_cast<int>(b * bar_w);
    const int x1 = std::min(width - 1, static_cast<int>((b + 1) * bar_w) - 1);
    for (int x = x0; x <= x1; ++x) {
      for (int y = height - barh; y < height; ++y) {
        img.at(x, y, 0) = 0.15;
        img.at(x, y, 1) = 0.25;
        img.at(x, y, 2) = 0.55;
      }
    }
  }
  return img;
}

namespace {

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double feature_distribution_distance(const std::vector<Eigen::VectorXd>& a,
                                     const std::vector<Eigen::VectorXd>& b,
                                     bool* regularized) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument("feature_distribution_distance: empty set");
  }
  const Eigen::Index d = a[0].size();
  auto stats = [&](const std::vector<Eigen::VectorXd>& set, Eigen::VectorXd& mu,
                   Eigen::MatrixXd& cov) {
    mu = Eigen::VectorXd::Zero(d);
    for (const auto& v : set) mu += v;
    mu /= static_cast<double>(set.size());
    cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& v : set) {
      const Eigen::VectorXd c = v - mu;
      cov += c * c.transpose();
    }
    cov /= std::max<double>(1.0, static_cast<double>(set.size()) - 1.0);
  };
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  stats(a, mu_a, cov_a);
  stats(b, mu_b, cov_b);

  bool reg = false;
  if (static_cast<Eigen::Index>(a.size()) < d || static_cast<Eigen::Index>(b.size()) < d) {
    reg = true;
    cov_a.diagonal().array() += 1e-6;
    cov_b.diagonal().array() += 1e-6;
    std::fprintf(stderr,
                 "warning: feature sets smaller than feature dimension; covariance "
                 "regularized\n");
  }
  if (regularized) *regularized = reg;

  const Eigen::MatrixXd s = sqrtm_psd(cov_a);
  const Eigen::MatrixXd cross = sqrtm_psd(s * cov_b * s);
  const double dist = (mu_a - mu_b).squaredNorm() + (cov_a + cov_b).trace() -
                      2.0 * cross.trace();
  return std::max(0.0, dist);
}

std::vector<Eigen::VectorXd> embed_images(const Segmenter& seg,
                                          const std::vector<const ImageU8*>& images) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(images.size());
  for (const auto* img : images) out.push_back(seg.embed(img->to_image()));
  return out;
}

std::vector<Eigen::VectorXd> embed_render_outputs(const Segmenter& seg,
                                                  const std::vector<Image>& images) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(seg.embed(img));
  return out;
}

int count_core_components(const Image& mask, double min_frac) {
  const int w = mask.width, h = mask.height;
  const int min_area = std::max(1, static_cast<int>(min_frac * w * h));
  std::vector<int> label(static_cast<std::size_t>(w) * h, 0);
  int big_components = 0;
  int next = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t at = static_cast<std::size_t>(y) * w + x;
      if (mask.data[at] < 0.5 || label[at]) continue;
      ++next;
      int area = 0;
      std::deque<std::pair<int, int>> queue{{x, y}};
      label[at] = next;
      while (!queue.empty()) {
        const auto [cx, cy] = queue.front();
        queue.pop_front();
        ++area;
        const int nx[4] = {cx - 1, cx + 1, cx, cx};
        const int ny[4] = {cy, cy, cy - 1, cy + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
          const std::size_t nat = static_cast<std::size_t>(ny[k]) * w + nx[k];
          if (mask.data[nat] >= 0.5 && !label[nat]) {
            label[nat] = next;
            queue.emplace_back(nx[k], ny[k]);
          }
        }
      }
      if (area >= min_area) ++big_components;
    }
  }
  return big_components;
}

OrthoRender render_field_topdown(const TriPlaneField& field, const RoomBox& room,
                                 int resolution) {
  nn::NoGradGuard ng;
  const FieldConfig& cfg = field.config();
  RaySet rays;
  rays.width = resolution;
  rays.height = resolution;
  rays.directions.resize(3, static_cast<Eigen::Index>(resolution) * resolution);
  rays.origins.resize(3, static_cast<Eigen::Index>(resolution) * resolution);
  const double y0 = room.size.y() - 1e-4;
  for (int j = 0; j < resolution; ++j) {
    for (int i = 0; i < resolution; ++i) {
      const Eigen::Index col = static_cast<Eigen::Index>(j) * resolution + i;
      const double x = (i + 0.5) / resolution * room.size.x() + room.lo().x();
      const double z = (j + 0.5) / resolution * room.size.z() + room.lo().z();
      rays.origins.col(col) = Vec3(x, y0, z);
      rays.directions.col(col) = Vec3(0, -1, 0);
    }
  }
  const RenderResult rr =
      render_field(field, rays, cfg, cfg.render_steps, nullptr, 1e-3, room.size.y());
  const RenderOutput out = rr.to_output();
  OrthoRender o;
  o.rgb = Image(resolution, resolution, 3);
  o.mask = Image(resolution, resolution, 1);
  o.height_map.assign(static_cast<std::size_t>(resolution) * resolution, 0.0);
  for (int p = 0; p < resolution * resolution; ++p) {
    for (int c = 0; c < 3; ++c) {
      o.rgb.data[static_cast<std::size_t>(p) * 3 + c] = out.rgb[static_cast<std::size_t>(p) * 3 + c];
    }
    o.height_map[static_cast<std::size_t>(p)] = y0 - out.depth[static_cast<std::size_t>(p)];
  }
  return o;
}

AbnormalityResult layout_abnormality_proxy(const Generator& gen, const Segmenter& seg,
                                           int n_scenes, Rng& rng, const Config& cfg,
                                           int resolution, double min_frac) {
  AbnormalityResult res;
  res.scenes = n_scenes;
  int abnormal = 0;
  for (int s = 0; s < n_scenes; ++s) {
    nn::NoGradGuard ng;
    const nn::Tensor z = nn::Tensor::randn({cfg.net.latent_dim}, rng);
    const RoomBox room(rng.uniform(cfg.synth.room_min_x, cfg.synth.room_max_x),
                       rng.uniform(cfg.synth.room_min_y, cfg.synth.room_max_y),
                       rng.uniform(cfg.synth.room_min_z, cfg.synth.room_max_z));
    const TriPlaneField field = gen.generate(z, room);
    const OrthoRender ortho = render_field_topdown(field, room, resolution);
    const Image mask = seg.segment(ortho.rgb);
    const int comps = count_core_components(mask, min_frac);
    res.component_counts.push_back(comps);
    if (comps != 1) ++abnormal;
  }
  res.rate = n_scenes > 0 ? static_cast<double>(abnormal) / n_scenes : 0.0;
  return res;
}

AbnormalityResult layout_abnormality_oracle(const Segmenter& seg, int n_scenes, Rng& rng,
                                            const SynthConfig& priors, int resolution,
                                            double min_frac) {
  AbnormalityResult res;
  res.scenes = n_scenes;
  int abnormal = 0;
  for (int s = 0; s < n_scenes; ++s) {
    Rng scene_rng = rng.fork(static_cast<std::uint64_t>(s) + 0xabcd);
    const SceneSpec scene = sample_scene(scene_rng, priors);
    const OrthoRender ortho = render_oracle_topdown(scene, resolution);
    const Image mask = seg.segment(ortho.rgb);
    const int comps = count_core_components(mask, min_frac);
    res.component_counts.push_back(comps);
    if (comps != 1) ++abnormal;
  }
  res.rate = n_scenes > 0 ? static_cast<double>(abnormal) / n_scenes : 0.0;
  return res;
}

Image render_panorama(const TriPlaneField& field, const Vec3& position, int height,
                      Image* depth_out) {
  nn::NoGradGuard ng;
  const int width = 2 * height;
  RaySet rays;
  rays.origin = position;
  rays.width = width;
  rays.height = height;
  rays.directions.resize(3, static_cast<Eigen::Index>(width) * height);
  for (int j = 0; j < height; ++j) {
    const double pitch = 90.0 - (j + 0.5) / height * 180.0;
    for (int i = 0; i < width; ++i) {
      const double yaw = (i + 0.5) / width * 360.0;
      rays.directions.col(static_cast<Eigen::Index>(j) * width + i) =
          rotation_from_euler(yaw, pitch, 0.0) * Vec3(0, 0, -1);
    }
  }
  const FieldConfig& cfg = field.config();
  const RenderOutput out =
      render_field(field, rays, cfg, cfg.render_steps).to_output();
  Image rgb(width, height, 3);
  std::copy(out.rgb.begin(), out.rgb.end(), rgb.data.begin());
  if (depth_out) {
    *depth_out = Image(width, height, 1);
    const double far = cfg.far_dist();
    for (std::size_t i = 0; i < out.depth.size(); ++i) {
      depth_out->data[i] = std::clamp(out.depth[i] / far, 0.0, 1.0);
    }
  }
  return rgb;
}

std::vector<Image> render_trajectory(const TriPlaneField& field, const RoomBox& room,
                                     const LpaPose& from, const LpaPose& to, int frames,
                                     int size, std::vector<Image>* depth_out) {
  nn::NoGradGuard ng;
  const GlobalCamera a = lpa_to_global(from, room);
  const GlobalCamera b = lpa_to_global(to, room);
  std::vector<Image> out;
  if (depth_out) depth_out->clear();
  for (int f = 0; f < frames; ++f) {
    const double t = frames > 1 ? static_cast<double>(f) / (frames - 1) : 0.0;
    GlobalCamera cam;
    cam.position = (1 - t) * a.position + t * b.position;
    cam.yaw_deg = wrap_deg_0_360(a.yaw_deg + t * wrap_deg_pm180(b.yaw_deg - a.yaw_deg));
    cam.pitch_deg = (1 - t) * a.pitch_deg + t * b.pitch_deg;
    cam.roll_deg = (1 - t) * a.roll_deg + t * b.roll_deg;
    cam.fov_deg = (1 - t) * a.fov_deg + t * b.fov_deg;
    const RaySet rays = generate_rays(cam, size, size);
    const FieldConfig& cfg = field.config();
    const RenderOutput ro = render_field(field, rays, cfg, cfg.render_steps).to_output();
    Image rgb(size, size, 3);
    std::copy(ro.rgb.begin(), ro.rgb.end(), rgb.data.begin());
    out.push_back(std::move(rgb));
    if (depth_out) {
      Image d(size, size, 1);
      const double far = cfg.far_dist();
      for (std::size_t i = 0; i < ro.depth.size(); ++i) {
        d.data[i] = std::clamp(ro.depth[i] / far, 0.0, 1.0);
      }
      depth_out->push_back(std::move(d));
    }
  }
  return out;
}

}  // namespace lpa
