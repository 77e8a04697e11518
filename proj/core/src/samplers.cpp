#include "lpa/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lpa {

Eigen::VectorXd softmin_probabilities(const Eigen::VectorXd& densities, double tau) {
  if (densities.size() == 0) throw std::invalid_argument("softmin: empty density list");
  if (tau <= 0) throw std::invalid_argument("softmin: tau must be positive");
  double min_finite = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < densities.size(); ++i) {
    if (std::isfinite(densities(i))) min_finite = std::min(min_finite, densities(i));
  }
  if (!std::isfinite(min_finite)) {
    throw std::invalid_argument("softmin: no finite density among candidates");
  }
  Eigen::VectorXd p(densities.size());
  double total = 0;
  for (Eigen::Index i = 0; i < densities.size(); ++i) {
    p(i) = std::isfinite(densities(i)) ? std::exp(-(densities(i) - min_finite) / tau) : 0.0;
    total += p(i);
  }
  p /= total;
  return p;
}

CandidateSet gsr_weigh(const TriPlaneField& field, const RoomBox& room,
                       const std::vector<LpaPose>& candidates, const PoseCodec& codec,
                       double tau) {
  if (candidates.empty()) throw std::invalid_argument("gsr: empty candidate list");
  CandidateSet set;
  set.poses = candidates;
  set.densities.resize(static_cast<Eigen::Index>(candidates.size()));
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const GlobalCamera cam = codec.to_global(candidates[i], room);
    set.densities(static_cast<Eigen::Index>(i)) =
        room.contains(cam.position) ? field.density_at(cam.position)
                                    : std::numeric_limits<double>::infinity();
  }
  set.probabilities = softmin_probabilities(set.densities, tau);
  return set;
}

namespace {

std::size_t draw_index(const Eigen::VectorXd& p, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    acc += p(i);
    if (u < acc) return static_cast<std::size_t>(i);
  }
  return static_cast<std::size_t>(p.size() - 1);
}

}  // namespace

LpaPose gsr_select(const TriPlaneField& field, const RoomBox& room,
                   const std::vector<LpaPose>& candidates, Rng& rng, const PoseCodec& codec,
                   const SamplerConfig& cfg) {
  const CandidateSet set = gsr_weigh(field, room, candidates, codec, cfg.softmin_tau);
  return set.poses[draw_index(set.probabilities, rng)];
}

std::vector<LpaPose> psr_sample(const TriPlaneField& field, const RoomBox& room, int count,
                                Rng& rng, const PoseCodec& codec, const SamplerConfig& cfg) {
  std::vector<LpaPose> out;
  out.reserve(static_cast<std::size_t>(count));
  const Vec3 lo = room.lo(), hi = room.hi();
  const int fanout = std::max(1, cfg.psr_fanout);
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd rho(fanout);
    std::vector<Vec3> pos(static_cast<std::size_t>(fanout));
    for (int k = 0; k < fanout; ++k) {
      pos[static_cast<std::size_t>(k)] =
          Vec3(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
               rng.uniform(lo.z(), hi.z()));
      rho(k) = field.density_at(pos[static_cast<std::size_t>(k)]);
    }
    const Eigen::VectorXd p = softmin_probabilities(rho, cfg.softmin_tau);
    GlobalCamera cam;
    cam.position = pos[draw_index(p, rng)];
    cam.yaw_deg = rng.uniform(0.0, 360.0);
    cam.pitch_deg = rng.uniform(cfg.pitch_min, cfg.pitch_max);
    cam.roll_deg = rng.uniform(cfg.roll_min, cfg.roll_max);
    if (cfg.fov_normal_prior) {
      cam.fov_deg = std::clamp(60.0 + 15.0 * rng.normal(), cfg.fov_min, cfg.fov_max);
    } else {
      cam.fov_deg = rng.uniform(cfg.fov_min, cfg.fov_max);
    }
    out.push_back(codec.from_global(cam, room));
  }
  return out;
}

std::vector<std::size_t> balance_indices_by_anchor(const std::vector<int>& anchor_labels) {
  std::array<std::vector<std::size_t>, 4> per_anchor;
  for (std::size_t i = 0; i < anchor_labels.size(); ++i) {
    const int a = anchor_labels[i];
    if (a < 0 || a > 3) throw std::invalid_argument("balance_by_anchor: bad anchor label");
    per_anchor[static_cast<std::size_t>(a)].push_back(i);
  }
  std::size_t max_count = 0;
  for (const auto& v : per_anchor) max_count = std::max(max_count, v.size());
  for (const auto& v : per_anchor) {
    if (v.empty()) {
      throw std::invalid_argument("balance_by_anchor: an anchor class has zero records");
    }
  }
  std::vector<std::size_t> out;
  out.reserve(4 * max_count);
  for (std::size_t i = 0; i < anchor_labels.size(); ++i) out.push_back(i);
  for (const auto& v : per_anchor) {
    for (std::size_t j = v.size(); j < max_count; ++j) out.push_back(v[j % v.size()]);
  }
  return out;
}

std::vector<DatasetRecord> balance_by_anchor(const std::vector<DatasetRecord>& records) {
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(r.anchor_label);
  const auto idx = balance_indices_by_anchor(labels);
  std::vector<DatasetRecord> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(records[i]);
  return out;
}

}  // namespace lpa
