#pragma once

#include <memory>
#include <utility>

#include "lpa/autodiff.hpp"
#include "lpa/config.hpp"
#include "lpa/geometry.hpp"
#include "lpa/nn.hpp"

namespace lpa {

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Anything the volume renderer can march through. `sample` returns
/// (density [M,1], rgb [M,3]) as graph variables for M query points in room
/// coordinates.
class FieldSampler {
 public:
  virtual ~FieldSampler() = default;
  virtual std::pair<nn::Var, nn::Var> sample(const PointMatrix& points) const = 0;
};

/// Tri-plane radiance field: three feature planes over the (x,y), (x,z),
/// (y,z) projections of the maximum room volume plus a small MLP decoder.
/// Decoder parameters are shared across scenes (they belong to the
/// generator); planes are per-scene.
class TriPlaneField : public FieldSampler {
 public:
  struct Decoder {
    nn::Var w1, b1, w2, b2, w3, b3;  // C -> hidden -> hidden -> 4
  };

  TriPlaneField(const FieldConfig& cfg, RoomBox room, std::array<nn::Var, 3> planes,
                Decoder decoder);

  /// Standalone field with randomly initialized planes and decoder; test and
  /// benchmark entry point.
  static TriPlaneField random_field(const FieldConfig& cfg, const RoomBox& room, Rng& rng,
                                    double plane_scale = 0.5);

  std::pair<nn::Var, nn::Var> sample(const PointMatrix& points) const override;

  /// Value-only path (no tape). Returns (density, rgb).
  std::pair<double, Eigen::Vector3d> sample_point(const Vec3& point) const;
  double density_at(const Vec3& point) const;
  Eigen::VectorXd densities_at(const PointMatrix& points) const;

  /// Decoder applied to an explicit summed-feature row; bypasses
  /// interpolation entirely.
  std::pair<double, Eigen::Vector3d> decode_features(const Eigen::VectorXd& feature) const;

  bool in_max_volume(const Vec3& p) const { return max_volume_.contains(p); }
  const RoomBox& room() const { return room_; }
  const RoomBox& max_volume() const { return max_volume_; }
  const FieldConfig& config() const { return cfg_; }
  const std::array<nn::Var, 3>& planes() const { return planes_; }
  const Decoder& decoder() const { return decoder_; }

  /// Multiplies decoded density; identity by default. Used by analytic tests
  /// and density-shaping experiments.
  double density_scale = 1.0;

 private:
  FieldConfig cfg_;
  RoomBox room_;
  RoomBox max_volume_;
  std::array<nn::Var, 3> planes_;  // xy, xz, yz; each [C, N, N]
  Decoder decoder_;
};

/// Plain-value view of a render.
struct RenderOutput {
  int width = 0, height = 0;
  std::vector<double> rgb;      // W*H*3, row-major, [0,1]
  std::vector<double> depth;    // W*H, meters
  std::vector<double> opacity;  // W*H, [0,1]

  double& rgb_at(int i, int j, int c, int w) { return rgb[(static_cast<std::size_t>(j) * w + i) * 3 + c]; }
};

struct RenderResult {
  nn::Var packed;  // [R,5]: rgb, depth, opacity
  int width = 0, height = 0;

  nn::Var rgb() const { return nn::slice_cols(packed, 0, 3); }
  nn::Var depth() const { return nn::slice_cols(packed, 3, 4); }
  nn::Var opacity() const { return nn::slice_cols(packed, 4, 5); }
  RenderOutput to_output() const;
};

/// Differentiable emission-absorption rendering with stratified samples
/// (midpoints when rng is null). Depth on empty rays completes to `far`.
/// Pass near/far <= 0 to use the config defaults (near_dist, box diameter).
RenderResult render_field(const FieldSampler& field, const RaySet& rays,
                          const FieldConfig& cfg, int steps, Rng* rng = nullptr,
                          double near_override = -1.0, double far_override = -1.0);

RenderResult render(const TriPlaneField& field, const RaySet& rays, int steps,
                    Rng* rng = nullptr);

}  // namespace lpa
