#pragma once

#include <array>

#include "lpa/config.hpp"
#include "lpa/geometry.hpp"

#include <Eigen/Dense>

namespace lpa {

/// Categorical head output over the 8 pose components: 4 anchor logits
/// followed by 7 blocks of `bins` logits (x, y, z, yaw, pitch, roll, fov).
struct PoseLogits {
  Eigen::VectorXd data;  // 4 + 7*bins
  int bins = 0;

  Eigen::VectorXd anchor_logits() const { return data.head(4); }
  Eigen::VectorXd component_logits(int comp) const {
    return data.segment(4 + static_cast<Eigen::Index>(comp) * bins, bins);
  }
};

/// Uniform binning of the 8-DoF pose for cross-entropy training, plus the
/// soft-argmax decode rule (argmax for the anchor id, expectation of bin
/// centers under softmax for continuous components).
///
/// In anchor-free mode poses are expressed in the room's global frame
/// (position ranges centered on the floor center) and the anchor slot is
/// ignored by losses and decode.
class PoseCodec {
 public:
  static constexpr int kComponents = 7;

  PoseCodec(int bins, const FieldConfig& field, bool anchor_free = false);

  int bins() const { return bins_; }
  bool anchor_free() const { return anchor_free_; }
  int logits_size() const { return 4 + kComponents * bins_; }

  double lo(int comp) const { return lo_[static_cast<std::size_t>(comp)]; }
  double hi(int comp) const { return hi_[static_cast<std::size_t>(comp)]; }
  double bin_width(int comp) const {
    return (hi(comp) - lo(comp)) / static_cast<double>(bins_);
  }
  int bin_of(int comp, double v) const;
  double bin_center(int comp, int b) const;

  std::array<double, kComponents> components_of(const LpaPose& pose) const;
  /// Target bins: [anchor, x, y, z, yaw, pitch, roll, fov].
  std::array<int, 8> encode(const LpaPose& pose) const;
  /// One-hot-style logits (large margin) reproducing `pose` under decode.
  PoseLogits encode_logits(const LpaPose& pose, double margin = 60.0) const;
  LpaPose decode(const PoseLogits& logits) const;

  /// Pose <-> global camera under the codec's convention: LPA frames by
  /// default, the identity frame when anchor-free.
  GlobalCamera to_global(const LpaPose& pose, const RoomBox& room) const;
  LpaPose from_global(const GlobalCamera& cam, const RoomBox& room) const;

 private:
  int bins_;
  bool anchor_free_;
  std::array<double, kComponents> lo_{}, hi_{};
};

}  // namespace lpa
