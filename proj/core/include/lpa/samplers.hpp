#pragma once

#include <vector>

#include "lpa/config.hpp"
#include "lpa/dataset.hpp"
#include "lpa/field.hpp"
#include "lpa/geometry.hpp"
#include "lpa/pose_codec.hpp"
#include "lpa/rng.hpp"

namespace lpa {

/// Candidate camera poses with their field densities and softmin selection
/// probabilities.
struct CandidateSet {
  std::vector<LpaPose> poses;
  Eigen::VectorXd densities;      // +inf for out-of-room candidates
  Eigen::VectorXd probabilities;  // nonneg, sums to 1
};

/// p_i = exp(-rho_i / tau) / sum_j exp(-rho_j / tau); infinite densities get
/// probability 0 and the rest renormalize. Throws if no density is finite.
Eigen::VectorXd softmin_probabilities(const Eigen::VectorXd& densities, double tau);

/// Densities and probabilities for a candidate list against a generated
/// scene (out-of-room candidates are assigned infinite density).
CandidateSet gsr_weigh(const TriPlaneField& field, const RoomBox& room,
                       const std::vector<LpaPose>& candidates, const PoseCodec& codec,
                       double tau);

/// Render-time camera selection: softmin over candidate densities, one draw.
LpaPose gsr_select(const TriPlaneField& field, const RoomBox& room,
                   const std::vector<LpaPose>& candidates, Rng& rng, const PoseCodec& codec,
                   const SamplerConfig& cfg);

/// Uniform synthetic-pose sampler for predictor training: positions uniform
/// in the room, density-filtered through a softmin over `psr_fanout`
/// candidates; yaw uniform over [0,360), pitch/roll/fov from the configured
/// ranges; anchor assigned by the leftmost rule.
std::vector<LpaPose> psr_sample(const TriPlaneField& field, const RoomBox& room, int count,
                                Rng& rng, const PoseCodec& codec, const SamplerConfig& cfg);

/// Tiles per-anchor record lists up to the maximum anchor count. Original
/// records come first, repeats follow in cyclic order.
std::vector<std::size_t> balance_indices_by_anchor(const std::vector<int>& anchor_labels);
std::vector<DatasetRecord> balance_by_anchor(const std::vector<DatasetRecord>& records);

}  // namespace lpa
