#pragma once

#include <vector>

#include "lpa/autodiff.hpp"
#include "lpa/geometry.hpp"
#include "lpa/pose_codec.hpp"

namespace lpa {

struct LossWeights {
  double lambda_b = 1.0;
  double lambda_c = 1.0;
  double lambda_r1 = 1.0;
  double lambda_k = 1.0;
};

/// Boundary loss: hinge on foreground pixels (content may sit in front of the
/// boundary, never behind it) plus L1 on background pixels (room structure is
/// affixed to the boundary). Normalized by the total pixel count.
///   L_B = (1/N) * [ sum_fg max(d_p - d_b, 0) + sum_bg |d_p - d_b| ]
nn::Var boundary_loss(const nn::Var& depth, const nn::Tensor& fg_mask,
                      const nn::Tensor& boundary_depth);

/// Sum of 8 cross-entropy terms (anchor + 7 binned components), averaged over
/// the batch. `include_anchor` drops the anchor term (anchor-free ablation).
nn::Var camera_ce_loss(const nn::Var& pose_logits, const std::vector<LpaPose>& targets,
                       const PoseCodec& codec, bool include_anchor = true);

/// Anchor-only CE against integer labels (used on real images, where the
/// continuous pose is unknown but the anchor label is).
nn::Var anchor_ce_loss(const nn::Var& pose_logits, const std::vector<int>& anchor_labels,
                       const PoseCodec& codec);

/// L_G = softplus(-score_fake) + lambda_B * L_B + lambda_C * L_C^D.
nn::Var generator_loss(const nn::Var& fake_scores, const nn::Var& boundary,
                       const nn::Var& camera_ce_fake, const LossWeights& w);

/// L_D = softplus(-score_real) + softplus(score_fake)
///       + lambda_R1 * (1/2 mean ||grad_x D||^2) + lambda_C * L_C^D + lambda_K * L_K.
/// `r1_grad_norm_sq` holds per-sample squared input-gradient norms; its
/// parameter gradient is applied separately by the trainer.
nn::Var discriminator_loss(const nn::Var& real_scores, const nn::Var& fake_scores,
                           const nn::Var& r1_grad_norm_sq, const nn::Var& camera_ce_fake,
                           const nn::Var& distill, const LossWeights& w);

}  // namespace lpa
