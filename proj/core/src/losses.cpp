#include "lpa/losses.hpp"

#include <stdexcept>

namespace lpa {

using nn::Tensor;
using nn::Var;

Var boundary_loss(const Var& depth, const Tensor& fg_mask, const Tensor& boundary_depth) {
  const std::size_t n = depth->value.size();
  if (fg_mask.size() != n || boundary_depth.size() != n) {
    throw std::invalid_argument("boundary_loss: map shapes differ");
  }
  Tensor neg_db = boundary_depth;
  neg_db.vec() *= -1.0;
  Tensor bg_mask = fg_mask;
  for (std::size_t i = 0; i < n; ++i) bg_mask[i] = 1.0 - fg_mask[i];

  const Var diff = nn::add_const(depth, neg_db);
  const Var fg_term = nn::sum(nn::mul_const(nn::relu(diff), fg_mask));
  const Var bg_term = nn::sum(nn::mul_const(nn::abs_v(diff), bg_mask));
  return nn::mul_scalar(nn::add(fg_term, bg_term), 1.0 / static_cast<double>(n));
}

Var camera_ce_loss(const Var& pose_logits, const std::vector<LpaPose>& targets,
                   const PoseCodec& codec, bool include_anchor) {
  const int m = pose_logits->value.dim(0);
  if (static_cast<int>(targets.size()) != m) {
    throw std::invalid_argument("camera_ce_loss: batch size mismatch");
  }
  const int bins = codec.bins();
  std::vector<int> anchor_t(targets.size());
  std::array<std::vector<int>, PoseCodec::kComponents> comp_t;
  for (auto& v : comp_t) v.resize(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto enc = codec.encode(targets[i]);
    anchor_t[i] = enc[0];
    for (int c = 0; c < PoseCodec::kComponents; ++c) {
      comp_t[static_cast<std::size_t>(c)][i] = enc[static_cast<std::size_t>(c) + 1];
    }
  }
  Var total;
  if (include_anchor && !codec.anchor_free()) {
    total = nn::mean(nn::softmax_cross_entropy(nn::slice_cols(pose_logits, 0, 4), anchor_t));
  }
  for (int c = 0; c < PoseCodec::kComponents; ++c) {
    const int c0 = 4 + c * bins;
    Var term = nn::mean(nn::softmax_cross_entropy(nn::slice_cols(pose_logits, c0, c0 + bins),
                                                  comp_t[static_cast<std::size_t>(c)]));
    total = total ? nn::add(total, term) : term;
  }
  return total;
}

Var anchor_ce_loss(const Var& pose_logits, const std::vector<int>& anchor_labels,
                   const PoseCodec& codec) {
  if (codec.anchor_free()) return nn::scalar_var(0.0);
  const int m = pose_logits->value.dim(0);
  if (static_cast<int>(anchor_labels.size()) != m) {
    throw std::invalid_argument("anchor_ce_loss: batch size mismatch");
  }
  return nn::mean(nn::softmax_cross_entropy(nn::slice_cols(pose_logits, 0, 4), anchor_labels));
}

Var generator_loss(const Var& fake_scores, const Var& boundary, const Var& camera_ce_fake,
                   const LossWeights& w) {
  Var loss = nn::mean(nn::softplus(nn::neg(fake_scores)));
  if (boundary) loss = nn::add(loss, nn::mul_scalar(boundary, w.lambda_b));
  if (camera_ce_fake) loss = nn::add(loss, nn::mul_scalar(camera_ce_fake, w.lambda_c));
  return loss;
}

Var discriminator_loss(const Var& real_scores, const Var& fake_scores,
                       const Var& r1_grad_norm_sq, const Var& camera_ce_fake,
                       const Var& distill, const LossWeights& w) {
  Var loss = nn::add(nn::mean(nn::softplus(nn::neg(real_scores))),
                     nn::mean(nn::softplus(fake_scores)));
  if (r1_grad_norm_sq) {
    loss = nn::add(loss, nn::mul_scalar(nn::mean(r1_grad_norm_sq), 0.5 * w.lambda_r1));
  }
  if (camera_ce_fake) loss = nn::add(loss, nn::mul_scalar(camera_ce_fake, w.lambda_c));
  if (distill) loss = nn::add(loss, nn::mul_scalar(distill, w.lambda_k));
  return loss;
}

}  // namespace lpa
