#pragma once

#include <array>
#include <string>
#include <vector>

#include "lpa/config.hpp"
#include "lpa/dataset.hpp"
#include "lpa/field.hpp"
#include "lpa/nn.hpp"
#include "lpa/pose_codec.hpp"
#include "lpa/rng.hpp"

namespace lpa {

/// [B,3,H,W] tensor in [0,1] from stored 8-bit images.
nn::Tensor images_to_tensor(const std::vector<const ImageU8*>& images);
nn::Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const nn::Tensor& t, int batch_index = 0);

/// Multi-scale room-size conditioning: one encoded feature map per generator
/// level.
struct RoomSizeGrid {
  std::vector<nn::Tensor> levels;
};

/// Tri-plane generator: style-modulated upsampling stack conditioned on the
/// room size through per-level encoded floor-plan grids. The field decoder
/// parameters live here too (shared across scenes).
class Generator {
 public:
  Generator(const NetConfig& net, const FieldConfig& field, Rng& rng);

  /// Builds the radiance field for (z, room); differentiable w.r.t.
  /// generator parameters.
  TriPlaneField generate(const nn::Tensor& z, const RoomBox& room) const;

  /// Deterministic encoded conditioning grids for a room size (value path).
  RoomSizeGrid encode_room_size(const RoomBox& room) const;

  int levels() const { return static_cast<int>(convs_.size()); }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  const NetConfig& net_config() const { return net_; }

 private:
  nn::Var room_grid(const RoomBox& room, int res) const;

  NetConfig net_;
  FieldConfig field_;
  nn::ParamSet params_;
  nn::Var const_input_;
  nn::Linear map1_, map2_;
  std::vector<nn::Conv> convs_;
  std::vector<nn::Linear> style_affines_;
  std::vector<nn::Conv> room_encoders_;
  std::array<nn::Conv, 3> plane_heads_;
  TriPlaneField::Decoder decoder_;
};

class Discriminator {
 public:
  struct Out {
    nn::Var score;        // [B,1]
    nn::Var pose_logits;  // [B, 4+7*bins]
    nn::Var mid_features; // [B, feat] pooled mid-level features (distill stub)
  };

  Discriminator(const NetConfig& net, int image_size, Rng& rng);
  Out forward(const nn::Var& images) const;
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

 private:
  NetConfig net_;
  int image_size_;
  nn::ParamSet params_;
  nn::Conv stem_;
  std::vector<nn::Conv> downs_;
  nn::Linear fc_, score_head_, pose_head_;
};

/// Small convolutional encoder shared by the segmenter, anchor classifier and
/// camera predictor. Produces features at full, half and quarter resolution.
class Backbone {
 public:
  struct Features {
    nn::Var f0, f1, f2;
  };

  Backbone() = default;
  Backbone(const NetConfig& net, nn::ParamSet& ps, const std::string& prefix, Rng& rng);
  Features forward(const nn::Var& images) const;
  void copy_weights_from(const Backbone& other);
  void set_trainable(bool trainable);
  std::vector<nn::Var> vars() const;
  int c0 = 0, c1 = 0, c2 = 0;

 private:
  nn::Conv stem_, down1_, down2_;
};

/// Foreground/background segmenter (background = room structure). Trained on
/// oracle masks, then frozen during GAN training.
class Segmenter {
 public:
  Segmenter(const NetConfig& net, Rng& rng);
  nn::Var logits(const nn::Var& images) const;  // [B,1,H,W]
  /// Hard {0,1} mask, 1 = foreground.
  Image segment(const Image& img) const;
  nn::Tensor segment_tensor(const nn::Tensor& images) const;  // [B,1,H,W] in {0,1}
  /// Pooled deepest features; the frozen feature extractor for the
  /// feature-distribution metric and the distillation stub.
  Eigen::VectorXd embed(const Image& img) const;
  nn::Var embed_var(const nn::Var& images) const;  // [B, c2]

  const Backbone& backbone() const { return backbone_; }
  nn::ParamSet& params() { return params_; }
  void save(const std::string& path) const { params_.save(path); }
  void load(const std::string& path) { params_.load(path); }

 private:
  NetConfig net_;
  nn::ParamSet params_;
  Backbone backbone_;
  nn::Conv up1_, proj1_, up2_, proj0_, head_;
};

/// Camera predictor: frozen pretrained backbone (default) plus a trainable
/// multiscale head that downsamples to the coarsest level, sums, and maps to
/// pose logits.
class CameraPredictor {
 public:
  CameraPredictor(const NetConfig& net, const FieldConfig& field, int image_size,
                  bool anchor_free, Rng& rng);

  nn::Var forward(const nn::Var& images) const;  // [B, 4+7*bins]
  PoseLogits predict(const Image& img) const;
  std::vector<PoseLogits> predict_batch(const std::vector<const ImageU8*>& images) const;

  void init_backbone_from(const Segmenter& seg, bool freeze = true);
  bool backbone_frozen() const { return backbone_frozen_; }
  /// Parameters the optimizer updates (head only when the backbone is frozen).
  std::vector<nn::Var> trainable_vars() const;
  const PoseCodec& codec() const { return codec_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

 private:
  NetConfig net_;
  PoseCodec codec_;
  nn::ParamSet params_;
  Backbone backbone_;
  bool backbone_frozen_ = false;
  nn::Conv g0a_, g0b_, g1_, g2_, fuse_;
  nn::Linear out_;
};

/// Anchor classifier: backbone features, six convolutions, global pooling,
/// four logits.
class AnchorClassifier {
 public:
  AnchorClassifier(const NetConfig& net, Rng& rng);
  nn::Var forward(const nn::Var& images) const;  // [B,4]
  int classify(const Image& img) const;
  void init_backbone_from(const Segmenter& seg, bool freeze = true);
  std::vector<nn::Var> trainable_vars() const;
  nn::ParamSet& params() { return params_; }

 private:
  NetConfig net_;
  nn::ParamSet params_;
  Backbone backbone_;
  bool backbone_frozen_ = false;
  std::array<nn::Conv, 6> convs_;
  nn::Linear out_;
};

struct SupervisedTrainOptions {
  int epochs = 12;
  int batch = 32;
  double lr = 2e-3;
  double holdout_frac = 0.15;
  int log_every = 0;
};

struct SupervisedTrainResult {
  double holdout_accuracy = 0.0;  // pixel accuracy for the segmenter
  int steps = 0;
};

/// Cross-entropy training against oracle anchor labels. Warns (but proceeds)
/// when a class is missing. Records must outlive the call.
SupervisedTrainResult train_anchor_classifier(AnchorClassifier& cls,
                                              const std::vector<const DatasetRecord*>& labeled,
                                              const SupervisedTrainOptions& opt, Rng& rng);

/// Pixel-wise BCE against oracle masks. `extra` pairs (e.g. top-down views)
/// join the training mix.
SupervisedTrainResult train_segmenter(Segmenter& seg,
                                      const std::vector<const DatasetRecord*>& pairs,
                                      const std::vector<std::pair<Image, Image>>& extra,
                                      const SupervisedTrainOptions& opt, Rng& rng);

}  // namespace lpa
