#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lpa/config.hpp"
#include "lpa/dataset.hpp"
#include "lpa/losses.hpp"
#include "lpa/nets.hpp"
#include "lpa/samplers.hpp"

namespace lpa {

struct StepLog {
  long step = 0;
  char phase = 'g';  // 'g' = generative model, 'c' = camera predictor
  double loss_g = 0, adv_g = 0, lb = 0, lcd_g = 0;
  double loss_d = 0, r1 = 0, lcd_d = 0, lk = 0;
  double lc_cam = 0;
  bool aborted = false;

  bool finite() const;
  std::string csv_row() const;
  static const char* csv_header();
};

struct PoseMae {
  double x = 0, y = 0, z = 0, yaw = 0, pitch = 0, roll = 0, fov = 0;
  double anchor_accuracy = 0;
  int count = 0;
};

/// The joint optimization loop: GAN iterations (G, D trainable; C frozen,
/// supplying GSR candidates) alternating with camera-predictor iterations
/// (G frozen; PSR supplies labeled views).
class Trainer {
 public:
  Trainer(const Config& cfg, Dataset dataset, std::shared_ptr<Segmenter> segmenter,
          std::string run_dir);

  StepLog train_step_gan();
  StepLog train_step_camera();

  /// Runs the full schedule: warm-up, alternation, periodic eval rows and
  /// checkpoints. Returns the metrics written to <run_dir>/metrics.csv.
  void train();

  void save_checkpoint(const std::string& dir) const;
  void load_checkpoint(const std::string& dir);

  /// Pose MAE of the current predictor against the withheld sidecar
  /// (evaluation path; the only place the trainer touches ground truth).
  PoseMae evaluate_pose_mae(int subset);

  std::uint64_t hash_generator() const { return gen_.params().content_hash(); }
  std::uint64_t hash_discriminator() const { return disc_.params().content_hash(); }
  std::uint64_t hash_predictor() const { return pred_.params().content_hash(); }
  std::uint64_t hash_segmenter() const { return seg_->params().content_hash(); }

  Generator& generator() { return gen_; }
  Discriminator& discriminator() { return disc_; }
  CameraPredictor& predictor() { return pred_; }
  const PoseCodec& codec() const { return codec_; }
  const Config& config() const { return cfg_; }
  long gan_steps_done() const { return gan_steps_done_; }
  long cam_steps_done() const { return cam_steps_done_; }
  const std::vector<StepLog>& logs() const { return logs_; }
  int gsr_fallbacks() const { return gsr_fallbacks_; }
  const std::string& run_dir() const { return run_dir_; }
  const std::vector<std::size_t>& train_indices() const { return train_indices_; }

  RoomBox sample_room(Rng& rng) const;

 private:
  struct FakeItem {
    nn::Var image;     // [1,3,W,W]
    nn::Var boundary;  // scalar L_B
    LpaPose pose;
  };
  FakeItem make_fake(bool warmup_pose, const std::vector<LpaPose>& candidates);
  nn::Tensor real_batch_tensor(int batch, std::vector<int>* anchor_labels);
  void append_metrics(const StepLog& log);
  void write_eval_row(long step, const PoseMae& mae);

  Config cfg_;
  Dataset dataset_;
  std::shared_ptr<Segmenter> seg_;
  std::string run_dir_;
  Rng rng_;
  PoseCodec codec_;
  Generator gen_;
  Discriminator disc_;
  CameraPredictor pred_;
  nn::Adam opt_g_, opt_d_, opt_c_;
  std::vector<std::size_t> train_indices_;
  long gan_steps_done_ = 0;
  long cam_steps_done_ = 0;
  int gsr_fallbacks_ = 0;
  std::vector<StepLog> logs_;
  std::vector<GtPoseRecord> gt_cache_;
  bool gt_loaded_ = false;
};

/// Networks reconstructed from a checkpoint directory (parameters only; use
/// Trainer::load_checkpoint to resume optimization).
struct CheckpointBundle {
  Config cfg;
  std::unique_ptr<Generator> gen;
  std::unique_ptr<Discriminator> disc;
  std::unique_ptr<CameraPredictor> pred;
  std::shared_ptr<Segmenter> seg;
};

CheckpointBundle load_checkpoint_bundle(const std::string& ckpt_dir);

}  // namespace lpa
