#pragma once

#include <string>
#include <vector>

#include "lpa/config.hpp"
#include "lpa/dataset.hpp"
#include "lpa/nets.hpp"
#include "lpa/synthroom.hpp"
#include "lpa/trainer.hpp"

namespace lpa {

/// Per-component mean absolute error of the predictor against ground-truth
/// poses (circular difference for yaw); anchor accuracy reported separately.
/// `per_anchor`, when given, receives the same statistics split by the
/// ground-truth anchor label.
PoseMae eval_pose_mae(const CameraPredictor& pred, const Dataset& ds,
                      const std::vector<GtPoseRecord>& gt, int subset = 0,
                      std::array<PoseMae, 4>* per_anchor = nullptr);

struct PoseHistograms {
  int bins = 0;
  std::array<std::vector<int>, PoseCodec::kComponents> component_counts;
  std::array<double, PoseCodec::kComponents> lo{}, hi{};
  std::array<int, 4> anchor_counts{};
  int total = 0;
};

PoseHistograms pose_histograms(const CameraPredictor& pred, const Dataset& ds, int bins);
void write_histograms_csv(const PoseHistograms& h, const std::string& path);
/// Simple bar-chart rendering of one histogram (white background, dark bars).
Image histogram_plot(const std::vector<int>& counts, int width = 256, int height = 128);

/// Frechet distance between Gaussian fits of two feature-vector sets. With
/// fewer samples than feature dimensions the covariances get diagonal
/// loading and `regularized` (when given) is set.
double feature_distribution_distance(const std::vector<Eigen::VectorXd>& a,
                                     const std::vector<Eigen::VectorXd>& b,
                                     bool* regularized = nullptr);

std::vector<Eigen::VectorXd> embed_images(const Segmenter& seg,
                                          const std::vector<const ImageU8*>& images);
std::vector<Eigen::VectorXd> embed_render_outputs(const Segmenter& seg,
                                                  const std::vector<Image>& images);

/// Connected foreground components with area at least min_frac of the image,
/// 4-connectivity. The layout-abnormality proxy counts core-object-sized
/// blobs in a top-down view.
int count_core_components(const Image& mask, double min_frac);

struct AbnormalityResult {
  double rate = 0.0;
  int scenes = 0;
  std::vector<int> component_counts;
};

/// Top-down orthographic render of a generated field over its room rectangle.
OrthoRender render_field_topdown(const TriPlaneField& field, const RoomBox& room,
                                 int resolution);

/// Fraction of generated scenes whose top-down segmenter view does not show
/// exactly one core-object-sized component.
AbnormalityResult layout_abnormality_proxy(const Generator& gen, const Segmenter& seg,
                                           int n_scenes, Rng& rng, const Config& cfg,
                                           int resolution = 48, double min_frac = 0.05);

/// Same proxy over oracle scenes (exactly one core object by construction);
/// measures the proxy's noise floor.
AbnormalityResult layout_abnormality_oracle(const Segmenter& seg, int n_scenes, Rng& rng,
                                            const SynthConfig& priors, int resolution = 48,
                                            double min_frac = 0.05);

/// 360-degree equirectangular panorama (width = 2 * height) at a fixed
/// position. Returns RGB; fills depth_out (normalized by far) when given.
Image render_panorama(const TriPlaneField& field, const Vec3& position, int height,
                      Image* depth_out = nullptr);

/// Linear pose interpolation (shortest-arc yaw) rendered frame by frame.
std::vector<Image> render_trajectory(const TriPlaneField& field, const RoomBox& room,
                                     const LpaPose& from, const LpaPose& to, int frames,
                                     int size, std::vector<Image>* depth_out = nullptr);

}  // namespace lpa
