#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lpa/geometry.hpp"
#include "lpa/image_io.hpp"

namespace lpa {

/// 8-bit image as stored on disk; training tensors are built from this, so
/// a reloaded record is bit-identical to the freshly built one.
struct ImageU8 {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> data;

  static ImageU8 from_image(const Image& img);
  Image to_image() const;
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// One training image plus its oracle-derived annotations. Ground-truth
/// poses live in a separate sidecar (poses_gt.csv) so training stays
/// pose-blind.
struct DatasetRecord {
  std::string id;
  int anchor_label = 0;
  int scene_id = 0;
  ImageU8 image;
  ImageU8 mask;  // 1 = foreground (objects), 0 = background (room structure)
};

struct Dataset {
  std::string dir;
  std::vector<DatasetRecord> records;
  std::uint64_t manifest_seed = 0;
  std::uint64_t content_hash = 0;
  int image_size = 0;
};

struct GtPoseRecord {
  std::string id;
  LpaPose pose;       // core-relative LPA pose
  GlobalCamera camera;
  RoomBox room;
};

Dataset load_dataset(const std::string& dir, bool with_masks = false);

/// Access discipline for the withheld sidecar: only evaluation code paths may
/// open it, and every open is counted so tests can assert training never did.
enum class GtAccess { Evaluation };
std::vector<GtPoseRecord> load_gt_sidecar(const std::string& dir, GtAccess purpose);
std::uint64_t gt_sidecar_open_count();

// CSV plumbing shared by dataset and eval outputs.
std::vector<std::vector<std::string>> read_csv(const std::string& path);
void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows);

}  // namespace lpa
