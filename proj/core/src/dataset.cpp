#include "lpa/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace lpa {

namespace fs = std::filesystem;

ImageU8 ImageU8::from_image(const Image& img) {
  ImageU8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = img.channels;
  out.data.resize(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double v = std::clamp(img.data[i], 0.0, 1.0);
    out.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

Image ImageU8::to_image() const {
  Image out(width, height, channels);
  for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = data[i] / 255.0;
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << header << "\n";
  for (const auto& r : rows) out << r << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

Dataset load_dataset(const std::string& dir, bool with_masks) {
  Dataset ds;
  ds.dir = dir;

  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ifstream mf(manifest_path);
  if (!mf) throw std::runtime_error("cannot open " + manifest_path);
  nlohmann::json manifest;
  mf >> manifest;
  ds.manifest_seed = manifest.value("seed", std::uint64_t(0));
  ds.content_hash = manifest.value("content_hash", std::uint64_t(0));
  ds.image_size = manifest.value("image_size", 0);

  const auto rows = read_csv((fs::path(dir) / "labels.csv").string());
  ds.records.reserve(rows.size());
  for (std::size_t i = 1; i < rows.size(); ++i) {  // skip header
    const auto& r = rows[i];
    if (r.size() < 3) throw std::runtime_error("labels.csv: malformed row");
    DatasetRecord rec;
    rec.id = r[0];
    rec.anchor_label = std::stoi(r[1]);
    rec.scene_id = std::stoi(r[2]);
    rec.image = ImageU8::from_image(
        read_png((fs::path(dir) / "images" / (rec.id + ".png")).string()));
    if (with_masks) {
      rec.mask = ImageU8::from_image(
          read_png((fs::path(dir) / "masks" / (rec.id + ".png")).string()));
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

namespace {
std::atomic<std::uint64_t> g_gt_opens{0};
}

std::uint64_t gt_sidecar_open_count() { return g_gt_opens.load(); }

std::vector<GtPoseRecord> load_gt_sidecar(const std::string& dir, GtAccess purpose) {
  // The only value of GtAccess is Evaluation; requiring it at every call site
  // keeps training code paths from opening the sidecar unannounced.
  (void)purpose;
  g_gt_opens.fetch_add(1);
  const auto rows = read_csv((fs::path(dir) / "poses_gt.csv").string());
  std::vector<GtPoseRecord> out;
  out.reserve(rows.size());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() < 18) throw std::runtime_error("poses_gt.csv: malformed row");
    GtPoseRecord g;
    g.id = r[0];
    g.pose.anchor_id = std::stoi(r[1]);
    g.pose.position = Vec3(std::stod(r[2]), std::stod(r[3]), std::stod(r[4]));
    g.pose.yaw_deg = std::stod(r[5]);
    g.pose.pitch_deg = std::stod(r[6]);
    g.pose.roll_deg = std::stod(r[7]);
    g.pose.fov_deg = std::stod(r[8]);
    g.room = RoomBox(std::stod(r[9]), std::stod(r[10]), std::stod(r[11]));
    g.camera.position = Vec3(std::stod(r[12]), std::stod(r[13]), std::stod(r[14]));
    g.camera.yaw_deg = std::stod(r[15]);
    g.camera.pitch_deg = std::stod(r[16]);
    g.camera.roll_deg = std::stod(r[17]);
    g.camera.fov_deg = g.pose.fov_deg;
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace lpa
