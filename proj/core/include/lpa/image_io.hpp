#pragma once

#include <string>
#include <vector>

namespace lpa {

/// Row-major float image, values in [0,1]. channels is 1 or 3.
struct Image {
  int width = 0, height = 0, channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c) {
    data.assign(static_cast<std::size_t>(w) * h * c, 0.0);
  }
  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return data.size(); }
};

/// 8-bit PNG round trip. Writing quantizes to 8 bits; reading returns values
/// on the 1/255 grid, so write-then-read of already-quantized data is exact.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace lpa
