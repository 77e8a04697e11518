#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace lpa {

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Wraps an angle in degrees into [0, 360).
inline double wrap_deg_0_360(double a) {
  double r = std::fmod(a, 360.0);
  if (r < 0.0) r += 360.0;
  if (r >= 360.0) r = 0.0;
  return r;
}

/// Wraps an angle in degrees into (-180, 180].
inline double wrap_deg_pm180(double a) {
  double r = std::fmod(a, 360.0);
  if (r <= -180.0) r += 360.0;
  if (r > 180.0) r -= 360.0;
  return r;
}

/// Circular absolute difference of two angles in degrees, in [0, 180].
inline double circular_diff_deg(double a, double b) {
  double d = std::fabs(wrap_deg_pm180(a - b));
  return d;
}

/// FNV-1a over raw bytes; used for manifest and parameter hashes.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

/// Static-partition parallel map over [0, n). Partitioning depends only on
/// (n, threads), so results composed in chunk order are reproducible.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& chunk_fn);

int hardware_threads();

}  // namespace lpa
