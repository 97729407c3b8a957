#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ctkit/arrays.hpp"
#include "ctkit/geometry.hpp"

namespace ctkit::testing {

inline ImageGrid unit_grid(std::size_t side) { return ImageGrid{side, 2.0 / static_cast<double>(side)}; }

/// Full orbit over [-1,1]^2 with the desk source distance and detector.
inline FanGeometry orbit(std::size_t bins, std::size_t angles, const ImageGrid& grid) {
  return FanGeometry::full_scan(5.0, bins, 2.0, angles, grid.default_fov());
}

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

inline Image random_image(const ImageGrid& grid, std::uint64_t seed) {
  return {grid, random_values(grid.side * grid.side, seed)};
}

inline Sinogram random_sinogram(const FanGeometry& geom, std::uint64_t seed) {
  return {geom, random_values(geom.angle_count() * geom.bin_count, seed)};
}

inline double rel_diff(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

inline double rel_l2(const std::vector<double>& a, const std::vector<double>& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += (a[k] - ref[k]) * (a[k] - ref[k]);
    den += ref[k] * ref[k];
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ctkit-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ctkit::testing
