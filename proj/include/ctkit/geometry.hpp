#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <json.hpp>

namespace ctkit {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

using Vec2 = std::array<double, 2>;

/// Line coordinates in parallel-beam form: direction angle and signed
/// distance from the origin.
struct ParallelCoords {
  double theta = 0.0;
  double s = 0.0;
};

/// Line coordinates in flat-detector fan-beam form: source angle and signed
/// position on the virtual detector through the rotation center.
struct FanCoords {
  double beta = 0.0;
  double u = 0.0;
};

/**
 * Circular-orbit fan-beam acquisition with a flat detector.
 *
 * The detector coordinate u is measured on the virtual detector line that
 * passes through the rotation center, perpendicular to the central ray.
 * Bins are centered and uniformly spaced over `detector_extent`.
 */
struct FanGeometry {
  double source_radius = 0.0;
  std::size_t bin_count = 0;
  double detector_extent = 0.0;
  std::vector<double> angles;  // radians, strictly increasing in [0, 2pi)
  double fov_radius = 0.0;

  /// Throws std::invalid_argument naming the violated invariant.
  void validate() const;

  std::size_t angle_count() const { return angles.size(); }
  double bin_width() const { return detector_extent / static_cast<double>(bin_count); }
  double bin_center(std::size_t j) const {
    return (static_cast<double>(j) + 0.5) * bin_width() - 0.5 * detector_extent;
  }
  /// Largest |u| hit by a line through the fov disc.
  double fov_detector_halfwidth() const;

  /// True when the angles are uniformly spaced and cover the full orbit.
  bool is_uniform_full_scan(double tol = 1e-9) const;

  /// Per-angle quadrature weights (trapezoid; uniform 2pi/L for full scans).
  std::vector<double> angular_weights() const;

  /// Full-orbit geometry with `angle_count` uniformly spaced angles from 0.
  static FanGeometry full_scan(double source_radius, std::size_t bin_count,
                               double detector_extent, std::size_t angle_count,
                               double fov_radius);

  bool operator==(const FanGeometry&) const = default;
};

/// Square pixel grid centered on the rotation center. Row 0 is the top (+y).
struct ImageGrid {
  std::size_t side = 0;
  double pixel_size = 0.0;

  double half_width() const { return 0.5 * static_cast<double>(side) * pixel_size; }
  double x_of(std::size_t col) const {
    return (static_cast<double>(col) + 0.5) * pixel_size - half_width();
  }
  double y_of(std::size_t row) const {
    return half_width() - (static_cast<double>(row) + 0.5) * pixel_size;
  }
  /// Default reconstructable radius: 0.95 of the grid half-width.
  double default_fov() const { return 0.95 * half_width(); }

  bool operator==(const ImageGrid&) const = default;
};

/// Fan coordinates of the same line. Throws std::domain_error for |s| >= R.
FanCoords parallel_to_fan(ParallelCoords p, double source_radius);

ParallelCoords fan_to_parallel(FanCoords q, double source_radius);

/// Source point (t=0) and virtual-detector point (t=1) of the line (beta,u).
struct LineEndpoints {
  Vec2 source;
  Vec2 detector;
};
LineEndpoints line_params(FanCoords q, const FanGeometry& geom);

/// Point on the fan-beam line at parameter t.
Vec2 fan_line_point(FanCoords q, double source_radius, double t);

/// Throws std::invalid_argument if the grid does not cover the fov.
void check_grid_covers(const ImageGrid& grid, const FanGeometry& geom);

nlohmann::json to_json(const FanGeometry& geom);
FanGeometry fan_geometry_from_json(const nlohmann::json& j);

}  // namespace ctkit
