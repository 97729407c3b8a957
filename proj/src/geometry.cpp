#include "ctkit/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ctkit {

void FanGeometry::validate() const {
  if (!(fov_radius > 0.0)) throw std::invalid_argument("geometry: fov must be positive");
  if (!(source_radius > fov_radius))
    throw std::invalid_argument("geometry: R must exceed fov (source outside the object support)");
  if (bin_count == 0) throw std::invalid_argument("geometry: bins must be positive");
  if (angles.empty()) throw std::invalid_argument("geometry: angles_deg must be non-empty");
  if (!(0.5 * detector_extent >= fov_detector_halfwidth() * (1.0 - 1e-12)))
    throw std::invalid_argument("geometry: extent too small to cover every line through the fov");
  for (std::size_t i = 0; i < angles.size(); ++i) {
    if (!std::isfinite(angles[i]) || angles[i] < 0.0 || angles[i] >= kTwoPi)
      throw std::invalid_argument("geometry: angle " + std::to_string(i) + " outside [0, 360)");
    if (i > 0 && !(angles[i] > angles[i - 1]))
      throw std::invalid_argument("geometry: angles must be strictly increasing");
  }
}

double FanGeometry::fov_detector_halfwidth() const {
  return source_radius * fov_radius /
         std::sqrt(source_radius * source_radius - fov_radius * fov_radius);
}

bool FanGeometry::is_uniform_full_scan(double tol) const {
  const std::size_t n = angles.size();
  if (n < 2) return false;
  const double step = kTwoPi / static_cast<double>(n);
  const double offset = angles.front();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(angles[i] - offset - step * static_cast<double>(i)) > tol) return false;
  }
  return true;
}

std::vector<double> FanGeometry::angular_weights() const {
  const std::size_t n = angles.size();
  if (n == 1) return {kTwoPi};
  if (is_uniform_full_scan()) return std::vector<double>(n, kTwoPi / static_cast<double>(n));
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = i == 0 ? angles[0] : angles[i - 1];
    const double hi = i + 1 == n ? angles[n - 1] : angles[i + 1];
    w[i] = 0.5 * (hi - lo);
  }
  return w;
}

FanGeometry FanGeometry::full_scan(double source_radius, std::size_t bin_count,
                                   double detector_extent, std::size_t angle_count,
                                   double fov_radius) {
  FanGeometry g;
  g.source_radius = source_radius;
  g.bin_count = bin_count;
  g.detector_extent = detector_extent;
  g.fov_radius = fov_radius;
  g.angles.resize(angle_count);
  for (std::size_t i = 0; i < angle_count; ++i)
    g.angles[i] = kTwoPi * static_cast<double>(i) / static_cast<double>(angle_count);
  return g;
}

FanCoords parallel_to_fan(ParallelCoords p, double source_radius) {
  const double r = source_radius;
  if (!(std::abs(p.s) < r))
    throw std::domain_error("parallel_to_fan: |s| must be smaller than the source radius");
  const double c = std::sqrt(r * r - p.s * p.s);
  return {p.theta + 0.5 * kPi - std::atan(p.s / c), p.s * r / c};
}

ParallelCoords fan_to_parallel(FanCoords q, double source_radius) {
  const double r = source_radius;
  return {q.beta - 0.5 * kPi + std::atan(q.u / r), q.u * r / std::sqrt(r * r + q.u * q.u)};
}

Vec2 fan_line_point(FanCoords q, double source_radius, double t) {
  const double cb = std::cos(q.beta), sb = std::sin(q.beta);
  return {source_radius * cb * (1.0 - t) + q.u * t * sb,
          source_radius * sb * (1.0 - t) - q.u * t * cb};
}

LineEndpoints line_params(FanCoords q, const FanGeometry& geom) {
  return {fan_line_point(q, geom.source_radius, 0.0), fan_line_point(q, geom.source_radius, 1.0)};
}

void check_grid_covers(const ImageGrid& grid, const FanGeometry& geom) {
  if (grid.side == 0 || !(grid.pixel_size > 0.0))
    throw std::invalid_argument("image grid must have positive size");
  if (grid.half_width() < geom.fov_radius * (1.0 - 1e-12))
    throw std::invalid_argument("image grid does not cover the field of view");
}

nlohmann::json to_json(const FanGeometry& geom) {
  nlohmann::json angles = nlohmann::json::array();
  for (double a : geom.angles) angles.push_back(a * 180.0 / kPi);
  // radians too, so that a written geometry reads back bitwise
  return {{"R", geom.source_radius},
          {"bins", geom.bin_count},
          {"extent", geom.detector_extent},
          {"angles_deg", angles},
          {"angles_rad", geom.angles},
          {"fov", geom.fov_radius}};
}

FanGeometry fan_geometry_from_json(const nlohmann::json& j) {
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw std::invalid_argument(std::string("geometry: missing field '") + key + "'");
    return j.at(key);
  };
  FanGeometry g;
  g.source_radius = need("R").get<double>();
  const auto& bins = need("bins");
  if (!bins.is_number_integer() || bins.get<long long>() <= 0)
    throw std::invalid_argument("geometry: field 'bins' must be a positive integer");
  g.bin_count = bins.get<std::size_t>();
  g.detector_extent = need("extent").get<double>();
  g.fov_radius = need("fov").get<double>();
  if (j.contains("angles_rad")) {
    for (const auto& a : j.at("angles_rad")) g.angles.push_back(a.get<double>());
  } else {
    for (const auto& a : need("angles_deg")) g.angles.push_back(a.get<double>() * kPi / 180.0);
  }
  g.validate();
  return g;
}

}  // namespace ctkit
