#include "ctkit/projector.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ctkit {

namespace {

std::atomic<std::uint64_t> g_forward{0};
std::atomic<std::uint64_t> g_back{0};
std::atomic<std::uint64_t> g_transpose{0};

double bilinear(const Image& f, double x, double y) {
  const double h = f.grid.half_width();
  const double ps = f.grid.pixel_size;
  const double cf = (x + h) / ps - 0.5;
  const double rf = (h - y) / ps - 0.5;
  const double c0f = std::floor(cf), r0f = std::floor(rf);
  const double fx = cf - c0f, fy = rf - r0f;
  const auto n = static_cast<long>(f.side());
  const long c0 = static_cast<long>(c0f), r0 = static_cast<long>(r0f);
  auto px = [&](long r, long c) -> double {
    if (r < 0 || c < 0 || r >= n || c >= n) return 0.0;
    return f.values[static_cast<std::size_t>(r * n + c)];
  };
  return (1.0 - fy) * ((1.0 - fx) * px(r0, c0) + fx * px(r0, c0 + 1)) +
         fy * ((1.0 - fx) * px(r0 + 1, c0) + fx * px(r0 + 1, c0 + 1));
}

struct AngleTrig {
  double cos_b, sin_b, scale;  // scale = angular weight / 2pi
};

std::vector<AngleTrig> angle_table(const FanGeometry& geom) {
  const auto w = geom.angular_weights();
  std::vector<AngleTrig> t(geom.angle_count());
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = {std::cos(geom.angles[i]), std::sin(geom.angles[i]), w[i] / kTwoPi};
  return t;
}

// Interpolation footprint of pixel (x, y) at one angle: sinogram bins `bin`
// and `bin + 1` with weights c0 and c1. Returns false if the pixel sees no
// detector bin.
bool footprint(double x, double y, const AngleTrig& a, const FanGeometry& geom,
               std::int32_t& bin, double& c0, double& c1) {
  const double r = geom.source_radius;
  const double across = x * a.sin_b - y * a.cos_b;
  const double depth = r - x * a.cos_b - y * a.sin_b;
  const double u = r * across / depth;
  const double weight = r * std::sqrt(across * across + depth * depth) / (depth * depth);
  const double p = (u + 0.5 * geom.detector_extent) / geom.bin_width() - 0.5;
  const double pf = std::floor(p);
  const auto nb = static_cast<double>(geom.bin_count);
  if (pf < -1.0 || pf > nb - 1.0) return false;
  const double frac = p - pf;
  const double coef = a.scale * weight;
  bin = static_cast<std::int32_t>(pf);
  c0 = coef * (1.0 - frac);
  c1 = coef * frac;
  return true;
}

bool inside_fov(double x, double y, double fov) { return x * x + y * y <= fov * fov; }

void check_finite_geometry(const FanGeometry& geom) {
  if (geom.bin_count == 0 || geom.angles.empty())
    throw std::invalid_argument("projector: empty geometry");
}

}  // namespace

ProjectorCounts projector_counts() {
  return {g_forward.load(), g_back.load(), g_transpose.load()};
}

Sinogram preprocess(std::span<const double> intensities_in, std::span<const double> intensities_out,
                    const FanGeometry& geom) {
  const std::size_t n = geom.angle_count() * geom.bin_count;
  if (intensities_in.size() != n || intensities_out.size() != n)
    throw std::invalid_argument("preprocess: intensity arrays must have shape angles x bins");
  Sinogram g = Sinogram::zeros(geom);
  for (std::size_t k = 0; k < n; ++k) {
    if (!(intensities_in[k] > 0.0) || !(intensities_out[k] > 0.0)) {
      throw std::domain_error("preprocess: nonpositive intensity at angle " +
                              std::to_string(k / geom.bin_count) + ", bin " +
                              std::to_string(k % geom.bin_count));
    }
    g.values[k] = -std::log(intensities_out[k] / intensities_in[k]);
  }
  return g;
}

Sinogram forward_project(const Image& f, const FanGeometry& geom) {
  check_finite_geometry(geom);
  ++g_forward;
  Sinogram g = Sinogram::zeros(geom);
  const double r = geom.source_radius;
  const double step = 0.5 * f.grid.pixel_size;
  // samples beyond one pixel outside the grid only ever read zeros
  const double box = f.grid.half_width() + f.grid.pixel_size;
  const auto rows = static_cast<long>(geom.angle_count());

#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    const double cb = std::cos(geom.angles[static_cast<std::size_t>(i)]);
    const double sb = std::sin(geom.angles[static_cast<std::size_t>(i)]);
    const double sx = r * cb, sy = r * sb;
    for (std::size_t j = 0; j < geom.bin_count; ++j) {
      const double u = geom.bin_center(j);
      const double dx0 = u * sb - sx, dy0 = -u * cb - sy;
      const double len = std::sqrt(dx0 * dx0 + dy0 * dy0);
      const double dx = dx0 / len, dy = dy0 / len;
      // slab clipping against the padded grid square, arclength parameter from the source
      double t0 = -1e300, t1 = 1e300;
      bool hit = true;
      auto slab = [&](double p, double d) {
        if (std::abs(d) < 1e-15) {
          if (std::abs(p) > box) hit = false;
          return;
        }
        double a = (-box - p) / d, b = (box - p) / d;
        if (a > b) std::swap(a, b);
        t0 = std::max(t0, a);
        t1 = std::min(t1, b);
      };
      slab(sx, dx);
      slab(sy, dy);
      if (!hit || t1 <= t0) continue;
      // sample lattice anchored at the foot of the perpendicular from the origin
      const double foot = -(sx * dx + sy * dy);
      const long k0 = static_cast<long>(std::ceil((t0 - foot) / step));
      const long k1 = static_cast<long>(std::floor((t1 - foot) / step));
      double acc = 0.0;
      for (long k = k0; k <= k1; ++k) {
        const double t = foot + static_cast<double>(k) * step;
        acc += bilinear(f, sx + t * dx, sy + t * dy);
      }
      g.at(static_cast<std::size_t>(i), j) = acc * step;
    }
  }
  return g;
}

Image back_project(const Sinogram& g, const ImageGrid& grid) {
  const FanGeometry& geom = g.geom;
  check_finite_geometry(geom);
  if (g.values.size() != geom.angle_count() * geom.bin_count)
    throw std::invalid_argument("back_project: sinogram shape does not match its geometry");
  ++g_back;
  const auto trig = angle_table(geom);
  Image img = Image::zeros(grid);
  const auto n = static_cast<long>(grid.side);
  const auto nb = static_cast<std::int32_t>(geom.bin_count);

#pragma omp parallel for schedule(static)
  for (long row = 0; row < n; ++row) {
    const double y = grid.y_of(static_cast<std::size_t>(row));
    for (std::size_t col = 0; col < grid.side; ++col) {
      const double x = grid.x_of(col);
      if (!inside_fov(x, y, geom.fov_radius)) continue;
      double acc = 0.0;
      for (std::size_t i = 0; i < trig.size(); ++i) {
        std::int32_t bin;
        double c0, c1;
        if (!footprint(x, y, trig[i], geom, bin, c0, c1)) continue;
        const double* line = g.values.data() + i * geom.bin_count;
        double contrib = 0.0;
        if (bin >= 0) contrib += c0 * line[bin];
        if (bin + 1 < nb) contrib += c1 * line[bin + 1];
        acc += contrib;
      }
      img.at(static_cast<std::size_t>(row), col) = acc;
    }
  }
  return img;
}

Sinogram back_project_transpose(const Image& x, const FanGeometry& geom) {
  check_finite_geometry(geom);
  ++g_transpose;
  const auto trig = angle_table(geom);
  Sinogram g = Sinogram::zeros(geom);
  const ImageGrid& grid = x.grid;
  const auto rows = static_cast<long>(geom.angle_count());
  const auto nb = static_cast<std::int32_t>(geom.bin_count);

#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    double* line = g.values.data() + static_cast<std::size_t>(i) * geom.bin_count;
    for (std::size_t row = 0; row < grid.side; ++row) {
      const double y = grid.y_of(row);
      for (std::size_t col = 0; col < grid.side; ++col) {
        const double xc = grid.x_of(col);
        if (!inside_fov(xc, y, geom.fov_radius)) continue;
        std::int32_t bin;
        double c0, c1;
        if (!footprint(xc, y, trig[static_cast<std::size_t>(i)], geom, bin, c0, c1)) continue;
        const double v = x.at(row, col);
        if (bin >= 0) line[bin] += c0 * v;
        if (bin + 1 < nb) line[bin + 1] += c1 * v;
      }
    }
  }
  return g;
}

BackProjector::BackProjector(const ImageGrid& grid, const FanGeometry& geom)
    : grid_(grid), geom_(geom) {
  check_finite_geometry(geom);
  const auto trig = angle_table(geom);
  angle_offsets_.reserve(trig.size() + 1);
  for (std::size_t i = 0; i < trig.size(); ++i) {
    angle_offsets_.push_back(taps_.size());
    for (std::size_t row = 0; row < grid.side; ++row) {
      const double y = grid.y_of(row);
      for (std::size_t col = 0; col < grid.side; ++col) {
        const double x = grid.x_of(col);
        if (!inside_fov(x, y, geom.fov_radius)) continue;
        Tap t{static_cast<std::uint32_t>(row * grid.side + col), 0, 0.0, 0.0};
        if (footprint(x, y, trig[i], geom, t.bin, t.c0, t.c1)) taps_.push_back(t);
      }
    }
  }
  angle_offsets_.push_back(taps_.size());
}

Image BackProjector::apply(const Sinogram& g) const {
  if (g.rows() != geom_.angle_count() || g.cols() != geom_.bin_count)
    throw std::invalid_argument("BackProjector: sinogram shape mismatch");
  ++g_back;
  Image img = Image::zeros(grid_);
  const auto nb = static_cast<std::int32_t>(geom_.bin_count);
  // angle-major accumulation matches the per-pixel angle order of back_project
  for (std::size_t i = 0; i + 1 < angle_offsets_.size(); ++i) {
    const double* line = g.values.data() + i * geom_.bin_count;
    for (std::size_t k = angle_offsets_[i]; k < angle_offsets_[i + 1]; ++k) {
      const Tap& t = taps_[k];
      double contrib = 0.0;
      if (t.bin >= 0) contrib += t.c0 * line[t.bin];
      if (t.bin + 1 < nb) contrib += t.c1 * line[t.bin + 1];
      img.values[t.pixel] += contrib;
    }
  }
  return img;
}

Sinogram BackProjector::apply_transpose(const Image& x) const {
  if (x.side() != grid_.side) throw std::invalid_argument("BackProjector: image shape mismatch");
  ++g_transpose;
  Sinogram g = Sinogram::zeros(geom_);
  const auto nb = static_cast<std::int32_t>(geom_.bin_count);
  const auto rows = static_cast<long>(geom_.angle_count());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    double* line = g.values.data() + static_cast<std::size_t>(i) * geom_.bin_count;
    for (std::size_t k = angle_offsets_[static_cast<std::size_t>(i)];
         k < angle_offsets_[static_cast<std::size_t>(i) + 1]; ++k) {
      const Tap& t = taps_[k];
      const double v = x.values[t.pixel];
      if (t.bin >= 0) line[t.bin] += t.c0 * v;
      if (t.bin + 1 < nb) line[t.bin + 1] += t.c1 * v;
    }
  }
  return g;
}

}  // namespace ctkit
