#include "ctkit/filtering.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ctkit/fft.hpp"
#include "ctkit/phantoms.hpp"
#include "ctkit/projector.hpp"

namespace ctkit {

void FilterSpec::validate() const {
  if (!(cutoff_fraction > 0.0 && cutoff_fraction <= 1.0))
    throw std::invalid_argument("filter: cutoff must lie in (0, 1]");
  if (pad_factor < 2) throw std::invalid_argument("filter: pad_factor must be at least 2");
  if (!std::isfinite(fbp_scale)) throw std::invalid_argument("filter: fbp_scale must be finite");
}

namespace {

void apply_ramp(const RealFft& fft, std::span<double> row, std::vector<cplx>& spec,
                double bin_width, double cutoff_fraction) {
  const std::size_t n = row.size();
  fft.forward(row, spec);
  const double nyquist = 0.5 / bin_width;
  const double dn = static_cast<double>(n);
  for (std::size_t m = 0; m < spec.size(); ++m) {
    const double nu = static_cast<double>(m) / (dn * bin_width);
    spec[m] *= (m > 0 && nu <= cutoff_fraction * nyquist * (1.0 + 1e-12)) ? nu / dn : 0.0;
  }
  fft.inverse(spec, row);
}

}  // namespace

void ramp_filter_periodic(std::span<double> row, double bin_width, double cutoff_fraction) {
  RealFft fft(row.size());
  std::vector<cplx> spec(fft.spectrum_size());
  apply_ramp(fft, row, spec, bin_width, cutoff_fraction);
}

Sinogram ram_lak(const Sinogram& g, const FilterSpec& spec) {
  spec.validate();
  const std::size_t cols = g.cols();
  if (cols < 2) throw std::invalid_argument("ram_lak: need at least two detector bins");
  for (double v : g.values)
    if (!std::isfinite(v)) throw std::invalid_argument("ram_lak: non-finite sinogram value");
  const std::size_t padded = spec.pad_factor * cols;
  const RealFft fft(padded);
  Sinogram out = Sinogram::zeros(g.geom);
  const auto rows = static_cast<long>(g.rows());
  const double du = g.geom.bin_width();

#pragma omp parallel
  {
    std::vector<double> buf(padded);
    std::vector<cplx> freq(fft.spectrum_size());
#pragma omp for schedule(static)
    for (long i = 0; i < rows; ++i) {
      const auto src = g.row(static_cast<std::size_t>(i));
      std::fill(buf.begin(), buf.end(), 0.0);
      std::copy(src.begin(), src.end(), buf.begin());
      apply_ramp(fft, buf, freq, du, spec.cutoff_fraction);
      auto dst = out.row(static_cast<std::size_t>(i));
      std::copy_n(buf.begin(), cols, dst.begin());
    }
  }
  return out;
}

Image fbp(const Sinogram& g, const ImageGrid& grid, const FilterSpec& spec) {
  Image img = back_project(ram_lak(g, spec), grid);
  for (double& v : img.values) v *= spec.fbp_scale;
  return img;
}

double calibrate_fbp_scale(const FanGeometry& full_scan_geom, const ImageGrid& grid, FilterSpec spec) {
  const double radius = 0.5 * full_scan_geom.fov_radius;
  const Image disc = rasterize_disc(grid, 0.0, 0.0, radius, 1.0);
  spec.fbp_scale = 1.0;
  const Image rec = fbp(forward_project(disc, full_scan_geom), grid, spec);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < grid.side; ++r) {
    for (std::size_t c = 0; c < grid.side; ++c) {
      const double x = grid.x_of(c), y = grid.y_of(r);
      if (x * x + y * y <= 0.64 * radius * radius) {
        sum += rec.at(r, c);
        ++count;
      }
    }
  }
  return static_cast<double>(count) / sum;
}

}  // namespace ctkit
