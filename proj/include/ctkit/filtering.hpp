#pragma once

#include <cstddef>
#include <span>

#include "ctkit/arrays.hpp"

namespace ctkit {

/// Global FBP gain from calibrate_fbp_scale on the default desk geometry
/// (128x128 grid over [-1,1]^2, R = 5, 128 bins over extent 2, 180 angles).
/// Recalibration at 64..256 pixels and 90..360 angles stays within 1e-4.
inline constexpr double kDefaultFbpScale = 3.2249697311576884;

struct FilterSpec {
  double cutoff_fraction = 1.0;  // of Nyquist, in (0, 1]
  std::size_t pad_factor = 2;    // >= 2
  double fbp_scale = kDefaultFbpScale;

  void validate() const;
};

/// Ramp |nu| (cycles per unit length) applied to one periodic row in place.
/// The DC bin is zeroed exactly.
void ramp_filter_periodic(std::span<double> row, double bin_width, double cutoff_fraction);

/// Ram-Lak filtering of every angle row: zero-pad, multiply by the ramp, crop.
Sinogram ram_lak(const Sinogram& g, const FilterSpec& spec);

/// fbp_scale * back_project(ram_lak(g)).
Image fbp(const Sinogram& g, const ImageGrid& grid, const FilterSpec& spec);

/// Gain that makes fbp reproduce a centered unit disc of radius fov/2 from
/// its full-scan forward projection (interior mean == 1).
double calibrate_fbp_scale(const FanGeometry& full_scan_geom, const ImageGrid& grid,
                           FilterSpec spec = {});

}  // namespace ctkit
