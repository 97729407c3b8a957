#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ctkit/arrays.hpp"

namespace ctkit {

/// Beer-Lambert log transform: -log(I_out / I_in), elementwise.
/// Throws std::domain_error naming the first bin with a nonpositive intensity.
Sinogram preprocess(std::span<const double> intensities_in, std::span<const double> intensities_out,
                    const FanGeometry& geom);

/// Fan-beam ray transform by bilinear sampling along each ray at half-pixel steps.
Sinogram forward_project(const Image& f, const FanGeometry& geom);

/// Weighted fan-beam back-projection, pixel-driven with linear interpolation in u.
/// Pixels outside the fov disc are set to zero.
Image back_project(const Sinogram& g, const ImageGrid& grid);

/// Exact transpose of back_project.
Sinogram back_project_transpose(const Image& x, const FanGeometry& geom);

/**
 * Precomputed interpolation footprint of back_project for one (grid, geometry)
 * pair. Produces bitwise the same results as the free functions and is meant
 * for repeated application during training.
 */
class BackProjector {
 public:
  BackProjector(const ImageGrid& grid, const FanGeometry& geom);

  Image apply(const Sinogram& g) const;
  Sinogram apply_transpose(const Image& x) const;

  const ImageGrid& grid() const { return grid_; }
  const FanGeometry& geometry() const { return geom_; }

 private:
  struct Tap {
    std::uint32_t pixel;
    std::int32_t bin;  // lower interpolation bin, may be -1
    double c0;         // weight of `bin`
    double c1;         // weight of `bin + 1`
  };
  ImageGrid grid_;
  FanGeometry geom_;
  std::vector<std::size_t> angle_offsets_;  // taps_[angle_offsets_[i] .. angle_offsets_[i+1])
  std::vector<Tap> taps_;
};

/// Number of projector invocations since process start (for budget checks).
struct ProjectorCounts {
  std::uint64_t forward = 0;
  std::uint64_t back = 0;
  std::uint64_t transpose = 0;
};
ProjectorCounts projector_counts();

}  // namespace ctkit
