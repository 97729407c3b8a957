#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ctkit/geometry.hpp"

namespace ctkit {

/// Attenuation image on a square grid, row-major.
struct Image {
  ImageGrid grid;
  std::vector<double> values;

  static Image zeros(const ImageGrid& grid) {
    return {grid, std::vector<double>(grid.side * grid.side, 0.0)};
  }
  std::size_t side() const { return grid.side; }
  double& at(std::size_t row, std::size_t col) { return values[row * grid.side + col]; }
  double at(std::size_t row, std::size_t col) const { return values[row * grid.side + col]; }
};

/// Line integrals, one row per source angle and one column per detector bin.
struct Sinogram {
  FanGeometry geom;
  std::vector<double> values;

  static Sinogram zeros(const FanGeometry& geom) {
    return {geom, std::vector<double>(geom.angle_count() * geom.bin_count, 0.0)};
  }
  std::size_t rows() const { return geom.angle_count(); }
  std::size_t cols() const { return geom.bin_count; }
  double& at(std::size_t i, std::size_t j) { return values[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols(), cols()}; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols(), cols()}; }
};

/// Measured-bin indicator with the sinogram's shape.
struct KnownMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> known;

  static KnownMask all(std::size_t rows, std::size_t cols, bool value = true) {
    return {rows, cols, std::vector<std::uint8_t>(rows * cols, value ? 1 : 0)};
  }
  /// Rows whose angle lies in the arc [start, start + span), radians.
  static KnownMask wedge(const FanGeometry& geom, double start, double span);

  bool at(std::size_t i, std::size_t j) const { return known[i * cols + j] != 0; }
  bool row_known(std::size_t i) const;
  /// Throws std::invalid_argument if no bin is known or the shape differs.
  void validate(std::size_t expect_rows, std::size_t expect_cols) const;
  std::size_t count() const;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Throws std::invalid_argument when the two sinograms disagree in shape.
void check_same_shape(const Sinogram& a, const Sinogram& b, const char* what);
void check_same_shape(const Image& a, const Image& b, const char* what);

/// Circular shift of the sinogram rows: out.row((i + shift) mod L) = in.row(i).
Sinogram roll_rows(const Sinogram& g, std::ptrdiff_t shift);
KnownMask roll_rows(const KnownMask& m, std::ptrdiff_t shift);

}  // namespace ctkit
