#include "ctkit/arrays.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ctkit {

KnownMask KnownMask::wedge(const FanGeometry& geom, double start, double span) {
  KnownMask m = all(geom.angle_count(), geom.bin_count, false);
  const double a0 = std::fmod(std::fmod(start, kTwoPi) + kTwoPi, kTwoPi);
  for (std::size_t i = 0; i < geom.angle_count(); ++i) {
    const double rel = std::fmod(geom.angles[i] - a0 + 2.0 * kTwoPi, kTwoPi);
    // small slack so that arcs given in whole degrees include their first angle
    if (rel < span - 1e-9 || std::abs(rel - kTwoPi) < 1e-9) {
      std::fill_n(m.known.begin() + static_cast<std::ptrdiff_t>(i * m.cols), m.cols, 1);
    }
  }
  return m;
}

bool KnownMask::row_known(std::size_t i) const {
  for (std::size_t j = 0; j < cols; ++j)
    if (!at(i, j)) return false;
  return true;
}

void KnownMask::validate(std::size_t expect_rows, std::size_t expect_cols) const {
  if (rows != expect_rows || cols != expect_cols || known.size() != rows * cols)
    throw std::invalid_argument("mask shape does not match the sinogram");
  if (count() == 0) throw std::invalid_argument("mask must mark at least one known bin");
}

std::size_t KnownMask::count() const {
  std::size_t n = 0;
  for (auto k : known) n += k != 0;
  return n;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void check_same_shape(const Sinogram& a, const Sinogram& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.values.size() != b.values.size())
    throw std::invalid_argument(std::string(what) + ": sinogram shape mismatch");
}

void check_same_shape(const Image& a, const Image& b, const char* what) {
  if (a.side() != b.side() || a.values.size() != b.values.size())
    throw std::invalid_argument(std::string(what) + ": image shape mismatch");
}

namespace {
std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}
}  // namespace

Sinogram roll_rows(const Sinogram& g, std::ptrdiff_t shift) {
  Sinogram out = Sinogram::zeros(g.geom);
  const std::size_t rows = g.rows(), cols = g.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t dst = wrap(static_cast<std::ptrdiff_t>(i) + shift, rows);
    std::copy_n(g.values.begin() + static_cast<std::ptrdiff_t>(i * cols), cols,
                out.values.begin() + static_cast<std::ptrdiff_t>(dst * cols));
  }
  return out;
}

KnownMask roll_rows(const KnownMask& m, std::ptrdiff_t shift) {
  KnownMask out = KnownMask::all(m.rows, m.cols, false);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const std::size_t dst = wrap(static_cast<std::ptrdiff_t>(i) + shift, m.rows);
    std::copy_n(m.known.begin() + static_cast<std::ptrdiff_t>(i * m.cols), m.cols,
                out.known.begin() + static_cast<std::ptrdiff_t>(dst * m.cols));
  }
  return out;
}

}  // namespace ctkit
