#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "ctkit/arrays.hpp"

namespace ctkit {

enum class HoleKind { rectangle, ellipse };

/// Disc phantoms with rectangular and elliptical holes. Lengths are
/// fractions: disc radius of the fov radius, hole sizes of the disc radius.
struct PhantomSpec {
  double disc_value = 1.0;
  double radius_min = 0.7;
  double radius_max = 0.9;
  double center_jitter = 0.05;  // fraction of fov; center uniform in a disc of this radius
  int holes_min = 1;
  int holes_max = 4;
  std::vector<HoleKind> hole_kinds{HoleKind::rectangle, HoleKind::ellipse};
  double hole_size_min = 0.05;  // rectangle sides / ellipse full axes
  double hole_size_max = 0.3;
  double noise_sigma = 0.0;     // additive Gaussian on sinogram bins
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

struct Phantom {
  Image image;
  std::vector<std::uint8_t> segmentation;  // material = 1
};

/// Disc of the given value, antialiased by 4x4 supersampling.
Image rasterize_disc(const ImageGrid& grid, double cx, double cy, double radius, double value);

/// Deterministic per seed. Throws std::runtime_error if hole placement fails
/// after 1000 rejection-sampling attempts.
Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed, const ImageGrid& grid,
                         double fov_radius);

struct Sample {
  Image image;
  std::vector<std::uint8_t> segmentation;
  Sinogram sinogram;   // measured wedge, zero elsewhere
  KnownMask mask;
  Sinogram full;       // full-orbit projection (noise included when enabled)
  double wedge_start = 0.0;  // radians
};

/// Phantom, its full projection and a random wedge of `span` radians.
Sample generate_sample(const PhantomSpec& spec, std::uint64_t seed, const ImageGrid& grid,
                       const FanGeometry& geom, double span);

/// Seed of sample `index` derived from the spec seed.
std::uint64_t sample_seed(const PhantomSpec& spec, std::size_t index);

struct DatasetEntry {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double wedge_start_deg = 0.0;
  std::string stem;
  double wedge_start = 0.0;  // radians, exact
};

struct DatasetManifest {
  PhantomSpec spec;
  FanGeometry geom;
  ImageGrid grid;
  double wedge_deg = 0.0;
  std::vector<DatasetEntry> entries;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest dataset_manifest_from_json(const nlohmann::json& j);

/// Writes `count` samples plus manifest.json to out_dir.
DatasetManifest generate_dataset(const PhantomSpec& spec, std::size_t count, const FanGeometry& geom,
                                 const ImageGrid& grid, double wedge_deg,
                                 const std::filesystem::path& out_dir);

DatasetManifest read_dataset_manifest(const std::filesystem::path& dir);
Sample load_sample(const std::filesystem::path& dir, const DatasetEntry& entry);

}  // namespace ctkit
