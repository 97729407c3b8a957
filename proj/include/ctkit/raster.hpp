#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctkit/arrays.hpp"

namespace ctkit {

enum class Dtype { f64, f32, u8 };

std::size_t element_size(Dtype d);
const char* dtype_name(Dtype d);

/**
 * Portable raster: one UTF-8 JSON header line
 *   {"magic":"ctkit1","dtype":...,"shape":[...],"meta":{...}}\n
 * followed by the raw little-endian row-major payload.
 */
struct Raster {
  Dtype dtype = Dtype::f64;
  std::vector<std::size_t> shape;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::uint8_t> payload;  // little-endian bytes

  std::size_t element_count() const;

  static Raster from_f64(std::vector<std::size_t> shape, std::span<const double> values,
                         nlohmann::json meta = nlohmann::json::object());
  static Raster from_f32(std::vector<std::size_t> shape, std::span<const float> values,
                         nlohmann::json meta = nlohmann::json::object());
  static Raster from_u8(std::vector<std::size_t> shape, std::span<const std::uint8_t> values,
                        nlohmann::json meta = nlohmann::json::object());

  /// Converts any dtype to double.
  std::vector<double> to_f64() const;
  std::vector<std::uint8_t> to_u8() const;
};

inline constexpr const char* kRasterMagic = "ctkit1";

void write_raster(std::ostream& os, const Raster& r);
Raster read_raster(std::istream& is);
void write_raster(const std::filesystem::path& path, const Raster& r);
Raster read_raster(const std::filesystem::path& path);

Raster to_raster(const Image& img);
Raster to_raster(const Sinogram& g);
Raster to_raster(const KnownMask& m);
/// Boolean image-shaped mask stored as u8.
Raster to_raster(const std::vector<std::uint8_t>& seg, const ImageGrid& grid);

Image image_from_raster(const Raster& r);
Sinogram sinogram_from_raster(const Raster& r);
KnownMask mask_from_raster(const Raster& r);
std::vector<std::uint8_t> segmentation_from_raster(const Raster& r, ImageGrid* grid = nullptr);

nlohmann::json to_json(const ImageGrid& grid);
ImageGrid image_grid_from_json(const nlohmann::json& j);

}  // namespace ctkit
