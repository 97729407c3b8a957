#include "ctkit/raster.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace ctkit {

namespace {

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T read_le(const std::uint8_t* p) {
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

Dtype parse_dtype(const std::string& s) {
  if (s == "f64") return Dtype::f64;
  if (s == "f32") return Dtype::f32;
  if (s == "u8") return Dtype::u8;
  throw std::runtime_error("raster: unknown dtype '" + s + "'");
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void expect_shape(const Raster& r, std::size_t rank, const char* what) {
  if (r.shape.size() != rank)
    throw std::runtime_error(std::string("raster: ") + what + " expects rank " + std::to_string(rank));
}

}  // namespace

std::size_t element_size(Dtype d) {
  switch (d) {
    case Dtype::f64: return 8;
    case Dtype::f32: return 4;
    case Dtype::u8: return 1;
  }
  return 0;
}

const char* dtype_name(Dtype d) {
  switch (d) {
    case Dtype::f64: return "f64";
    case Dtype::f32: return "f32";
    case Dtype::u8: return "u8";
  }
  return "?";
}

std::size_t Raster::element_count() const { return product(shape); }

Raster Raster::from_f64(std::vector<std::size_t> shape, std::span<const double> values,
                        nlohmann::json meta) {
  if (product(shape) != values.size()) throw std::invalid_argument("raster: shape/value count mismatch");
  Raster r{Dtype::f64, std::move(shape), std::move(meta), {}};
  r.payload.reserve(values.size() * 8);
  for (double v : values) append_le(r.payload, v);
  return r;
}

Raster Raster::from_f32(std::vector<std::size_t> shape, std::span<const float> values,
                        nlohmann::json meta) {
  if (product(shape) != values.size()) throw std::invalid_argument("raster: shape/value count mismatch");
  Raster r{Dtype::f32, std::move(shape), std::move(meta), {}};
  r.payload.reserve(values.size() * 4);
  for (float v : values) append_le(r.payload, v);
  return r;
}

Raster Raster::from_u8(std::vector<std::size_t> shape, std::span<const std::uint8_t> values,
                       nlohmann::json meta) {
  if (product(shape) != values.size()) throw std::invalid_argument("raster: shape/value count mismatch");
  return {Dtype::u8, std::move(shape), std::move(meta), {values.begin(), values.end()}};
}

std::vector<double> Raster::to_f64() const {
  const std::size_t n = element_count();
  std::vector<double> out(n);
  const std::uint8_t* p = payload.data();
  for (std::size_t i = 0; i < n; ++i) {
    switch (dtype) {
      case Dtype::f64: out[i] = read_le<double>(p + 8 * i); break;
      case Dtype::f32: out[i] = read_le<float>(p + 4 * i); break;
      case Dtype::u8: out[i] = p[i]; break;
    }
  }
  return out;
}

std::vector<std::uint8_t> Raster::to_u8() const {
  if (dtype == Dtype::u8) return payload;
  std::vector<std::uint8_t> out;
  for (double v : to_f64()) out.push_back(v != 0.0 ? 1 : 0);
  return out;
}

void write_raster(std::ostream& os, const Raster& r) {
  if (r.payload.size() != r.element_count() * element_size(r.dtype))
    throw std::invalid_argument("raster: payload length does not match shape");
  nlohmann::json header = {{"magic", kRasterMagic},
                           {"dtype", dtype_name(r.dtype)},
                           {"shape", r.shape},
                           {"meta", r.meta}};
  os << header.dump() << '\n';
  os.write(reinterpret_cast<const char*>(r.payload.data()),
           static_cast<std::streamsize>(r.payload.size()));
  if (!os) throw std::runtime_error("raster: write failed");
}

Raster read_raster(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("raster: missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("raster: malformed header: ") + e.what());
  }
  if (!header.is_object() || header.value("magic", "") != kRasterMagic)
    throw std::runtime_error("raster: bad magic");
  if (!header.contains("dtype") || !header.contains("shape"))
    throw std::runtime_error("raster: header lacks dtype or shape");
  Raster r;
  r.dtype = parse_dtype(header.at("dtype").get<std::string>());
  r.shape = header.at("shape").get<std::vector<std::size_t>>();
  r.meta = header.value("meta", nlohmann::json::object());
  const std::size_t bytes = r.element_count() * element_size(r.dtype);
  r.payload.resize(bytes);
  is.read(reinterpret_cast<char*>(r.payload.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(is.gcount()) != bytes)
    throw std::runtime_error("raster: truncated payload (expected " + std::to_string(bytes) +
                             " bytes, got " + std::to_string(is.gcount()) + ")");
  return r;
}

void write_raster(const std::filesystem::path& path, const Raster& r) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("raster: cannot open " + path.string() + " for writing");
  write_raster(os, r);
}

Raster read_raster(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("raster: cannot open " + path.string());
  return read_raster(is);
}

nlohmann::json to_json(const ImageGrid& grid) {
  return {{"side", grid.side}, {"pixel_size", grid.pixel_size}};
}

ImageGrid image_grid_from_json(const nlohmann::json& j) {
  if (!j.contains("side") || !j.contains("pixel_size"))
    throw std::invalid_argument("grid: needs 'side' and 'pixel_size'");
  ImageGrid g{j.at("side").get<std::size_t>(), j.at("pixel_size").get<double>()};
  if (g.side == 0 || !(g.pixel_size > 0)) throw std::invalid_argument("grid: sizes must be positive");
  return g;
}

Raster to_raster(const Image& img) {
  return Raster::from_f64({img.side(), img.side()}, img.values, {{"kind", "image"}, {"grid", to_json(img.grid)}});
}

Raster to_raster(const Sinogram& g) {
  return Raster::from_f64({g.rows(), g.cols()}, g.values, {{"kind", "sinogram"}, {"geometry", to_json(g.geom)}});
}

Raster to_raster(const KnownMask& m) {
  return Raster::from_u8({m.rows, m.cols}, m.known, {{"kind", "mask"}});
}

Raster to_raster(const std::vector<std::uint8_t>& seg, const ImageGrid& grid) {
  return Raster::from_u8({grid.side, grid.side}, seg, {{"kind", "segmentation"}, {"grid", to_json(grid)}});
}

Image image_from_raster(const Raster& r) {
  expect_shape(r, 2, "image");
  if (r.shape[0] != r.shape[1]) throw std::runtime_error("raster: image must be square");
  ImageGrid grid{r.shape[0], 1.0};
  if (r.meta.contains("grid")) grid = image_grid_from_json(r.meta.at("grid"));
  if (grid.side != r.shape[0]) throw std::runtime_error("raster: grid side disagrees with shape");
  return {grid, r.to_f64()};
}

Sinogram sinogram_from_raster(const Raster& r) {
  expect_shape(r, 2, "sinogram");
  if (!r.meta.contains("geometry")) throw std::runtime_error("raster: sinogram lacks geometry meta");
  FanGeometry geom = fan_geometry_from_json(r.meta.at("geometry"));
  if (geom.angle_count() != r.shape[0] || geom.bin_count != r.shape[1])
    throw std::runtime_error("raster: sinogram shape disagrees with geometry (rows = angles, cols = bins)");
  return {std::move(geom), r.to_f64()};
}

KnownMask mask_from_raster(const Raster& r) {
  expect_shape(r, 2, "mask");
  return {r.shape[0], r.shape[1], r.to_u8()};
}

std::vector<std::uint8_t> segmentation_from_raster(const Raster& r, ImageGrid* grid) {
  expect_shape(r, 2, "segmentation");
  if (grid) {
    *grid = ImageGrid{r.shape[0], 1.0};
    if (r.meta.contains("grid")) *grid = image_grid_from_json(r.meta.at("grid"));
  }
  return r.to_u8();
}

}  // namespace ctkit
