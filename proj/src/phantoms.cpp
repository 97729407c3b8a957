#include "ctkit/phantoms.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "ctkit/projector.hpp"
#include "ctkit/raster.hpp"

namespace ctkit {

namespace {

constexpr int kSuper = 4;
constexpr int kMaxAttempts = 1000;

struct Hole {
  HoleKind kind;
  double cx, cy;
  double half_a, half_b;  // half side lengths or semi-axes
  double angle;
  double bound() const { return kind == HoleKind::rectangle ? std::hypot(half_a, half_b) : std::max(half_a, half_b); }
  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double p = c * dx + s * dy, q = -s * dx + c * dy;
    if (kind == HoleKind::rectangle) return std::abs(p) <= half_a && std::abs(q) <= half_b;
    return (p * p) / (half_a * half_a) + (q * q) / (half_b * half_b) <= 1.0;
  }
};

template <typename Inside>
Image rasterize(const ImageGrid& grid, double value, Inside&& inside, std::vector<std::uint8_t>* seg) {
  Image img = Image::zeros(grid);
  if (seg) seg->assign(grid.side * grid.side, 0);
  const double ps = grid.pixel_size;
  for (std::size_t r = 0; r < grid.side; ++r) {
    for (std::size_t c = 0; c < grid.side; ++c) {
      const double x0 = grid.x_of(c) - 0.5 * ps, y0 = grid.y_of(r) + 0.5 * ps;
      int hits = 0;
      for (int a = 0; a < kSuper; ++a)
        for (int b = 0; b < kSuper; ++b)
          hits += inside(x0 + (b + 0.5) * ps / kSuper, y0 - (a + 0.5) * ps / kSuper) ? 1 : 0;
      const double frac = static_cast<double>(hits) / (kSuper * kSuper);
      img.at(r, c) = value * frac;
      if (seg) (*seg)[r * grid.side + c] = hits * 2 >= kSuper * kSuper ? 1 : 0;
    }
  }
  return img;
}

const char* hole_kind_name(HoleKind k) { return k == HoleKind::rectangle ? "rectangle" : "ellipse"; }

HoleKind hole_kind_from(const std::string& s) {
  if (s == "rectangle") return HoleKind::rectangle;
  if (s == "ellipse") return HoleKind::ellipse;
  throw std::invalid_argument("phantom: unknown hole kind '" + s + "'");
}

std::string stem_for(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05zu", index);
  return buf;
}

}  // namespace

void PhantomSpec::validate() const {
  if (!(disc_value > 0)) throw std::invalid_argument("phantom: disc_value must be positive");
  if (!(radius_min > 0 && radius_min <= radius_max && radius_max + center_jitter <= 1.0))
    throw std::invalid_argument("phantom: radius range must lie in (0, 1 - center_jitter]");
  if (center_jitter < 0) throw std::invalid_argument("phantom: center_jitter must be nonnegative");
  if (holes_min < 0 || holes_max < holes_min) throw std::invalid_argument("phantom: bad hole count range");
  if (holes_max > 0 && hole_kinds.empty()) throw std::invalid_argument("phantom: hole_kinds is empty");
  if (!(hole_size_min > 0 && hole_size_min <= hole_size_max && hole_size_max < 1.0))
    throw std::invalid_argument("phantom: hole size range must lie in (0, 1)");
  if (noise_sigma < 0) throw std::invalid_argument("phantom: noise_sigma must be nonnegative");
}

nlohmann::json to_json(const PhantomSpec& spec) {
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : spec.hole_kinds) kinds.push_back(hole_kind_name(k));
  return {{"disc_value", spec.disc_value},   {"radius_min", spec.radius_min},
          {"radius_max", spec.radius_max},   {"center_jitter", spec.center_jitter},
          {"holes_min", spec.holes_min},     {"holes_max", spec.holes_max},
          {"hole_kinds", kinds},             {"hole_size_min", spec.hole_size_min},
          {"hole_size_max", spec.hole_size_max}, {"noise_sigma", spec.noise_sigma},
          {"seed", spec.seed}};
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  PhantomSpec s;
  s.disc_value = j.value("disc_value", s.disc_value);
  s.radius_min = j.value("radius_min", s.radius_min);
  s.radius_max = j.value("radius_max", s.radius_max);
  s.center_jitter = j.value("center_jitter", s.center_jitter);
  s.holes_min = j.value("holes_min", s.holes_min);
  s.holes_max = j.value("holes_max", s.holes_max);
  if (j.contains("hole_kinds")) {
    s.hole_kinds.clear();
    for (const auto& k : j.at("hole_kinds")) s.hole_kinds.push_back(hole_kind_from(k.get<std::string>()));
  }
  s.hole_size_min = j.value("hole_size_min", s.hole_size_min);
  s.hole_size_max = j.value("hole_size_max", s.hole_size_max);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

Image rasterize_disc(const ImageGrid& grid, double cx, double cy, double radius, double value) {
  const double r2 = radius * radius;
  return rasterize(grid, value, [&](double x, double y) {
    return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r2;
  }, nullptr);
}

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed, const ImageGrid& grid,
                         double fov_radius) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double radius = fov_radius * (spec.radius_min + (spec.radius_max - spec.radius_min) * unit(rng));
  const double jr = fov_radius * spec.center_jitter * std::sqrt(unit(rng));
  const double ja = kTwoPi * unit(rng);
  const double cx = jr * std::cos(ja), cy = jr * std::sin(ja);

  const int hole_count =
      spec.holes_min + static_cast<int>(std::floor(unit(rng) * (spec.holes_max - spec.holes_min + 1)));
  std::vector<Hole> holes;
  int attempts = 0;
  while (static_cast<int>(holes.size()) < std::min(hole_count, spec.holes_max)) {
    if (++attempts > kMaxAttempts)
      throw std::runtime_error("generate_phantom: hole placement failed after 1000 attempts");
    Hole h;
    h.kind = spec.hole_kinds[static_cast<std::size_t>(unit(rng) * static_cast<double>(spec.hole_kinds.size())) %
                             spec.hole_kinds.size()];
    auto size = [&] { return radius * (spec.hole_size_min + (spec.hole_size_max - spec.hole_size_min) * unit(rng)); };
    h.half_a = 0.5 * size();
    h.half_b = 0.5 * size();
    h.angle = kPi * unit(rng);
    const double reach = 0.95 * radius - h.bound();
    if (reach <= 0) continue;
    const double hr = reach * std::sqrt(unit(rng));
    const double ha = kTwoPi * unit(rng);
    h.cx = cx + hr * std::cos(ha);
    h.cy = cy + hr * std::sin(ha);
    bool disjoint = true;
    for (const auto& o : holes)
      disjoint &= std::hypot(h.cx - o.cx, h.cy - o.cy) > h.bound() + o.bound() + 0.02 * radius;
    if (disjoint) holes.push_back(h);
  }

  const double r2 = radius * radius;
  Phantom p;
  p.image = rasterize(grid, spec.disc_value, [&](double x, double y) {
    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > r2) return false;
    for (const auto& h : holes)
      if (h.contains(x, y)) return false;
    return true;
  }, &p.segmentation);
  return p;
}

std::uint64_t sample_seed(const PhantomSpec& spec, std::size_t index) {
  // splitmix64 step keeps neighbouring seeds decorrelated
  std::uint64_t z = spec.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(index) + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Sample generate_sample(const PhantomSpec& spec, std::uint64_t seed, const ImageGrid& grid,
                       const FanGeometry& geom, double span) {
  Phantom p = generate_phantom(spec, seed, grid, geom.fov_radius);
  Sample s;
  s.full = forward_project(p.image, geom);
  std::mt19937_64 rng(seed ^ 0x5DEECE66DULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  s.wedge_start = kTwoPi * unit(rng);
  if (spec.noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (double& v : s.full.values) v += noise(rng);
  }
  s.mask = KnownMask::wedge(geom, s.wedge_start, span);
  s.sinogram = s.full;
  for (std::size_t k = 0; k < s.sinogram.values.size(); ++k)
    if (!s.mask.known[k]) s.sinogram.values[k] = 0.0;
  s.image = std::move(p.image);
  s.segmentation = std::move(p.segmentation);
  return s;
}

nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& e : m.entries)
    samples.push_back({{"index", e.index}, {"seed", e.seed}, {"wedge_start_deg", e.wedge_start_deg},
                       {"wedge_start_rad", e.wedge_start}, {"stem", e.stem}});
  return {{"format", "ctkit-dataset"}, {"version", 1},        {"spec", to_json(m.spec)},
          {"geometry", to_json(m.geom)}, {"grid", to_json(m.grid)}, {"wedge_deg", m.wedge_deg},
          {"count", m.entries.size()},  {"samples", samples}};
}

DatasetManifest dataset_manifest_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ctkit-dataset") throw std::runtime_error("dataset: not a ctkit dataset manifest");
  DatasetManifest m;
  m.spec = phantom_spec_from_json(j.at("spec"));
  m.geom = fan_geometry_from_json(j.at("geometry"));
  m.grid = image_grid_from_json(j.at("grid"));
  m.wedge_deg = j.at("wedge_deg").get<double>();
  for (const auto& s : j.at("samples")) {
    DatasetEntry e{s.at("index").get<std::size_t>(), s.at("seed").get<std::uint64_t>(),
                   s.at("wedge_start_deg").get<double>(), s.at("stem").get<std::string>()};
    e.wedge_start = s.contains("wedge_start_rad") ? s.at("wedge_start_rad").get<double>()
                                                  : e.wedge_start_deg * kPi / 180.0;
    m.entries.push_back(std::move(e));
  }
  if (j.value("count", m.entries.size()) != m.entries.size())
    throw std::runtime_error("dataset: manifest count disagrees with sample list");
  return m;
}

DatasetManifest generate_dataset(const PhantomSpec& spec, std::size_t count, const FanGeometry& geom,
                                 const ImageGrid& grid, double wedge_deg,
                                 const std::filesystem::path& out_dir) {
  spec.validate();
  geom.validate();
  check_grid_covers(grid, geom);
  std::filesystem::create_directories(out_dir);
  DatasetManifest m{spec, geom, grid, wedge_deg, {}};
  m.entries.resize(count);
  std::vector<std::string> errors(count);
  const auto n = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      const std::uint64_t seed = sample_seed(spec, idx);
      const Sample s = generate_sample(spec, seed, grid, geom, wedge_deg * kPi / 180.0);
      const std::string stem = stem_for(idx);
      write_raster(out_dir / (stem + ".img"), to_raster(s.image));
      write_raster(out_dir / (stem + ".seg"), to_raster(s.segmentation, grid));
      write_raster(out_dir / (stem + ".sino"), to_raster(s.sinogram));
      write_raster(out_dir / (stem + ".mask"), to_raster(s.mask));
      write_raster(out_dir / (stem + ".full"), to_raster(s.full));
      m.entries[idx] = {idx, seed, s.wedge_start * 180.0 / kPi, stem, s.wedge_start};
    } catch (const std::exception& e) {
      errors[idx] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error("generate_dataset: " + e);
  std::ofstream os(out_dir / "manifest.json");
  if (!os) throw std::runtime_error("generate_dataset: cannot write manifest");
  os << to_json(m).dump(1) << '\n';
  return m;
}

DatasetManifest read_dataset_manifest(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("dataset: cannot read " + (dir / "manifest.json").string());
  return dataset_manifest_from_json(nlohmann::json::parse(is));
}

Sample load_sample(const std::filesystem::path& dir, const DatasetEntry& entry) {
  Sample s;
  s.image = image_from_raster(read_raster(dir / (entry.stem + ".img")));
  s.segmentation = segmentation_from_raster(read_raster(dir / (entry.stem + ".seg")));
  s.sinogram = sinogram_from_raster(read_raster(dir / (entry.stem + ".sino")));
  s.mask = mask_from_raster(read_raster(dir / (entry.stem + ".mask")));
  s.mask.validate(s.sinogram.rows(), s.sinogram.cols());
  const auto full_path = dir / (entry.stem + ".full");
  if (std::filesystem::exists(full_path)) s.full = sinogram_from_raster(read_raster(full_path));
  s.wedge_start = entry.wedge_start;
  return s;
}

}  // namespace ctkit
