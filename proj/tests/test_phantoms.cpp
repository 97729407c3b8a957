#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "ctkit/evaluation.hpp"
#include "ctkit/phantoms.hpp"
#include "ctkit/projector.hpp"
#include "ctkit/raster.hpp"
#include "support.hpp"

using namespace ctkit;
using ctkit::testing::orbit;
using ctkit::testing::unit_grid;

namespace {

std::string file_text(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("phantoms are deterministic per seed") {
  const auto grid = unit_grid(64);
  const PhantomSpec spec;
  const auto a = generate_phantom(spec, 3, grid, grid.default_fov());
  const auto b = generate_phantom(spec, 3, grid, grid.default_fov());
  const auto c = generate_phantom(spec, 4, grid, grid.default_fov());
  CHECK(a.image.values == b.image.values);
  CHECK(a.segmentation == b.segmentation);
  CHECK(a.image.values != c.image.values);
}

TEST_CASE("a hole-free phantom is a disc of the expected area") {
  const auto grid = unit_grid(256);
  PhantomSpec spec;
  spec.holes_min = spec.holes_max = 0;
  spec.radius_min = spec.radius_max = 0.8;
  const double fov = grid.default_fov();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto p = generate_phantom(spec, seed, grid, fov);
    std::size_t count = 0;
    for (auto v : p.segmentation) count += v;
    const double area = static_cast<double>(count) * grid.pixel_size * grid.pixel_size;
    const double r = 0.8 * fov;
    CHECK(area == doctest::Approx(kPi * r * r).epsilon(0.01));
  }
}

TEST_CASE("pixel values stay in the material range with intermediate values only at edges") {
  const auto grid = unit_grid(96);
  PhantomSpec spec;
  spec.disc_value = 0.7;
  const auto p = generate_phantom(spec, 9, grid, grid.default_fov());
  const std::size_t n = grid.side;
  std::size_t partial = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double v = p.image.at(r, c);
      CHECK(v >= 0.0);
      CHECK(v <= spec.disc_value);
      if (v == 0.0 || v == spec.disc_value) continue;
      ++partial;
      // an edge pixel has a neighbour on the other side of the boundary
      bool edge = false;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const auto rr = static_cast<std::size_t>(static_cast<long>(r) + dr);
          const auto cc = static_cast<std::size_t>(static_cast<long>(c) + dc);
          if (rr >= n || cc >= n) continue;
          edge |= p.image.at(rr, cc) != v;
        }
      CHECK(edge);
    }
  CHECK(partial > 0);
  // material labels follow coverage
  for (std::size_t k = 0; k < p.segmentation.size(); ++k)
    CHECK(p.segmentation[k] == (p.image.values[k] >= 0.5 * spec.disc_value ? 1 : 0));
}

TEST_CASE("Otsu on the clean phantom recovers its segmentation") {
  const auto grid = unit_grid(128);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto p = generate_phantom(PhantomSpec{}, seed, grid, grid.default_fov());
    CHECK(score(p.image, p.segmentation) >= 0.99);
  }
}

TEST_CASE("samples carry a consistent projection and wedge") {
  const auto grid = unit_grid(64);
  const auto geom = orbit(64, 90, grid);
  const double span = kPi / 3;
  const auto s = generate_sample(PhantomSpec{}, 17, grid, geom, span);
  CHECK(s.full.values == forward_project(s.image, geom).values);
  CHECK(s.mask.known == KnownMask::wedge(geom, s.wedge_start, span).known);
  CHECK(s.mask.count() == 15 * 64);
  for (std::size_t k = 0; k < s.full.values.size(); ++k)
    CHECK(s.sinogram.values[k] == (s.mask.known[k] ? s.full.values[k] : 0.0));
  CHECK(s.wedge_start >= 0.0);
  CHECK(s.wedge_start < kTwoPi);

  PhantomSpec noisy;
  noisy.noise_sigma = 0.01;
  const auto n1 = generate_sample(noisy, 17, grid, geom, span);
  const auto n2 = generate_sample(noisy, 17, grid, geom, span);
  CHECK(n1.full.values == n2.full.values);
  CHECK(n1.image.values == s.image.values);
  const double dev = testing::rel_l2(n1.full.values, s.full.values) * norm2(s.full.values) /
                     std::sqrt(static_cast<double>(s.full.values.size()));
  CHECK(dev == doctest::Approx(0.01).epsilon(0.1));
}

TEST_CASE("sample seeds are distinct") {
  const PhantomSpec spec;
  CHECK(sample_seed(spec, 0) != sample_seed(spec, 1));
  PhantomSpec other;
  other.seed = 2;
  CHECK(sample_seed(spec, 0) != sample_seed(other, 0));
  CHECK(sample_seed(spec, 5) == sample_seed(spec, 5));
}

TEST_CASE("impossible hole layouts fail loudly") {
  PhantomSpec spec;
  spec.holes_min = spec.holes_max = 4;
  spec.hole_kinds = {HoleKind::rectangle};
  spec.hole_size_min = spec.hole_size_max = 0.95;
  const auto grid = unit_grid(32);
  CHECK_THROWS_AS(generate_phantom(spec, 1, grid, grid.default_fov()), std::runtime_error);
}

TEST_CASE("spec validation and json") {
  PhantomSpec s;
  s.holes_min = 3;
  s.holes_max = 2;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.radius_max = 0.99;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.hole_size_max = 1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.hole_kinds = {HoleKind::ellipse};
  s.noise_sigma = 0.5;
  s.seed = 99;
  const auto back = phantom_spec_from_json(to_json(s));
  CHECK(to_json(back) == to_json(s));
  CHECK_THROWS_AS(phantom_spec_from_json({{"hole_kinds", {"triangle"}}}), std::invalid_argument);
}

TEST_CASE("empty dataset") {
  const auto grid = unit_grid(32);
  const auto geom = orbit(32, 36, grid);
  const auto dir = testing::scratch_dir("dataset-empty");
  const auto m = generate_dataset(PhantomSpec{}, 0, geom, grid, 90.0, dir);
  CHECK(m.entries.empty());
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  CHECK(files == 1);
  CHECK(read_dataset_manifest(dir).entries.empty());
}

TEST_CASE("dataset files reload and regenerate identically") {
  const auto grid = unit_grid(32);
  const auto geom = orbit(32, 36, grid);
  const auto dir = testing::scratch_dir("dataset");
  PhantomSpec spec;
  spec.seed = 5;
  const auto m = generate_dataset(spec, 3, geom, grid, 60.0, dir);
  REQUIRE(m.entries.size() == 3);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  CHECK(files == 1 + 3 * 5);

  const auto back = read_dataset_manifest(dir);
  CHECK(back.geom == geom);
  CHECK(back.grid == grid);
  CHECK(back.wedge_deg == 60.0);
  CHECK(to_json(back.spec) == to_json(spec));
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& e = back.entries[k];
    CHECK(e.seed == sample_seed(spec, k));
    const Sample loaded = load_sample(dir, e);
    const Sample fresh = generate_sample(spec, e.seed, grid, geom, 60.0 * kPi / 180.0);
    CHECK(loaded.image.values == fresh.image.values);
    CHECK(loaded.segmentation == fresh.segmentation);
    CHECK(loaded.sinogram.values == fresh.sinogram.values);
    CHECK(loaded.mask.known == fresh.mask.known);
    CHECK(loaded.wedge_start == fresh.wedge_start);
    for (auto v : loaded.segmentation) CHECK((v == 0 || v == 1));
  }

  const auto dir2 = testing::scratch_dir("dataset-again");
  generate_dataset(spec, 3, geom, grid, 60.0, dir2);
  for (const auto& e : std::filesystem::directory_iterator(dir))
    CHECK(file_text(e.path()) == file_text(dir2 / e.path().filename()));

  CHECK_THROWS_AS(read_dataset_manifest(testing::scratch_dir("dataset-none")), std::runtime_error);
}
