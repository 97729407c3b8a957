#include "ctkit/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

namespace ctkit {

RunConfig default_run_config() {
  RunConfig cfg;
  auto& p = cfg.pipeline;
  p.grid = ImageGrid{128, 2.0 / 128.0};
  p.geom = FanGeometry::full_scan(5.0, 128, 2.0, 180, p.grid.default_fov());
  p.basis = BasisSpec{};
  p.lambda_scale = 1e-3;
  p.filter = FilterSpec{};
  if (const char* env = std::getenv("CTKIT_CACHE_DIR"); env && *env) p.gram_cache_dir = env;
  cfg.fno = FnoDims{180, 60, 65, false};
  cfg.training.epochs = 10;
  cfg.training.learning_rate = 3e-3;
  return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
  const auto& p = cfg.pipeline;
  nlohmann::json geom = to_json(p.geom);
  if (p.geom.is_uniform_full_scan() && p.geom.angles.front() == 0.0) {
    geom.erase("angles_deg");
    geom.erase("angles_rad");
    geom["angle_count"] = p.geom.angle_count();
  }
  nlohmann::json j = {
      {"schema", "ctkit-run"},
      {"version", kRunConfigVersion},
      {"geometry", geom},
      {"grid", {{"side", p.grid.side}, {"pixel_size", p.grid.pixel_size}}},
      {"basis", to_json(p.basis)},
      {"lambda_scale", p.lambda_scale},
      {"filter",
       {{"cutoff", p.filter.cutoff_fraction},
        {"pad_factor", p.filter.pad_factor},
        {"fbp_scale", p.filter.fbp_scale}}},
      {"fno",
       {{"channels", cfg.fno.channels}, {"modes", cfg.fno.modes}, {"bias", cfg.fno.bias}, {"seed", cfg.fno_seed}}},
      {"training", to_json(cfg.training)},
      {"phantoms", to_json(cfg.phantoms)},
      {"paths", nlohmann::json::object()},
  };
  if (p.gram_cache_dir) j["paths"]["cache_dir"] = p.gram_cache_dir->string();
  return j;
}

namespace {

// Reads the fields of one JSON object, remembering which keys were used.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: field '" + path_ + "' must be an object");
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void number(const std::string& key, double& dst) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError("config: field '" + name(key) + "' must be a number");
    dst = v.get<double>();
    if (!std::isfinite(dst)) throw ConfigError("config: field '" + name(key) + "' must be finite");
  }

  template <typename T>
  void integer(const std::string& key, T& dst, long long min_value = 0) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_number_integer() || v.get<long long>() < min_value)
      throw ConfigError("config: field '" + name(key) + "' must be an integer >= " + std::to_string(min_value));
    dst = static_cast<T>(v.get<long long>());
  }

  void boolean(const std::string& key, bool& dst) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_boolean()) throw ConfigError("config: field '" + name(key) + "' must be true or false");
    dst = v.get<bool>();
  }

  void string(const std::string& key, std::string& dst) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError("config: field '" + name(key) + "' must be a string");
    dst = v.get<std::string>();
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("config: unknown field '" + name(key) + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Runs a module validator and names the config section on failure.
template <typename F>
void check(const std::string& section, F&& validate) {
  try {
    validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config: field '" + section + "': " + e.what());
  } catch (const std::domain_error& e) {
    throw ConfigError("config: field '" + section + "': " + e.what());
  }
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg = default_run_config();
  Fields top(j, "");
  std::string schema = "ctkit-run";
  top.string("schema", schema);
  if (schema != "ctkit-run") throw ConfigError("config: field 'schema' must be \"ctkit-run\"");
  int version = kRunConfigVersion;
  top.integer("version", version, 1);
  if (version != kRunConfigVersion)
    throw ConfigError("config: field 'version' is " + std::to_string(version) + ", this build reads " +
                      std::to_string(kRunConfigVersion));

  auto& p = cfg.pipeline;
  if (top.has("grid")) {
    Fields f(top.raw("grid"), "grid");
    f.integer("side", p.grid.side, 1);
    f.number("pixel_size", p.grid.pixel_size);
    if (!(p.grid.pixel_size > 0.0)) throw ConfigError("config: field 'grid.pixel_size' must be positive");
    f.finish();
  }

  {
    double R = p.geom.source_radius, extent = p.geom.detector_extent, fov = p.geom.fov_radius;
    std::size_t bins = p.geom.bin_count, count = p.geom.angle_count();
    std::vector<double> angles = p.geom.angles;
    bool explicit_fov = false;
    if (top.has("geometry")) {
      Fields f(top.raw("geometry"), "geometry");
      f.number("R", R);
      f.integer("bins", bins, 2);
      f.number("extent", extent);
      explicit_fov = f.has("fov");
      f.number("fov", fov);
      if (f.has("angle_count") && f.has("angles_deg"))
        throw ConfigError("config: fields 'geometry.angle_count' and 'geometry.angles_deg' are exclusive");
      f.integer("angle_count", count, 1);
      if (f.has("angles_deg")) {
        const auto& a = f.raw("angles_deg");
        if (!a.is_array() || a.empty()) throw ConfigError("config: field 'geometry.angles_deg' must be a non-empty array");
        angles.clear();
        for (const auto& v : a) {
          if (!v.is_number()) throw ConfigError("config: field 'geometry.angles_deg' must hold numbers");
          angles.push_back(v.get<double>() * kPi / 180.0);
        }
      } else {
        angles.clear();
        for (std::size_t i = 0; i < count; ++i)
          angles.push_back(kTwoPi * static_cast<double>(i) / static_cast<double>(count));
      }
      f.finish();
    }
    if (!explicit_fov && top.has("grid")) fov = p.grid.default_fov();
    FanGeometry g;
    g.source_radius = R;
    g.bin_count = bins;
    g.detector_extent = extent;
    g.angles = angles;
    g.fov_radius = fov;
    check("geometry", [&] { g.validate(); });
    if (g.is_uniform_full_scan() && angles.front() == 0.0) g = FanGeometry::full_scan(R, bins, extent, angles.size(), fov);
    p.geom = g;
    check("grid", [&] { check_grid_covers(p.grid, p.geom); });
  }

  if (top.has("basis")) {
    Fields f(top.raw("basis"), "basis");
    f.integer("N", p.basis.order_count, 1);
    std::string family = "chebyshev2";
    f.string("family", family);
    check("basis.family", [&] { p.basis = basis_spec_from_json({{"N", p.basis.order_count}, {"family", family}}); });
    f.finish();
  }
  top.number("lambda_scale", p.lambda_scale);
  if (p.lambda_scale < 0.0) throw ConfigError("config: field 'lambda_scale' must be nonnegative");

  if (top.has("filter")) {
    Fields f(top.raw("filter"), "filter");
    f.number("cutoff", p.filter.cutoff_fraction);
    f.integer("pad_factor", p.filter.pad_factor, 2);
    f.number("fbp_scale", p.filter.fbp_scale);
    f.finish();
    check("filter", [&] { p.filter.validate(); });
  }

  cfg.fno.angles = p.geom.angle_count();
  if (top.has("fno")) {
    Fields f(top.raw("fno"), "fno");
    f.integer("channels", cfg.fno.channels, 1);
    f.integer("modes", cfg.fno.modes, 1);
    f.boolean("bias", cfg.fno.bias);
    f.integer("seed", cfg.fno_seed, 0);
    f.finish();
  }
  check("fno.modes", [&] { cfg.fno.check_bins(p.geom.bin_count); });

  if (top.has("training")) {
    Fields f(top.raw("training"), "training");
    auto& t = cfg.training;
    f.integer("epochs", t.epochs, 0);
    f.number("learning_rate", t.learning_rate);
    f.number("beta1", t.beta1);
    f.number("beta2", t.beta2);
    f.number("epsilon", t.epsilon);
    f.integer("batch_size", t.batch_size, 1);
    f.integer("shuffle_seed", t.shuffle_seed, 0);
    f.integer("checkpoint_every", t.checkpoint_every, 0);
    f.finish();
    check("training", [&] { t.validate(); });
  }

  if (top.has("phantoms")) {
    const auto& ph = top.raw("phantoms");
    Fields f(ph, "phantoms");
    for (const char* key : {"disc_value", "radius_min", "radius_max", "center_jitter", "hole_size_min",
                            "hole_size_max", "noise_sigma"}) {
      double unused = 0.0;
      f.number(key, unused);
    }
    int unused_int = 0;
    f.integer("holes_min", unused_int);
    f.integer("holes_max", unused_int);
    std::uint64_t unused_seed = 0;
    f.integer("seed", unused_seed);
    if (f.has("hole_kinds") && !f.raw("hole_kinds").is_array())
      throw ConfigError("config: field 'phantoms.hole_kinds' must be an array");
    f.finish();
    nlohmann::json merged = to_json(cfg.phantoms);
    merged.update(ph);
    check("phantoms", [&] {
      cfg.phantoms = phantom_spec_from_json(merged);
      cfg.phantoms.validate();
    });
  }

  if (top.has("paths")) {
    Fields f(top.raw("paths"), "paths");
    std::string cache;
    f.string("cache_dir", cache);
    if (!cache.empty()) p.gram_cache_dir = cache;
    f.finish();
  }
  top.finish();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace ctkit
