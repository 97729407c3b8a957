#include "ctkit/model.hpp"

#include <fstream>
#include <stdexcept>

#include "ctkit/raster.hpp"

namespace ctkit {

nlohmann::json to_json(const PipelineConfig& cfg) {
  nlohmann::json j = {
      {"geometry", to_json(cfg.geom)},
      {"grid", to_json(cfg.grid)},
      {"basis", to_json(cfg.basis)},
      {"lambda_scale", cfg.lambda_scale},
      {"filter",
       {{"cutoff", cfg.filter.cutoff_fraction},
        {"pad_factor", cfg.filter.pad_factor},
        {"fbp_scale", cfg.filter.fbp_scale}}},
  };
  if (cfg.gram_cache_dir) j["gram_cache_dir"] = cfg.gram_cache_dir->string();
  return j;
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  cfg.geom = fan_geometry_from_json(j.at("geometry"));
  cfg.grid = image_grid_from_json(j.at("grid"));
  cfg.basis = basis_spec_from_json(j.at("basis"));
  cfg.lambda_scale = j.at("lambda_scale").get<double>();
  const auto& f = j.at("filter");
  cfg.filter.cutoff_fraction = f.at("cutoff").get<double>();
  cfg.filter.pad_factor = f.at("pad_factor").get<std::size_t>();
  cfg.filter.fbp_scale = f.at("fbp_scale").get<double>();
  cfg.filter.validate();
  if (j.contains("gram_cache_dir")) cfg.gram_cache_dir = j.at("gram_cache_dir").get<std::string>();
  return cfg;
}

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.geom.validate();
  cfg_.filter.validate();
  check_grid_covers(cfg_.grid, cfg_.geom);
  extrapolator_ = std::make_shared<const Extrapolator>(cfg_.geom, cfg_.basis, cfg_.lambda_scale,
                                                       cfg_.gram_cache_dir);
  projector_ = std::make_shared<const BackProjector>(cfg_.grid, cfg_.geom);
}

FnoBpModel::FnoBpModel(std::shared_ptr<const Pipeline> pipeline, FnoParams fno)
    : pipeline_(std::move(pipeline)), fno_(std::move(fno)) {
  if (!pipeline_) throw std::invalid_argument("FnoBpModel: null pipeline");
  const auto& geom = pipeline_->config().geom;
  if (fno_.dims().angles != geom.angle_count())
    throw std::invalid_argument("FnoBpModel: fno expects " + std::to_string(fno_.dims().angles) +
                                " angles, geometry has " + std::to_string(geom.angle_count()));
  fno_.dims().check_bins(geom.bin_count);
}

namespace {

void check_input(const Sinogram& g, const Pipeline& p) {
  if (!(g.geom == p.config().geom))
    throw std::invalid_argument("reconstruct: sinogram geometry differs from the model geometry");
}

Image relu(Image img) {
  for (double& v : img.values) v = v > 0.0 ? v : 0.0;
  return img;
}

// Filtered sinogram handed to the back-projection, plus the FNO tape.
std::pair<Sinogram, Tape> filtered(const PreparedInput& in, const FnoBpModel& m) {
  FnoOutput out = fno_forward(in.fno_input, m.fno());
  Sinogram corr = in.shift != 0 ? roll_rows(out.correction, -in.shift) : std::move(out.correction);
  for (std::size_t k = 0; k < corr.values.size(); ++k) corr.values[k] += in.ramp.values[k];
  return {std::move(corr), std::move(out.tape)};
}

}  // namespace

PreparedInput prepare(const Sinogram& g_limited, const KnownMask& mask, const Pipeline& p) {
  check_input(g_limited, p);
  PreparedInput in;
  in.full = p.extrapolator().extrapolate(g_limited, mask);
  in.ramp = ram_lak(in.full, p.config().filter);
  for (double& v : in.ramp.values) v *= p.config().filter.fbp_scale;
  in.shift = canonical_wedge_shift(mask, p.config().geom).value_or(0);
  in.fno_input = in.shift != 0 ? roll_rows(in.full, in.shift) : in.full;
  return in;
}

Image reconstruct(const PreparedInput& in, const FnoBpModel& m) {
  return relu(m.pipeline().projector().apply(filtered(in, m).first));
}

Image reconstruct(const Sinogram& g_limited, const KnownMask& mask, const FnoBpModel& m) {
  return reconstruct(prepare(g_limited, mask, m.pipeline()), m);
}

Image reconstruct_fbp(const Sinogram& g_limited, const Pipeline& p) {
  check_input(g_limited, p);
  return fbp(g_limited, p.config().grid, p.config().filter);
}

Image reconstruct_fbp_range(const Sinogram& g_limited, const KnownMask& mask, const Pipeline& p) {
  check_input(g_limited, p);
  return fbp(p.extrapolator().extrapolate(g_limited, mask), p.config().grid, p.config().filter);
}

double loss(const Image& pred, const Image& target) {
  check_same_shape(pred, target, "loss");
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.values.size(); ++k) {
    const double d = pred.values[k] - target.values[k];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.values.size());
}

LossGradient loss_gradient(const PreparedInput& in, const Image& target, const FnoBpModel& m) {
  auto [f, tape] = filtered(in, m);
  const Image pre = m.pipeline().projector().apply(f);
  check_same_shape(pre, target, "loss_gradient");

  const double n = static_cast<double>(pre.values.size());
  LossGradient out;
  Image upstream = Image::zeros(pre.grid);
  for (std::size_t k = 0; k < pre.values.size(); ++k) {
    const double pred = pre.values[k] > 0.0 ? pre.values[k] : 0.0;
    const double d = pred - target.values[k];
    out.loss += d * d;
    upstream.values[k] = pre.values[k] > 0.0 ? 2.0 * d / n : 0.0;
  }
  out.loss /= n;

  Sinogram gf = m.pipeline().projector().apply_transpose(upstream);
  if (in.shift != 0) gf = roll_rows(gf, in.shift);
  out.grads = fno_backward(tape, gf, m.fno()).params;
  return out;
}

LossGradient loss_gradient(const Sinogram& g_limited, const KnownMask& mask, const Image& target,
                           const FnoBpModel& m) {
  return loss_gradient(prepare(g_limited, mask, m.pipeline()), target, m);
}

void save_model(const FnoBpModel& m, const std::filesystem::path& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  save_params(m.fno(), dir / "fno", seed);
  nlohmann::json j = {{"format", "ctkit-model"}, {"version", 1}, {"pipeline", to_json(m.config())},
                      {"fno", "fno"}};
  std::ofstream os(dir / "model.json");
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("save_model: cannot write " + (dir / "model.json").string());
}

FnoBpModel load_model(const std::filesystem::path& dir) {
  std::ifstream is(dir / "model.json");
  if (!is) throw std::runtime_error("load_model: missing " + (dir / "model.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_model: malformed model.json: " + std::string(e.what()));
  }
  if (j.value("format", "") != "ctkit-model") throw std::runtime_error("load_model: not a model bundle");
  auto pipeline = std::make_shared<const Pipeline>(pipeline_config_from_json(j.at("pipeline")));
  return FnoBpModel(std::move(pipeline), load_params(dir / j.value("fno", "fno")));
}

}  // namespace ctkit
