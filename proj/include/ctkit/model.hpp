#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "ctkit/arrays.hpp"
#include "ctkit/extrapolation.hpp"
#include "ctkit/filtering.hpp"
#include "ctkit/fno.hpp"
#include "ctkit/projector.hpp"

namespace ctkit {

/// Everything except the trainable weights.
struct PipelineConfig {
  FanGeometry geom;  // full-orbit geometry; limited data are masked rows of it
  ImageGrid grid;
  BasisSpec basis;
  double lambda_scale = 1e-3;
  FilterSpec filter;
  std::optional<std::filesystem::path> gram_cache_dir;  // nullopt: memory only
};

nlohmann::json to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

/// Shared, read-only operators of one pipeline configuration.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  const PipelineConfig& config() const { return cfg_; }
  const Extrapolator& extrapolator() const { return *extrapolator_; }
  const BackProjector& projector() const { return *projector_; }

 private:
  PipelineConfig cfg_;
  std::shared_ptr<const Extrapolator> extrapolator_;
  std::shared_ptr<const BackProjector> projector_;
};

/**
 * FNO-BP: extrapolate the measured wedge, add the FNO correction to the
 * scaled Ram-Lak filtered sinogram, back-project once, ReLU.
 *
 * The FNO sees its input with rows rotated so that a contiguous measured arc
 * starts at row 0 (and the correction rotated back), so that each channel
 * keeps a fixed position relative to the arc regardless of where it starts.
 */
class FnoBpModel {
 public:
  FnoBpModel(std::shared_ptr<const Pipeline> pipeline, FnoParams fno);

  const Pipeline& pipeline() const { return *pipeline_; }
  std::shared_ptr<const Pipeline> shared_pipeline() const { return pipeline_; }
  const PipelineConfig& config() const { return pipeline_->config(); }
  const FnoParams& fno() const { return fno_; }
  FnoParams& fno() { return fno_; }

 private:
  std::shared_ptr<const Pipeline> pipeline_;
  FnoParams fno_;
};

/// Parameter-independent part of the forward pass, reusable across steps.
struct PreparedInput {
  Sinogram full;      // extrapolated, original row order
  Sinogram ramp;      // fbp_scale * ram_lak(full)
  Sinogram fno_input; // `full` with the measured arc rotated to row 0
  std::ptrdiff_t shift = 0;
};

PreparedInput prepare(const Sinogram& g_limited, const KnownMask& mask, const Pipeline& p);

Image reconstruct(const Sinogram& g_limited, const KnownMask& mask, const FnoBpModel& m);
Image reconstruct(const PreparedInput& in, const FnoBpModel& m);

/// Baselines sharing the pipeline's operators.
Image reconstruct_fbp(const Sinogram& g_limited, const Pipeline& p);
Image reconstruct_fbp_range(const Sinogram& g_limited, const KnownMask& mask, const Pipeline& p);

/// Mean squared error over all pixels.
double loss(const Image& pred, const Image& target);

struct LossGradient {
  double loss = 0.0;
  std::vector<double> grads;  // FnoParams layout
};

/// MSE adjoint, ReLU mask (subgradient 0 at 0), back-projection transpose,
/// FNO backward. The extrapolation branch carries no parameters.
LossGradient loss_gradient(const Sinogram& g_limited, const KnownMask& mask, const Image& target,
                           const FnoBpModel& m);
LossGradient loss_gradient(const PreparedInput& in, const Image& target, const FnoBpModel& m);

/// Bundle directory: model.json (pipeline config) plus fno/ checkpoint.
void save_model(const FnoBpModel& m, const std::filesystem::path& dir, std::uint64_t seed = 0);
FnoBpModel load_model(const std::filesystem::path& dir);

}  // namespace ctkit
