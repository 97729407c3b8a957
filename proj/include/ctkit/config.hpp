#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ctkit/fno.hpp"
#include "ctkit/model.hpp"
#include "ctkit/phantoms.hpp"
#include "ctkit/training.hpp"

namespace ctkit {

inline constexpr int kRunConfigVersion = 1;

/// Invalid configuration; the message names the offending field.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  PipelineConfig pipeline;
  FnoDims fno;              // angles follow the geometry
  std::uint64_t fno_seed = 1;
  TrainConfig training;
  PhantomSpec phantoms;
};

/**
 * Desk-scale preset: 128 x 128 grid over [-1, 1]^2, R = 5, 128 bins over an
 * extent of 2, 180 angles, N = 50 Chebyshev basis, C = 60 and M = 65, Adam at
 * lr 3e-3 for 10 epochs. The gram cache directory comes from CTKIT_CACHE_DIR
 * when set.
 */
RunConfig default_run_config();

nlohmann::json to_json(const RunConfig& cfg);

/// Fields absent from `j` keep the preset value. Unknown fields, wrong types
/// and out-of-range values throw ConfigError naming the field.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace ctkit
