#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "ctkit/model.hpp"
#include "ctkit/phantoms.hpp"

namespace ctkit {

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 8;
  std::uint64_t shuffle_seed = 0;
  std::size_t checkpoint_every = 1;  // epochs; 0 keeps only the final checkpoint

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update in place. Throws std::domain_error naming the
/// first non-finite gradient entry; nothing is modified in that case.
void adam_step(std::vector<double>& params, AdamState& state, const std::vector<double>& grads,
               const TrainConfig& cfg);

struct LossRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;  // 1-based training epoch
  double loss = 0.0;      // batch mean
};

struct TrainState {
  AdamState adam;
  std::size_t epochs_done = 0;
  double initial_loss = 0.0;           // dataset mean before any update
  std::vector<double> epoch_losses;    // per-sample mean over each epoch
  std::vector<LossRecord> history;
};

/// One training example with its parameter-independent preprocessing.
struct TrainingExample {
  PreparedInput input;
  Image target;
};

std::vector<TrainingExample> prepare_examples(const std::vector<Sample>& samples, const Pipeline& p);

/// Loads every sample of a dataset directory; throws std::invalid_argument
/// when its geometry or grid differ from the pipeline's.
std::vector<TrainingExample> load_training_set(const std::filesystem::path& dir, const Pipeline& p);

/// Mean loss over the examples at the current parameters.
double mean_loss(const std::vector<TrainingExample>& data, const FnoBpModel& m);

struct TrainHooks {
  /// Called after every epoch that hits the checkpoint cadence and after the
  /// last epoch.
  std::function<void(const FnoBpModel&, const TrainState&, const TrainConfig&)> checkpoint;
  std::ostream* log = nullptr;  // per-epoch summary lines
};

/**
 * Epoch-shuffled minibatch Adam on the FNO parameters. The permutation of
 * epoch e depends only on (shuffle_seed, e), and per-sample gradients are
 * summed in batch order, so a run resumed from `state` continues exactly as
 * the uninterrupted run would.
 */
TrainState train(const std::vector<TrainingExample>& data, FnoBpModel& model, const TrainConfig& cfg,
                 std::optional<TrainState> resume = std::nullopt, const TrainHooks& hooks = {});

/// Checkpoint directory: model bundle, adam.f64 moments and state.json.
void save_checkpoint(const std::filesystem::path& dir, const FnoBpModel& m, const TrainState& s,
                     const TrainConfig& cfg);
struct Checkpoint {
  FnoBpModel model;
  TrainState state;
  TrainConfig config;
};
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// `step,epoch,loss` rows.
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

}  // namespace ctkit
