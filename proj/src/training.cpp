#include "ctkit/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ctkit/raster.hpp"

namespace ctkit {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("training: learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("training: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("training: beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("training: epsilon must be positive");
  if (batch_size == 0) throw std::invalid_argument("training: batch_size must be positive");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},           {"learning_rate", cfg.learning_rate},
          {"beta1", cfg.beta1},             {"beta2", cfg.beta2},
          {"epsilon", cfg.epsilon},         {"batch_size", cfg.batch_size},
          {"shuffle_seed", cfg.shuffle_seed}, {"checkpoint_every", cfg.checkpoint_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.shuffle_seed = j.value("shuffle_seed", cfg.shuffle_seed);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  cfg.validate();
  return cfg;
}

void adam_step(std::vector<double>& params, AdamState& state, const std::vector<double>& grads,
               const TrainConfig& cfg) {
  if (grads.size() != params.size())
    throw std::invalid_argument("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(params.size()) + " parameters");
  for (std::size_t k = 0; k < grads.size(); ++k)
    if (!std::isfinite(grads[k]))
      throw std::domain_error("adam_step: non-finite gradient at parameter " + std::to_string(k) +
                              " (step " + std::to_string(state.step + 1) + ")");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grads[k];
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * grads[k] * grads[k];
    const double mhat = state.m[k] / c1;
    const double vhat = state.v[k] / c2;
    params[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

std::vector<TrainingExample> prepare_examples(const std::vector<Sample>& samples, const Pipeline& p) {
  std::vector<TrainingExample> out(samples.size());
  const auto n = static_cast<long>(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const Sample& s = samples[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = {prepare(s.sinogram, s.mask, p), s.image};
  }
  return out;
}

std::vector<TrainingExample> load_training_set(const std::filesystem::path& dir, const Pipeline& p) {
  const DatasetManifest m = read_dataset_manifest(dir);
  if (!(m.geom == p.config().geom))
    throw std::invalid_argument("training: dataset geometry differs from the model geometry");
  if (!(m.grid == p.config().grid))
    throw std::invalid_argument("training: dataset grid differs from the model grid");
  std::vector<Sample> samples;
  samples.reserve(m.entries.size());
  for (const auto& e : m.entries) samples.push_back(load_sample(dir, e));
  return prepare_examples(samples, p);
}

double mean_loss(const std::vector<TrainingExample>& data, const FnoBpModel& m) {
  if (data.empty()) return 0.0;
  std::vector<double> losses(data.size());
  const auto n = static_cast<long>(data.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto& ex = data[static_cast<std::size_t>(i)];
    losses[static_cast<std::size_t>(i)] = loss(reconstruct(ex.input, m), ex.target);
  }
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(data.size());
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

TrainState train(const std::vector<TrainingExample>& data, FnoBpModel& model, const TrainConfig& cfg,
                 std::optional<TrainState> resume, const TrainHooks& hooks) {
  cfg.validate();
  TrainState state;
  if (resume) {
    state = std::move(*resume);
  } else {
    state.initial_loss = mean_loss(data, model);
    if (hooks.log) *hooks.log << "epoch 0 mean loss " << state.initial_loss << '\n';
  }
  auto& params = model.fno().data();
  const std::size_t P = params.size();

  for (std::size_t epoch = state.epochs_done + 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = epoch_order(data.size(), cfg.shuffle_seed, epoch);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      std::vector<LossGradient> parts(count);
      const auto nb = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic)
      for (long b = 0; b < nb; ++b) {
        const auto& ex = data[order[start + static_cast<std::size_t>(b)]];
        parts[static_cast<std::size_t>(b)] = loss_gradient(ex.input, ex.target, model);
      }
      // Fixed summation order keeps the update independent of thread count.
      std::vector<double> grads(P, 0.0);
      double batch_loss = 0.0;
      for (const auto& part : parts) {
        for (std::size_t k = 0; k < P; ++k) grads[k] += part.grads[k];
        batch_loss += part.loss;
      }
      const double inv = 1.0 / static_cast<double>(count);
      for (double& g : grads) g *= inv;
      adam_step(params, state.adam, grads, cfg);
      epoch_sum += batch_loss;
      state.history.push_back({state.adam.step, epoch, batch_loss * inv});
    }
    state.epoch_losses.push_back(data.empty() ? 0.0 : epoch_sum / static_cast<double>(data.size()));
    state.epochs_done = epoch;
    if (hooks.log) *hooks.log << "epoch " << epoch << " mean loss " << state.epoch_losses.back() << '\n';
    const bool cadence = cfg.checkpoint_every != 0 && epoch % cfg.checkpoint_every == 0;
    if (hooks.checkpoint && (cadence || epoch == cfg.epochs)) hooks.checkpoint(model, state, cfg);
  }
  if (hooks.checkpoint && state.epochs_done >= cfg.epochs && cfg.epochs == 0)
    hooks.checkpoint(model, state, cfg);
  return state;
}

void save_checkpoint(const std::filesystem::path& dir, const FnoBpModel& m, const TrainState& s,
                     const TrainConfig& cfg) {
  save_model(m, dir);
  const std::size_t P = m.fno().size();
  std::vector<double> moments(2 * P, 0.0);
  if (!s.adam.m.empty()) {
    std::copy(s.adam.m.begin(), s.adam.m.end(), moments.begin());
    std::copy(s.adam.v.begin(), s.adam.v.end(), moments.begin() + static_cast<std::ptrdiff_t>(P));
  }
  write_raster(dir / "adam.f64", Raster::from_f64({2, P}, moments, {{"kind", "adam-moments"}}));
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : s.history) hist.push_back({r.step, r.epoch, r.loss});
  nlohmann::json j = {{"format", "ctkit-train-state"},
                      {"version", 1},
                      {"step", s.adam.step},
                      {"moments_initialized", !s.adam.m.empty()},
                      {"epochs_done", s.epochs_done},
                      {"initial_loss", s.initial_loss},
                      {"epoch_losses", s.epoch_losses},
                      {"history", hist},
                      {"config", to_json(cfg)}};
  std::ofstream os(dir / "state.json");
  os << j.dump(1) << '\n';
  if (!os) throw std::runtime_error("save_checkpoint: cannot write " + (dir / "state.json").string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "state.json");
  if (!is) throw std::runtime_error("load_checkpoint: missing " + (dir / "state.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: malformed state.json: " + std::string(e.what()));
  }
  FnoBpModel model = load_model(dir);
  TrainState s;
  s.adam.step = j.at("step").get<std::uint64_t>();
  s.epochs_done = j.at("epochs_done").get<std::size_t>();
  s.initial_loss = j.at("initial_loss").get<double>();
  s.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
  for (const auto& r : j.at("history"))
    s.history.push_back({r.at(0).get<std::uint64_t>(), r.at(1).get<std::size_t>(), r.at(2).get<double>()});
  if (j.value("moments_initialized", false)) {
    const auto moments = read_raster(dir / "adam.f64").to_f64();
    const std::size_t P = model.fno().size();
    if (moments.size() != 2 * P) throw std::runtime_error("load_checkpoint: adam moments have wrong size");
    s.adam.m.assign(moments.begin(), moments.begin() + static_cast<std::ptrdiff_t>(P));
    s.adam.v.assign(moments.begin() + static_cast<std::ptrdiff_t>(P), moments.end());
  }
  return {std::move(model), std::move(s), train_config_from_json(j.at("config"))};
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_loss_csv: cannot write " + path.string());
  os << "step,epoch,loss\n";
  char buf[64];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    os << r.step << ',' << r.epoch << ',' << buf << '\n';
  }
}

}  // namespace ctkit
