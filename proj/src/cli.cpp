#include "ctkit/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "ctkit/config.hpp"
#include "ctkit/evaluation.hpp"
#include "ctkit/raster.hpp"
#include "ctkit/training.hpp"

namespace ctkit {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  int threads = 0;
  bool deterministic = false;

  // generate
  std::size_t count = 0;
  double span = 90.0;
  std::string out;

  // train
  std::string data;
  std::string resume;
  std::size_t epochs = 0;
  double lr = 0.0;

  // reconstruct
  std::string method;
  std::string sino;
  std::string mask;
  std::string ckpt;
  std::string png;

  // evaluate
  std::string methods;
  std::string spans;
  std::string ckpt_dir;
  std::string report;
  std::string png_dir;
  std::size_t png_samples = 3;
};

RunConfig base_config(const Options& o) {
  return o.config.empty() ? default_run_config() : load_run_config(o.config);
}

// Adopts the dataset's geometry and grid (modes capped to the bins) when no
// config file was given; otherwise they must agree.
RunConfig config_for_dataset(const Options& o, const DatasetManifest& m) {
  RunConfig cfg = base_config(o);
  if (o.config.empty()) {
    cfg.pipeline.geom = m.geom;
    cfg.pipeline.grid = m.grid;
    cfg.fno.angles = m.geom.angle_count();
    cfg.fno.modes = std::min(cfg.fno.modes, m.geom.bin_count / 2 + 1);
    cfg.fno.check_bins(m.geom.bin_count);
  } else if (!(cfg.pipeline.geom == m.geom) || !(cfg.pipeline.grid == m.grid)) {
    throw std::runtime_error("dataset " + o.data + " was generated with a different geometry or grid than " +
                             o.config);
  }
  return cfg;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_spans(const std::string& s) {
  if (s.empty()) return default_spans();
  std::vector<double> out;
  for (const auto& item : split(s)) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !(v > 0.0 && v <= 360.0)) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("--spans: '" + item + "' is not an angle in (0, 360] degrees");
    }
  }
  if (out.empty()) throw UsageError("--spans: no spans given");
  return out;
}

std::vector<Method> parse_methods(const std::string& s) {
  std::vector<Method> out;
  for (const auto& item : split(s)) {
    try {
      out.push_back(parse_method(item));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (out.empty()) throw UsageError("--methods: no methods given (valid: fbp, fbp-range, fnobp)");
  return out;
}

std::string format_span(double span) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", span);
  return buf;
}

// A model bundle directory, or a training output containing final/.
fs::path resolve_bundle(const fs::path& dir) {
  if (fs::exists(dir / "model.json")) return dir;
  if (fs::exists(dir / "final" / "model.json")) return dir / "final";
  throw std::runtime_error("no model bundle in " + dir.string());
}

int cmd_generate(const Options& o, std::ostream& out) {
  if (o.count > 0 && o.out == "-") throw UsageError("generate: --out must be a directory");
  const RunConfig cfg = base_config(o);
  const DatasetManifest m = generate_dataset(cfg.phantoms, o.count, cfg.pipeline.geom, cfg.pipeline.grid, o.span, o.out);
  out << "wrote " << m.entries.size() << " samples (span " << o.span << " deg) to " << o.out << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  if (!fs::exists(fs::path(o.data) / "manifest.json"))
    throw std::runtime_error("train: no dataset manifest in " + o.data);
  const DatasetManifest manifest = read_dataset_manifest(o.data);

  std::optional<Checkpoint> resumed;
  std::unique_ptr<FnoBpModel> model;
  TrainConfig tcfg;
  if (!o.resume.empty()) {
    resumed = load_checkpoint(o.resume);
    tcfg = resumed->config;
    model = std::make_unique<FnoBpModel>(std::move(resumed->model));
    if (!(model->config().geom == manifest.geom) || !(model->config().grid == manifest.grid))
      throw std::runtime_error("train: checkpoint geometry differs from the dataset geometry");
  } else {
    const RunConfig cfg = config_for_dataset(o, manifest);
    tcfg = cfg.training;
    auto pipeline = std::make_shared<const Pipeline>(cfg.pipeline);
    FnoDims dims = cfg.fno;
    dims.angles = cfg.pipeline.geom.angle_count();
    model = std::make_unique<FnoBpModel>(pipeline, init_params(cfg.fno_seed, dims, cfg.pipeline.geom.bin_count));
  }
  if (o.epochs > 0) tcfg.epochs = o.epochs;
  if (o.lr > 0.0) tcfg.learning_rate = o.lr;
  tcfg.validate();

  const auto data = load_training_set(o.data, model->pipeline());
  const fs::path outdir(o.out);
  fs::create_directories(outdir);
  TrainHooks hooks;
  hooks.log = &out;
  hooks.checkpoint = [&](const FnoBpModel& m, const TrainState& s, const TrainConfig& c) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch-%04zu", s.epochs_done);
    save_checkpoint(outdir / name, m, s, c);
  };
  std::optional<TrainState> resume_state;
  if (resumed) resume_state = std::move(resumed->state);
  const TrainState state = train(data, *model, tcfg, std::move(resume_state), hooks);
  save_checkpoint(outdir / "final", *model, state, tcfg);
  write_loss_csv(outdir / "loss.csv", state.history);
  out << "trained " << state.epochs_done << " epochs on " << data.size() << " samples; checkpoint "
      << (outdir / "final").string() << '\n';
  return kExitOk;
}

int cmd_reconstruct(const Options& o, std::ostream& out) {
  const Method method = [&] {
    try {
      return parse_method(o.method);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }();
  if (method == Method::fnobp && o.ckpt.empty()) throw UsageError("reconstruct: fnobp needs --ckpt");
  if (method != Method::fbp && o.mask.empty())
    throw UsageError(std::string("reconstruct: ") + method_name(method) + " needs --mask");

  const Sinogram g = sinogram_from_raster(read_raster(fs::path(o.sino)));
  std::optional<KnownMask> mask;
  if (!o.mask.empty()) {
    mask = mask_from_raster(read_raster(fs::path(o.mask)));
    mask->validate(g.rows(), g.cols());
  }

  std::unique_ptr<FnoBpModel> model;
  std::shared_ptr<const Pipeline> pipeline;
  if (!o.ckpt.empty()) {
    model = std::make_unique<FnoBpModel>(load_model(resolve_bundle(o.ckpt)));
    pipeline = model->shared_pipeline();
  } else {
    RunConfig cfg = base_config(o);
    cfg.pipeline.geom = g.geom;
    pipeline = std::make_shared<const Pipeline>(cfg.pipeline);
  }
  const KnownMask m = mask ? *mask : KnownMask::all(g.rows(), g.cols());
  const Image img = reconstruct_method(method, g, m, *pipeline, model.get());

  if (o.out == "-") {
    write_raster(out, to_raster(img));
  } else {
    write_raster(fs::path(o.out), to_raster(img));
  }
  if (!o.png.empty()) write_png(o.png, img);
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const std::vector<Method> methods =
      parse_methods(o.methods.empty() ? (o.ckpt_dir.empty() ? "fbp,fbp-range" : "fbp,fbp-range,fnobp") : o.methods);
  const std::vector<double> spans = parse_spans(o.spans);
  const bool wants_fno = std::find(methods.begin(), methods.end(), Method::fnobp) != methods.end();
  if (wants_fno && o.ckpt_dir.empty()) throw UsageError("evaluate: fnobp needs --ckpt-dir");

  if (!fs::exists(fs::path(o.data) / "manifest.json"))
    throw std::runtime_error("evaluate: no dataset manifest in " + o.data);
  const DatasetManifest manifest = read_dataset_manifest(o.data);
  const RunConfig cfg = config_for_dataset(o, manifest);
  const auto pipeline = std::make_shared<const Pipeline>(cfg.pipeline);
  std::vector<Sample> test;
  for (const auto& e : manifest.entries) {
    test.push_back(load_sample(o.data, e));
    if (test.back().full.values.empty())
      throw std::runtime_error("evaluate: sample " + e.stem + " has no full-orbit sinogram");
  }

  // span-<deg>/ subdirectories hold per-span models; otherwise one model serves all spans.
  std::map<std::string, std::unique_ptr<FnoBpModel>> models;
  ModelLookup lookup = [&](double span) -> const FnoBpModel* {
    const fs::path root(o.ckpt_dir);
    const fs::path per_span = root / ("span-" + format_span(span));
    const fs::path dir = fs::exists(per_span) ? resolve_bundle(per_span) : resolve_bundle(root);
    auto& slot = models[dir.string()];
    if (!slot) {
      slot = std::make_unique<FnoBpModel>(load_model(dir));
      if (!(slot->config().geom == manifest.geom) || !(slot->config().grid == manifest.grid))
        throw std::runtime_error("evaluate: model " + dir.string() + " was trained for another geometry");
    }
    return slot.get();
  };
  if (wants_fno)
    for (double s : spans) lookup(s);

  const ScoreReport report = evaluate(methods, test, spans, *pipeline, lookup);
  write_report_table(out, report);
  if (!o.report.empty()) {
    std::ofstream os(o.report);
    if (!os) throw std::runtime_error("evaluate: cannot write " + o.report);
    write_report_csv(os, report);
  }
  if (!o.png_dir.empty()) {
    fs::create_directories(o.png_dir);
    for (std::size_t i = 0; i < std::min(o.png_samples, test.size()); ++i) {
      std::vector<std::vector<Image>> rows;
      for (Method method : methods) {
        std::vector<Image> row;
        for (double span : spans) {
          const auto [g, mask] = limit_arc(test[i], span * kPi / 180.0);
          Image img = reconstruct_method(method, g, mask, *pipeline, method == Method::fnobp ? lookup(span) : nullptr);
          for (double& v : img.values) v = std::max(v, 0.0);
          row.push_back(std::move(img));
        }
        rows.push_back(std::move(row));
      }
      rows.push_back({test[i].image});
      write_png_grid(fs::path(o.png_dir) / (manifest.entries[i].stem + ".png"), rows);
    }
  }
  return kExitOk;
}

int cmd_config(const Options& o, std::ostream& out) {
  const RunConfig cfg = base_config(o);
  out << to_json(cfg).dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"ctkit: fan-beam CT reconstruction with FBP, range-condition extrapolation and FNO-BP"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", o.config, "run configuration JSON (default: desk preset)");
  app.add_option("--threads", o.threads, "worker threads (default: all)")->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", o.deterministic, "single worker, bitwise reproducible output");

  auto* gen = app.add_subcommand("generate", "write a synthetic phantom dataset");
  gen->add_option("--count", o.count, "number of samples")->required();
  gen->add_option("--span", o.span, "measured arc in degrees")->check(CLI::Range(0.0, 360.0));
  gen->add_option("--out", o.out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train the FNO-BP correction on a dataset");
  tr->add_option("--data", o.data, "dataset directory")->required();
  tr->add_option("--out", o.out, "checkpoint directory")->required();
  tr->add_option("--epochs", o.epochs, "override training.epochs");
  tr->add_option("--lr", o.lr, "override training.learning_rate")->check(CLI::PositiveNumber);
  tr->add_option("--resume", o.resume, "continue from a checkpoint directory");

  auto* rec = app.add_subcommand("reconstruct", "reconstruct one sinogram");
  rec->add_option("--method", o.method, "fbp, fbp-range or fnobp")->required();
  rec->add_option("--sino", o.sino, "sinogram raster")->required();
  rec->add_option("--mask", o.mask, "known-bin mask raster");
  rec->add_option("--ckpt", o.ckpt, "model bundle or training output directory");
  rec->add_option("--out", o.out, "image raster path, '-' for standard output")->required();
  rec->add_option("--png", o.png, "also write an 8-bit PNG preview");

  auto* ev = app.add_subcommand("evaluate", "score methods over arc spans");
  ev->add_option("--data", o.data, "dataset directory (needs full-orbit sinograms)")->required();
  ev->add_option("--methods", o.methods, "comma list of fbp, fbp-range, fnobp");
  ev->add_option("--spans", o.spans, "comma list of spans in degrees (default 90,80,...,30)");
  ev->add_option("--ckpt-dir", o.ckpt_dir, "model bundle, or directory with span-<deg>/ bundles");
  ev->add_option("--report", o.report, "CSV report path");
  ev->add_option("--png-dir", o.png_dir, "write method x span image grids for the first samples");
  ev->add_option("--png-samples", o.png_samples, "number of samples dumped with --png-dir");

  auto* cfgcmd = app.add_subcommand("config", "print the effective configuration as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (o.deterministic) {
    omp_set_num_threads(1);
  } else if (o.threads > 0) {
    omp_set_num_threads(o.threads);
  }

  try {
    if (gen->parsed()) return cmd_generate(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (rec->parsed()) return cmd_reconstruct(o, out);
    if (ev->parsed()) return cmd_evaluate(o, out);
    if (cfgcmd->parsed()) return cmd_config(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ctkit
