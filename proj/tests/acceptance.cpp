// Acceptance runs: one PASS/FAIL line per criterion. `acceptance <name>` runs
// one criterion, no argument runs all. Exit status is nonzero on any FAIL.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "ctkit/config.hpp"
#include "ctkit/evaluation.hpp"
#include "ctkit/training.hpp"
#include "support.hpp"

using namespace ctkit;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Desk geometry used throughout: 128 x 128 grid, 128 bins, 180 angles.
RunConfig desk() { return default_run_config(); }

Sinogram masked(const Sinogram& g, const KnownMask& m) {
  Sinogram out = g;
  for (std::size_t k = 0; k < out.values.size(); ++k)
    if (!m.known[k]) out.values[k] = 0.0;
  return out;
}

Outcome adjoint() {
  const auto grid = testing::unit_grid(64);
  const auto geom = testing::orbit(96, 90, grid);
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto g = testing::random_sinogram(geom, 2 * k + 1);
    const auto x = testing::random_image(grid, 2 * k + 2);
    const double lhs = dot(back_project(g, grid).values, x.values);
    const double rhs = dot(g.values, back_project_transpose(x, geom).values);
    worst = std::max(worst, testing::rel_diff(lhs, rhs));
  }
  return {worst < 1e-10, "worst relative mismatch " + fmt("%.2e", worst) + " over 20 pairs (limit 1e-10)"};
}

Outcome roundtrip() {
  const double R = 5.0;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> theta(-kPi, kPi), s(-0.99 * R, 0.99 * R), beta(-kPi, kPi),
      u(-20.0, 20.0);
  auto wrap = [](double a) { return std::remainder(a, kTwoPi); };
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const ParallelCoords p{theta(rng), s(rng)};
    const auto pb = fan_to_parallel(parallel_to_fan(p, R), R);
    worst = std::max({worst, std::abs(wrap(pb.theta - p.theta)), std::abs(pb.s - p.s) / std::max(1.0, std::abs(p.s))});
    const FanCoords q{beta(rng), u(rng)};
    const auto qb = parallel_to_fan(fan_to_parallel(q, R), R);
    worst = std::max({worst, std::abs(wrap(qb.beta - q.beta)), std::abs(qb.u - q.u) / std::max(1.0, std::abs(q.u))});
  }
  return {worst <= 1e-12, "worst deviation " + fmt("%.2e", worst) + " over 2 x 10^4 maps (limit 1e-12)"};
}

Outcome basis_count() {
  const BasisSpec spec{50, PolynomialFamily::chebyshev2};
  const auto cfg = desk();
  const BasisOperator op(cfg.pipeline.geom, spec);
  // a tiny mask keeps this instant; the Gram size does not depend on it
  auto mask = KnownMask::all(cfg.pipeline.geom.angle_count(), cfg.pipeline.geom.bin_count, false);
  mask.known[0] = 1;
  const auto gram = compute_gram(mask, op);
  const bool ok = spec.coefficient_count() == 650 && gram.size() == 650 && gram.gram.cols() == 650;
  return {ok, "gram is " + std::to_string(gram.gram.rows()) + " x " + std::to_string(gram.gram.cols())};
}

Outcome range_diagnostics() {
  const auto cfg = desk();
  const auto& geom = cfg.pipeline.geom;
  const BasisOperator op(geom, BasisSpec{50, PolynomialFamily::chebyshev2});
  double worst_phantom = 0.0, best_noise = 1e9;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto ph = generate_phantom(PhantomSpec{}, seed, cfg.pipeline.grid, geom.fov_radius);
    worst_phantom = std::max(worst_phantom, range_residual(forward_project(ph.image, geom), op).back());
    best_noise = std::min(best_noise, range_residual(testing::random_sinogram(geom, 100 + seed), op).back());
  }
  return {worst_phantom < 0.05 && best_noise > 0.5,
          "r49 phantom max " + fmt("%.4f", worst_phantom) + " (< 0.05), white noise min " + fmt("%.4f", best_noise) +
              " (> 0.5), 5 each"};
}

Outcome extrapolation_benefit() {
  const auto cfg = desk();
  const auto& geom = cfg.pipeline.geom;
  const Extrapolator ex(geom, cfg.pipeline.basis, cfg.pipeline.lambda_scale, cfg.pipeline.gram_cache_dir);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> start(0.0, kTwoPi);
  double fill_sum = 0.0, zero_sum = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto ph = generate_phantom(PhantomSpec{}, sample_seed(PhantomSpec{}, k), cfg.pipeline.grid, geom.fov_radius);
    const auto full = forward_project(ph.image, geom);
    // measured 270 degrees, hidden 90 degree wedge
    const auto mask = KnownMask::wedge(geom, start(rng), 1.5 * kPi);
    const auto filled = ex.extrapolate(masked(full, mask), mask);
    double fill = 0.0, zero = 0.0;
    for (std::size_t i = 0; i < full.values.size(); ++i) {
      if (mask.known[i]) continue;
      fill += (filled.values[i] - full.values[i]) * (filled.values[i] - full.values[i]);
      zero += full.values[i] * full.values[i];
    }
    fill_sum += std::sqrt(fill);
    zero_sum += std::sqrt(zero);
  }
  const double ratio = fill_sum / zero_sum;
  return {ratio <= 0.5, "mean filled-wedge L2 error / zero-fill error = " + fmt("%.4f", ratio) + " (limit 0.5)"};
}

Outcome exact_recovery() {
  const auto cfg = desk();
  const BasisSpec spec{50, PolynomialFamily::chebyshev2};
  const BasisOperator op(cfg.pipeline.geom, spec);
  const auto mask = KnownMask::all(cfg.pipeline.geom.angle_count(), cfg.pipeline.geom.bin_count);
  const auto gram = compute_gram(mask, op);
  const auto idx = basis_indices(spec);
  const auto re = testing::random_values(idx.size(), 5), im = testing::random_values(idx.size(), 6);
  BasisCoefficients truth{std::vector<cplx>(idx.size())};
  // imaginary parts of k = 0 slots never reach a real sinogram
  for (std::size_t p = 0; p < idx.size(); ++p) truth.values[p] = {re[p], idx[p].k == 0 ? 0.0 : im[p]};
  const auto c = fit(op.synthesize(truth), mask, 1e-12, gram, op);
  double num = 0.0, den = 0.0;
  for (std::size_t p = 0; p < idx.size(); ++p) {
    num += std::norm(c.values[p] - truth.values[p]);
    den += std::norm(truth.values[p]);
  }
  const double rel = std::sqrt(num / den);
  return {rel <= 1e-4, "relative coefficient error " + fmt("%.2e", rel) + " at N = 50 (limit 1e-4)"};
}

// Tiny FNO: every tensor against central differences of <correction, upstream>.
double fno_worst(const FnoDims& d, std::string& where) {
  const std::size_t U = 16;
  const auto geom = FanGeometry::full_scan(5.0, U, 2.0, d.angles, 0.9);
  FnoParams p = init_params(3, d, U);
  const auto noise = testing::random_values(p.size(), 4, 0.1);
  for (const auto& t : p.tensors()) {
    for (std::size_t k = 0; k < t.size; ++k) {
      double& w = p.data()[t.offset + k];
      if (t.complex) w *= 3.0;
      if (t.name.find("bias") != std::string::npos) w = noise[t.offset + k];
    }
  }
  for (std::size_t k : p.inert_slots(U)) p.data()[k] = 0.0;
  const auto g = testing::random_sinogram(geom, 5), up = testing::random_sinogram(geom, 6);
  const auto grads = fno_backward(fno_forward(g, p).tape, up, p);
  auto objective = [&] { return dot(fno_forward(g, p).correction.values, up.values); };
  const auto inert = p.inert_slots(U);
  const std::set<std::size_t> inert_set(inert.begin(), inert.end());
  const double h = 1e-5;
  double worst = 0.0;
  for (const auto& t : p.tensors()) {
    for (std::size_t k = t.offset; k < t.offset + t.size; ++k) {
      if (inert_set.count(k)) {
        if (grads.params[k] != 0.0) return 1.0;
        continue;
      }
      const double keep = p.data()[k];
      p.data()[k] = keep + h;
      const double fp = objective();
      p.data()[k] = keep - h;
      const double fm = objective();
      p.data()[k] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double err = std::abs(fd - grads.params[k]) / std::max({std::abs(fd), std::abs(grads.params[k]), 1e-6});
      if (err > worst) {
        worst = err;
        where = t.name;
      }
    }
  }
  return worst;
}

// 16 x 16 pipeline: random parameters against central differences of the loss.
double pipeline_worst() {
  PipelineConfig pc;
  pc.grid = testing::unit_grid(16);
  pc.geom = testing::orbit(16, 8, pc.grid);
  pc.basis = BasisSpec{6, PolynomialFamily::chebyshev2};
  auto pipe = std::make_shared<const Pipeline>(pc);
  FnoParams p = init_params(7, FnoDims{8, 3, 4, false}, 16);
  for (const auto& t : p.tensors())
    if (t.complex)
      for (std::size_t k = 0; k < t.size; ++k) p.data()[t.offset + k] *= 30.0;
  FnoBpModel m(pipe, p);
  const auto s = generate_sample(PhantomSpec{}, 8, pc.grid, pc.geom, kPi);
  const auto in = prepare(s.sinogram, s.mask, *pipe);
  const auto lg = loss_gradient(in, s.image, m);
  const auto inert = m.fno().inert_slots(16);
  const std::set<std::size_t> inert_set(inert.begin(), inert.end());
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < m.fno().size(); ++k) {
    if (inert_set.count(k)) continue;
    double& w = m.fno().data()[k];
    const double keep = w;
    w = keep + h;
    const double fp = loss(reconstruct(in, m), s.image);
    w = keep - h;
    const double fm = loss(reconstruct(in, m), s.image);
    w = keep;
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - lg.grads[k]) / std::max({std::abs(fd), std::abs(lg.grads[k]), 1e-8}));
  }
  return worst;
}

Outcome fno_gradients() {
  std::string w1, w2;
  const double a = fno_worst(FnoDims{5, 3, 4, false}, w1);
  const double b = fno_worst(FnoDims{5, 3, 4, true}, w2);
  const double c = pipeline_worst();
  const double tiny = std::max(a, b);
  return {tiny <= 1e-4 && c <= 1e-3, "tiny net worst " + fmt("%.2e", tiny) + " (" + (a >= b ? w1 : w2) +
                                         ", limit 1e-4); 16x16 pipeline worst " + fmt("%.2e", c) + " (limit 1e-3)"};
}

Outcome equivariance() {
  const auto cfg = desk();
  const auto& geom = cfg.pipeline.geom;
  FnoDims d = cfg.fno;
  d.angles = geom.angle_count();
  const auto p = init_params(9, d, geom.bin_count);
  const auto g = testing::random_sinogram(geom, 10);
  const auto y = fno_forward(g, p).correction;
  double worst = 0.0;
  for (std::size_t shift : {1u, 17u, 64u, 127u}) {
    Sinogram gs = g, ys = y;
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) {
        gs.at(i, (j + shift) % g.cols()) = g.at(i, j);
        ys.at(i, (j + shift) % g.cols()) = y.at(i, j);
      }
    worst = std::max(worst, testing::max_abs_diff(fno_forward(gs, p).correction.values, ys.values));
  }
  return {worst < 1e-10, "max abs deviation " + fmt("%.2e", worst) + " over 4 shifts, desk net (limit 1e-10)"};
}

std::vector<Sample> make_samples(const PhantomSpec& spec, std::size_t count, const RunConfig& cfg, double span_deg) {
  std::vector<Sample> out(count);
  const auto n = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = generate_sample(spec, sample_seed(spec, k), cfg.pipeline.grid, cfg.pipeline.geom, span_deg * kPi / 180.0);
  }
  return out;
}

FnoBpModel fresh_model(const RunConfig& cfg) {
  auto pipe = std::make_shared<const Pipeline>(cfg.pipeline);
  FnoDims d = cfg.fno;
  d.angles = cfg.pipeline.geom.angle_count();
  return FnoBpModel(pipe, init_params(cfg.fno_seed, d, cfg.pipeline.geom.bin_count));
}

Outcome training_smoke() {
  auto cfg = desk();
  cfg.training.epochs = 2;
  auto model = fresh_model(cfg);
  const auto data = prepare_examples(make_samples(cfg.phantoms, 100, cfg, 60.0), model.pipeline());
  const auto st = train(data, model, cfg.training);
  const double ratio = st.epoch_losses.back() / st.initial_loss;
  return {ratio <= 0.5, "final/initial mean loss " + fmt("%.3f", ratio) + " (" + fmt("%.3e", st.epoch_losses.back()) +
                            " / " + fmt("%.3e", st.initial_loss) + ", limit 0.5), lr " +
                            fmt("%g", cfg.training.learning_rate)};
}

Outcome method_ordering() {
  auto cfg = desk();
  const double span = 60.0;
  auto model = fresh_model(cfg);
  {
    const auto data = prepare_examples(make_samples(cfg.phantoms, 500, cfg, span), model.pipeline());
    train(data, model, cfg.training);
  }
  PhantomSpec test_spec = cfg.phantoms;
  test_spec.seed = 777;
  const auto test = make_samples(test_spec, 50, cfg, span);
  const ModelLookup lookup = [&](double) -> const FnoBpModel* { return &model; };
  const auto report = evaluate({Method::fnobp, Method::fbp_range, Method::fbp}, test, {span}, model.pipeline(), lookup);
  const double fno = report.find(Method::fnobp, span)->mean;
  const double range = report.find(Method::fbp_range, span)->mean;
  const double fbp = report.find(Method::fbp, span)->mean;
  const bool ok = fno > range && range > fbp && range - fbp >= 0.02;
  return {ok, "mean MCC at 60 deg: fnobp " + fmt("%.3f", fno) + ", fbp-range " + fmt("%.3f", range) + ", fbp " +
                  fmt("%.3f", fbp) + " (need fnobp > fbp-range > fbp, gap >= 0.02)"};
}

double median_seconds(const std::function<void()>& f, int reps) {
  f();  // warm caches
  std::vector<double> t;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    f();
    t.push_back(seconds_since(t0));
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

Outcome runtime_parity() {
  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto cfg = desk();
  const auto model = fresh_model(cfg);
  const auto s = generate_sample(cfg.phantoms, 1, cfg.pipeline.grid, cfg.pipeline.geom, kPi / 3);
  volatile double sink = 0.0;
  const double t_fbp = median_seconds([&] { sink = sink + reconstruct_fbp(s.sinogram, model.pipeline()).values[0]; }, 15);
  const double t_fno = median_seconds([&] { sink = sink + reconstruct(s.sinogram, s.mask, model).values[0]; }, 15);
  omp_set_num_threads(threads);
  const double ratio = t_fno / t_fbp;
  return {ratio <= 3.0, "single thread: fnobp " + fmt("%.1f", 1e3 * t_fno) + " ms, fbp " + fmt("%.1f", 1e3 * t_fbp) +
                            " ms, ratio " + fmt("%.2f", ratio) + " (limit 3)"};
}

Outcome scoring_oracles() {
  std::mt19937_64 rng(31);
  std::size_t mcc_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 50 + rng() % 500;
    const double pa = 0.05 + 0.9 * static_cast<double>(rng() % 1000) / 1000.0;
    const double pb = 0.05 + 0.9 * static_cast<double>(rng() % 1000) / 1000.0;
    std::bernoulli_distribution da(pa), db(pb);
    std::vector<std::uint8_t> a(n), b(n);
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = da(rng);
      b[k] = db(rng);
      tp += a[k] && b[k];
      tn += !a[k] && !b[k];
      fp += a[k] && !b[k];
      fn += !a[k] && b[k];
    }
    const double TP = static_cast<double>(tp), TN = static_cast<double>(tn), FP = static_cast<double>(fp),
                 FN = static_cast<double>(fn);
    const double den = (TP + FP) * (TP + FN) * (TN + FP) * (TN + FN);
    const double ref = den == 0.0 ? 0.0 : (TP * TN - FP * FN) / std::sqrt(den);
    const auto c = confusion(a, b);
    if (c.tp != tp || c.tn != tn || c.fp != fp || c.fn != fn || mcc(a, b) != ref) ++mcc_bad;
  }

  // Otsu against every split of the 256-bin histogram, scored from the pixels.
  std::size_t otsu_bad = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto ph = generate_phantom(PhantomSpec{}, seed, testing::unit_grid(64), 0.95);
    std::vector<double> v = ph.image.values;
    std::normal_distribution<double> noise(0.0, 0.1);
    for (double& x : v) x = std::max(0.0, x + noise(rng));
    const std::size_t bins = 256;
    const double width = *std::max_element(v.begin(), v.end()) / static_cast<double>(bins);
    std::vector<std::size_t> idx(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) idx[k] = std::min(bins - 1, static_cast<std::size_t>(v[k] / width));
    double best = -1.0;
    std::size_t best_t = 0;
    for (std::size_t t = 0; t + 1 < bins; ++t) {
      double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
      for (auto i : idx) {
        (i <= t ? n0 : n1) += 1.0;
        (i <= t ? s0 : s1) += static_cast<double>(i);
      }
      if (n0 == 0 || n1 == 0) continue;
      const double d = s0 / n0 - s1 / n1;
      const double between = n0 * n1 * d * d;
      if (between > best * (1.0 + 1e-12)) {
        best = between;
        best_t = t;
      }
    }
    std::vector<std::uint8_t> expect(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) expect[k] = idx[k] > best_t ? 1 : 0;
    if (otsu(v, bins).mask != expect) ++otsu_bad;
  }
  return {mcc_bad == 0 && otsu_bad == 0, std::to_string(100 - mcc_bad) + "/100 MCC masks exact, " +
                                             std::to_string(10 - otsu_bad) + "/10 Otsu images exact"};
}

struct Criterion {
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"adjoint", 10, adjoint},
      {"roundtrip", 1, roundtrip},
      {"basis_count", 5, basis_count},
      {"range_diagnostics", 30, range_diagnostics},
      {"extrapolation_benefit", 120, extrapolation_benefit},
      {"exact_recovery", 30, exact_recovery},
      {"fno_gradients", 60, fno_gradients},
      {"equivariance", 5, equivariance},
      {"training_smoke", 900, training_smoke},
      {"method_ordering", 7200, method_ordering},
      {"runtime_parity", 60, runtime_parity},
      {"scoring_oracles", 5, scoring_oracles},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<const Criterion*> todo;
  for (const auto& c : criteria())
    if (argc < 2 || c.name == std::string(argv[1])) todo.push_back(&c);
  if (todo.empty()) {
    std::fprintf(stderr, "unknown criterion '%s'; one of:", argv[1]);
    for (const auto& c : criteria()) std::fprintf(stderr, " %s", c.name);
    std::fprintf(stderr, "\n");
    return 2;
  }
  int failed = 0;
  for (const auto* c : todo) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c->run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double t = seconds_since(t0);
    const bool in_time = t <= c->limit_s;
    const bool pass = o.pass && in_time;
    std::printf("%s %s: %s; %.2f s (limit %g s)%s\n", pass ? "PASS" : "FAIL", c->name, o.detail.c_str(), t,
                c->limit_s, in_time ? "" : " over time");
    std::fflush(stdout);
    failed += !pass;
  }
  return failed == 0 ? 0 : 1;
}
