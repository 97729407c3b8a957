#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <set>

#include "ctkit/fno.hpp"
#include "support.hpp"

using namespace ctkit;

namespace {

std::vector<cplx> identity_weights(std::size_t c, std::size_t modes) {
  std::vector<cplx> w(c * c * modes);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t m = 0; m < modes; ++m) w[(i * c + i) * modes + m] = 1.0;
  return w;
}

std::vector<cplx> random_weights(std::size_t out, std::size_t in, std::size_t modes, std::uint64_t seed) {
  const auto re = testing::random_values(out * in * modes, seed);
  const auto im = testing::random_values(out * in * modes, seed + 1);
  std::vector<cplx> w(re.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = {re[k], im[k]};
  return w;
}

Channels random_channels(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  const auto v = testing::random_values(rows * cols, seed);
  Channels x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::copy(v.begin(), v.end(), x.data());
  return x;
}

// Direct O(U^2) DFT of every row, per-mode mixing, Hermitian-extended inverse.
Channels direct_spectral_conv(const Channels& x, const SpectralView& w) {
  const auto U = static_cast<std::size_t>(x.cols());
  const double du = static_cast<double>(U);
  std::vector<std::vector<cplx>> X(w.in, std::vector<cplx>(w.modes));
  for (std::size_t i = 0; i < w.in; ++i)
    for (std::size_t m = 0; m < w.modes; ++m)
      for (std::size_t n = 0; n < U; ++n)
        X[i][m] += x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) *
                   std::polar(1.0, -kTwoPi * static_cast<double>(m * n % U) / du);
  Channels y = Channels::Zero(static_cast<Eigen::Index>(w.out), x.cols());
  for (std::size_t o = 0; o < w.out; ++o)
    for (std::size_t m = 0; m < w.modes; ++m) {
      cplx Y = 0.0;
      for (std::size_t i = 0; i < w.in; ++i) Y += w.at(o, i, m) * X[i][m];
      // DC and Nyquist are real parts of a single bin; other modes pair with -m
      const bool single = m == 0 || 2 * m == U;
      for (std::size_t n = 0; n < U; ++n) {
        const cplx e = std::polar(1.0, kTwoPi * static_cast<double>(m * n % U) / du);
        y(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(n)) += (single ? 1.0 : 2.0) * (Y * e).real() / du;
      }
    }
  return y;
}

double max_diff(const Channels& a, const Channels& b) { return (a - b).cwiseAbs().maxCoeff(); }

Channels roll_cols(const Channels& x, Eigen::Index shift) {
  Channels y(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) y.col((c + shift) % x.cols()) = x.col(c);
  return y;
}

Sinogram roll_bins(const Sinogram& g, std::size_t shift) {
  Sinogram out = g;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) out.at(i, (j + shift) % g.cols()) = g.at(i, j);
  return out;
}

FanGeometry tiny_geometry(std::size_t bins, std::size_t angles) {
  return FanGeometry::full_scan(5.0, bins, 2.0, angles, 0.9);
}

// Tiny net with every weight, including biases, drawn at random.
FnoParams tiny_params(const FnoDims& d, std::size_t bins, std::uint64_t seed) {
  FnoParams p = init_params(seed, d, bins);
  if (d.bias) {
    const auto noise = testing::random_values(p.size(), seed + 77, 0.1);
    for (const auto& t : p.tensors())
      if (t.name.find("bias") != std::string::npos)
        for (std::size_t k = 0; k < t.size; ++k) p.data()[t.offset + k] = noise[t.offset + k];
  }
  // lift the spectral scale so the GELU curvature is exercised
  for (const auto& t : p.tensors())
    if (t.complex)
      for (std::size_t k = 0; k < t.size; ++k) p.data()[t.offset + k] *= 3.0;
  for (std::size_t k : p.inert_slots(bins)) p.data()[k] = 0.0;
  return p;
}

double objective(const Sinogram& g, const FnoParams& p, const Sinogram& upstream) {
  return dot(fno_forward(g, p).correction.values, upstream.values);
}

}  // namespace

TEST_CASE("identity weights on every mode reproduce the input") {
  const std::size_t C = 3, U = 16, M = U / 2 + 1;
  const auto w = identity_weights(C, M);
  const SpectralView view{C, C, M, w.data()};
  const auto x = random_channels(C, U, 1);
  CHECK(max_diff(spectral_conv(x, view), x) < 1e-12);

  const std::size_t odd = 15;
  const auto wo = identity_weights(C, odd / 2 + 1);
  const auto xo = random_channels(C, odd, 2);
  CHECK(max_diff(spectral_conv(xo, {C, C, odd / 2 + 1, wo.data()}), xo) < 1e-12);
}

TEST_CASE("truncated identity equals a direct low-pass") {
  const std::size_t C = 2, U = 20, M = 4;
  const auto w = identity_weights(C, M);
  const SpectralView view{C, C, M, w.data()};
  const auto x = random_channels(C, U, 3);
  CHECK(max_diff(spectral_conv(x, view), direct_spectral_conv(x, view)) < 1e-12);
}

TEST_CASE("random weights match the direct DFT oracle") {
  for (std::size_t U : {16u, 17u}) {
    for (std::size_t M : {std::size_t{1}, std::size_t{5}, U / 2 + 1}) {
      const auto w = random_weights(3, 2, M, 10 + M);
      const SpectralView view{3, 2, M, w.data()};
      const auto x = random_channels(2, U, 4);
      CHECK(max_diff(spectral_conv(x, view), direct_spectral_conv(x, view)) < 1e-11);
    }
  }
}

TEST_CASE("spectral convolution rejects bad shapes") {
  const auto w = identity_weights(2, 10);
  CHECK_THROWS_AS(spectral_conv(random_channels(2, 16, 1), {2, 2, 10, w.data()}), std::invalid_argument);
  CHECK_THROWS_AS(spectral_conv(random_channels(3, 32, 1), {2, 2, 10, w.data()}), std::invalid_argument);
  FnoDims d{4, 3, 10, false};
  CHECK_THROWS_AS(d.check_bins(16), std::invalid_argument);
  CHECK_NOTHROW(d.check_bins(18));
}

TEST_CASE("spectral convolution is linear in input and weights") {
  const std::size_t C = 3, U = 24, M = 7;
  const auto w1 = random_weights(C, C, M, 1), w2 = random_weights(C, C, M, 2);
  std::vector<cplx> w12(w1.size());
  for (std::size_t k = 0; k < w12.size(); ++k) w12[k] = 0.3 * w1[k] - 1.5 * w2[k];
  const auto x1 = random_channels(C, U, 5), x2 = random_channels(C, U, 6);
  const SpectralView v1{C, C, M, w1.data()}, v2{C, C, M, w2.data()}, v12{C, C, M, w12.data()};

  const Channels lin_x = spectral_conv(2.0 * x1 + 0.5 * x2, v1);
  CHECK(max_diff(lin_x, 2.0 * spectral_conv(x1, v1) + 0.5 * spectral_conv(x2, v1)) < 1e-12);
  const Channels lin_w = spectral_conv(x1, v12);
  CHECK(max_diff(lin_w, 0.3 * spectral_conv(x1, v1) - 1.5 * spectral_conv(x1, v2)) < 1e-12);
}

TEST_CASE("spectral convolution obeys the per-mode operator norm bound") {
  const std::size_t C = 4, U = 32, M = 9;
  const auto w = random_weights(C, C, M, 8);
  const SpectralView view{C, C, M, w.data()};
  // largest singular value over the retained modes by power iteration
  double sigma = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    Eigen::MatrixXcd W(C, C);
    for (std::size_t o = 0; o < C; ++o)
      for (std::size_t i = 0; i < C; ++i) W(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) = view.at(o, i, m);
    Eigen::VectorXcd v = Eigen::VectorXcd::Ones(C);
    for (int it = 0; it < 500; ++it) v = (W.adjoint() * (W * v)).normalized();
    sigma = std::max(sigma, (W * v).norm());
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = random_channels(C, U, 30 + seed);
    CHECK(spectral_conv(x, view).norm() <= sigma * x.norm() * (1.0 + 1e-9));
  }
}

TEST_CASE("spectral convolution commutes with circular shifts") {
  const std::size_t C = 3, U = 16, M = 6;
  const auto w = random_weights(C, C, M, 9);
  const SpectralView view{C, C, M, w.data()};
  const auto x = random_channels(C, U, 7);
  for (Eigen::Index s : {1, 5, 11}) CHECK(max_diff(spectral_conv(roll_cols(x, s), view), roll_cols(spectral_conv(x, view), s)) < 1e-12);
}

TEST_CASE("whole network is translation equivariant along the detector") {
  const auto geom = tiny_geometry(32, 6);
  const FnoDims d{6, 5, 9, false};
  const auto p = tiny_params(d, 32, 3);
  const auto g = testing::random_sinogram(geom, 4);
  const auto y = fno_forward(g, p).correction;
  for (std::size_t s : {1u, 7u, 31u})
    CHECK(testing::max_abs_diff(fno_forward(roll_bins(g, s), p).correction.values, roll_bins(y, s).values) < 1e-10);
}

TEST_CASE("zero input maps to zero output without biases") {
  const auto geom = tiny_geometry(16, 5);
  const auto p = init_params(1, {5, 3, 4, false}, 16);
  const auto out = fno_forward(Sinogram::zeros(geom), p);
  CHECK(norm2(out.correction.values) == 0.0);
  CHECK(out.correction.rows() == 5);
  CHECK(out.correction.cols() == 16);
  CHECK(out.correction.geom == geom);
}

TEST_CASE("forward checks the angle count") {
  const auto p = init_params(1, {5, 3, 4, false}, 16);
  CHECK_THROWS_AS(fno_forward(Sinogram::zeros(tiny_geometry(16, 6)), p), std::invalid_argument);
  CHECK_THROWS_AS(fno_forward(Sinogram::zeros(tiny_geometry(4, 5)), p), std::invalid_argument);
}

TEST_CASE("tape replay and staleness") {
  const auto geom = tiny_geometry(16, 5);
  auto p = tiny_params({5, 3, 4, true}, 16, 2);
  const auto g = testing::random_sinogram(geom, 1);
  const auto out = fno_forward(g, p);
  CHECK(fno_replay(out.tape, p).values == out.correction.values);
  CHECK_NOTHROW(fno_backward(out.tape, g, p));
  p.data()[3] += 1e-3;
  CHECK_THROWS_AS(fno_backward(out.tape, g, p), std::logic_error);
  CHECK_THROWS_AS(fno_replay(out.tape, p), std::logic_error);
  p.data()[3] -= 1e-3;
  CHECK_THROWS_AS(fno_backward(out.tape, Sinogram::zeros(tiny_geometry(12, 5)), p), std::invalid_argument);
}

TEST_CASE("zero upstream gives zero gradients and gradients are linear in upstream") {
  const auto geom = tiny_geometry(16, 5);
  const auto p = tiny_params({5, 3, 4, true}, 16, 5);
  const auto g = testing::random_sinogram(geom, 1);
  const auto tape = fno_forward(g, p).tape;

  const auto zero = fno_backward(tape, Sinogram::zeros(geom), p);
  for (double v : zero.params) CHECK(v == 0.0);
  CHECK(norm2(zero.input.values) == 0.0);

  const auto u1 = testing::random_sinogram(geom, 2), u2 = testing::random_sinogram(geom, 3);
  Sinogram mix = u1;
  for (std::size_t k = 0; k < mix.values.size(); ++k) mix.values[k] = 1.7 * u1.values[k] - 0.4 * u2.values[k];
  const auto g1 = fno_backward(tape, u1, p), g2 = fno_backward(tape, u2, p), gm = fno_backward(tape, mix, p);
  double scale = 0.0, worst = 0.0;
  for (std::size_t k = 0; k < gm.params.size(); ++k) {
    scale = std::max(scale, std::abs(gm.params[k]));
    worst = std::max(worst, std::abs(gm.params[k] - (1.7 * g1.params[k] - 0.4 * g2.params[k])));
  }
  CHECK(worst <= 1e-10 * std::max(1.0, scale));
  for (std::size_t k = 0; k < gm.input.values.size(); ++k)
    CHECK(gm.input.values[k] == doctest::Approx(1.7 * g1.input.values[k] - 0.4 * g2.input.values[k]).scale(1.0).epsilon(1e-10));
}

TEST_CASE("gradients pass central finite differences on the tiny net") {
  const double h = 1e-5;
  for (const FnoDims& d : {FnoDims{5, 3, 4, false}, FnoDims{5, 3, 9, true}}) {
    const std::size_t U = 16;
    const auto geom = tiny_geometry(U, d.angles);
    auto p = tiny_params(d, U, 11);
    const auto g = testing::random_sinogram(geom, 12);
    const auto up = testing::random_sinogram(geom, 13);
    const auto grads = fno_backward(fno_forward(g, p).tape, up, p);

    const auto inert = p.inert_slots(U);
    const std::set<std::size_t> inert_set(inert.begin(), inert.end());
    for (const auto& t : p.tensors()) {
      double worst = 0.0;
      for (std::size_t k = t.offset; k < t.offset + t.size; ++k) {
        const double keep = p.data()[k];
        p.data()[k] = keep + h;
        const double fp = objective(g, p, up);
        p.data()[k] = keep - h;
        const double fm = objective(g, p, up);
        p.data()[k] = keep;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = grads.params[k];
        if (inert_set.count(k)) {
          CHECK(an == 0.0);
          continue;
        }
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
      }
      INFO("tensor " << t.name << " modes " << d.modes);
      CHECK(worst <= 1e-4);
    }

    double worst_in = 0.0;
    auto gi = g;
    for (std::size_t k = 0; k < gi.values.size(); ++k) {
      const double keep = gi.values[k];
      gi.values[k] = keep + h;
      const double fp = objective(gi, p, up);
      gi.values[k] = keep - h;
      const double fm = objective(gi, p, up);
      gi.values[k] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      worst_in = std::max(worst_in, std::abs(fd - grads.input.values[k]) / std::max({std::abs(fd), 1e-6}));
    }
    CHECK(worst_in <= 1e-4);
  }
}

TEST_CASE("every live parameter moves the output at init") {
  const std::size_t U = 16;
  const FnoDims d{5, 3, 4, false};
  const auto geom = tiny_geometry(U, d.angles);
  auto p = init_params(21, d, U);
  const auto g = testing::random_sinogram(geom, 22);
  const auto base = fno_forward(g, p).correction.values;
  const auto inert = p.inert_slots(U);
  const std::set<std::size_t> inert_set(inert.begin(), inert.end());
  std::size_t dead = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double keep = p.data()[k];
    p.data()[k] = keep + 1e-3;
    const double moved = testing::max_abs_diff(fno_forward(g, p).correction.values, base);
    p.data()[k] = keep;
    if (inert_set.count(k))
      CHECK(moved < 1e-14);
    else
      dead += moved == 0.0;
  }
  CHECK(dead == 0);
}

TEST_CASE("initialization") {
  const FnoDims d{8, 6, 5, false};
  const auto a = init_params(3, d, 16), b = init_params(3, d, 16), c = init_params(4, d, 16);
  CHECK(a.data() == b.data());
  CHECK(a.data() != c.data());
  for (std::size_t k : a.inert_slots(16)) CHECK(a.data()[k] == 0.0);
  for (const auto& t : a.tensors()) {
    if (t.complex) continue;
    const double bound = std::sqrt(1.0 / static_cast<double>(t.shape[1]));
    for (std::size_t k = t.offset; k < t.offset + t.size; ++k) CHECK(std::abs(a.data()[k]) <= bound);
  }
  CHECK_THROWS_AS(init_params(1, {8, 6, 10, false}, 16), std::invalid_argument);

  // output scale on unit-variance input relative to the input RMS
  const auto geom = tiny_geometry(128, 24);
  const FnoDims desk{24, 60, 65, false};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = init_params(seed, desk, 128);
    const auto g = testing::random_sinogram(geom, 100 + seed);
    const auto y = fno_forward(g, p).correction;
    const double ratio = norm2(y.values) / norm2(g.values);
    CHECK(ratio >= 0.01);
    CHECK(ratio <= 100.0);
  }
}

TEST_CASE("parameter layout") {
  const FnoDims d{7, 4, 3, true};
  const FnoParams p(d);
  const std::size_t expect = 4 * 7 + 3 * (2 * 4 * 4 * 3 + 4 * 4) + 7 * 4 + 4 + 3 * 4 + 7;
  CHECK(p.size() == expect);
  std::size_t at = 0;
  for (const auto& t : p.tensors()) {
    CHECK(t.offset == at);
    at += t.size;
  }
  CHECK(at == p.size());
  CHECK(p.lifting().rows() == 4);
  CHECK(p.lifting().cols() == 7);
  CHECK(p.projection().rows() == 7);
  CHECK(p.projection_bias().size() == 7);
  CHECK(FnoParams({7, 4, 3, false}).lifting_bias().empty());
  // M = U/2 + 1 on an even length adds the Nyquist imaginary parts
  CHECK(p.inert_slots(4).size() == 2 * 3 * 16);
  CHECK(p.inert_slots(5).size() == 3 * 16);
}

TEST_CASE("GELU") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(10.0) / 10.0 == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(std::abs(gelu(-10.0)) < 1e-20);
  for (double x : {-3.0, -1.0, -0.2, 0.0, 0.4, 1.5, 4.0}) {
    CHECK(gelu(x) == doctest::Approx(0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)))).epsilon(1e-14));
    const double fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
    CHECK(gelu_derivative(x) == doctest::Approx(fd).epsilon(1e-8));
  }
}

TEST_CASE("checkpoint round trip") {
  const FnoDims d{5, 3, 4, true};
  const auto p = tiny_params(d, 16, 8);
  const auto dir = testing::scratch_dir("fno-ckpt");
  save_params(p, dir, 8);
  const auto back = load_params(dir);
  CHECK(back.dims() == d);
  CHECK(back.data() == p.data());
  CHECK(back.fingerprint() == p.fingerprint());

  std::ifstream is(dir / "manifest.json");
  const auto j = nlohmann::json::parse(is);
  CHECK(j.at("L") == 5);
  CHECK(j.at("C") == 3);
  CHECK(j.at("M") == 4);
  CHECK(j.at("seed") == 8);
  CHECK(j.at("layers") == 3);
  CHECK(j.at("version") == 1);
  CHECK(j.at("tensors").size() == p.tensors().size());

  std::filesystem::remove(dir / "skip1.f64");
  CHECK_THROWS_AS(load_params(dir), std::runtime_error);
  CHECK_THROWS_AS(load_params(testing::scratch_dir("fno-none")), std::runtime_error);
}
