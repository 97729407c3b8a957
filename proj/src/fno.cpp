#include "ctkit/fno.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "ctkit/raster.hpp"

namespace ctkit {

void FnoDims::validate() const {
  if (angles == 0) throw std::invalid_argument("fno: angle count must be positive");
  if (channels == 0) throw std::invalid_argument("fno: channel count must be positive");
  if (modes == 0) throw std::invalid_argument("fno: mode count must be positive");
}

void FnoDims::check_bins(std::size_t bins) const {
  if (modes > bins / 2 + 1)
    throw std::invalid_argument("fno: " + std::to_string(modes) + " modes exceed " +
                                std::to_string(bins / 2 + 1) + " available for " +
                                std::to_string(bins) + " bins");
}

FnoParams::FnoParams(const FnoDims& dims) : dims_(dims) {
  dims_.validate();
  const std::size_t L = dims.angles, C = dims.channels, M = dims.modes;
  std::size_t at = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape, bool complex) {
    std::size_t n = complex ? 2 : 1;
    for (auto s : shape) n *= s;
    tensors_.push_back({std::move(name), at, n, std::move(shape), complex});
    at += n;
    return tensors_.back().offset;
  };
  lifting_ = add("lifting", {C, L}, false);
  for (std::size_t l = 0; l < kFnoLayers; ++l) {
    spectral_[l] = add("spectral" + std::to_string(l), {C, C, M}, true);
    skip_[l] = add("skip" + std::to_string(l), {C, C}, false);
  }
  projection_ = add("projection", {L, C}, false);
  if (dims.bias) {
    lifting_bias_ = add("lifting_bias", {C}, false);
    for (std::size_t l = 0; l < kFnoLayers; ++l)
      layer_bias_[l] = add("bias" + std::to_string(l), {C}, false);
    projection_bias_ = add("projection_bias", {L}, false);
  }
  data_.assign(at, 0.0);
}

Eigen::Map<const Channels> FnoParams::lifting() const {
  return {data_.data() + lifting_, static_cast<Eigen::Index>(dims_.channels),
          static_cast<Eigen::Index>(dims_.angles)};
}

Eigen::Map<const Channels> FnoParams::skip(std::size_t layer) const {
  return {data_.data() + skip_[layer], static_cast<Eigen::Index>(dims_.channels),
          static_cast<Eigen::Index>(dims_.channels)};
}

Eigen::Map<const Channels> FnoParams::projection() const {
  return {data_.data() + projection_, static_cast<Eigen::Index>(dims_.angles),
          static_cast<Eigen::Index>(dims_.channels)};
}

SpectralView FnoParams::spectral(std::size_t layer) const {
  return {dims_.channels, dims_.channels, dims_.modes,
          reinterpret_cast<const cplx*>(data_.data() + spectral_[layer])};
}

std::span<const double> FnoParams::lifting_bias() const {
  if (!dims_.bias) return {};
  return {data_.data() + lifting_bias_, dims_.channels};
}

std::span<const double> FnoParams::layer_bias(std::size_t layer) const {
  if (!dims_.bias) return {};
  return {data_.data() + layer_bias_[layer], dims_.channels};
}

std::span<const double> FnoParams::projection_bias() const {
  if (!dims_.bias) return {};
  return {data_.data() + projection_bias_, dims_.angles};
}

std::vector<std::size_t> FnoParams::inert_slots(std::size_t bins) const {
  const std::size_t C = dims_.channels, M = dims_.modes;
  const bool nyquist = bins % 2 == 0 && M == bins / 2 + 1;
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < kFnoLayers; ++l) {
    for (std::size_t oi = 0; oi < C * C; ++oi) {
      out.push_back(spectral_[l] + 2 * (oi * M) + 1);
      if (nyquist) out.push_back(spectral_[l] + 2 * (oi * M + M - 1) + 1);
    }
  }
  return out;
}

std::uint64_t FnoParams::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : data_) {
    std::uint64_t w;
    std::memcpy(&w, &v, sizeof w);
    h = (h ^ w) * 0x100000001b3ULL;
    h ^= h >> 29;
  }
  return h ^ data_.size();
}

double gelu(double x) { return 0.5 * x * std::erfc(-x / std::sqrt(2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
  return cdf + x * pdf;
}

namespace {

Spectra row_spectra(const Channels& x, std::size_t modes) {
  const auto U = static_cast<std::size_t>(x.cols());
  const RealFft& fft = shared_real_fft(U);
  std::vector<cplx> buf(fft.spectrum_size());
  Spectra out(x.rows(), static_cast<Eigen::Index>(modes));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    fft.forward({x.data() + r * x.cols(), U}, buf);
    for (std::size_t m = 0; m < modes; ++m) out(r, static_cast<Eigen::Index>(m)) = buf[m];
  }
  return out;
}

// Inverse real DFT of each row (modes beyond Y.cols() zero), times `scale`.
Channels rows_from_spectra(const Spectra& Y, std::size_t bins, double scale) {
  const RealFft& fft = shared_real_fft(bins);
  std::vector<cplx> buf(fft.spectrum_size());
  Channels out(Y.rows(), static_cast<Eigen::Index>(bins));
  for (Eigen::Index r = 0; r < Y.rows(); ++r) {
    std::fill(buf.begin(), buf.end(), cplx{});
    for (Eigen::Index m = 0; m < Y.cols(); ++m) buf[static_cast<std::size_t>(m)] = Y(r, m);
    std::span<double> row(out.data() + r * out.cols(), bins);
    fft.inverse(buf, row);
    for (double& v : row) v *= scale;
  }
  return out;
}

Spectra mix_modes(const SpectralView& w, const Spectra& X) {
  Spectra Y = Spectra::Zero(static_cast<Eigen::Index>(w.out), X.cols());
  const auto M = static_cast<std::size_t>(X.cols());
  for (std::size_t o = 0; o < w.out; ++o) {
    cplx* y = Y.data() + o * M;
    for (std::size_t i = 0; i < w.in; ++i) {
      const cplx* wr = &w.at(o, i, 0);
      const cplx* x = X.data() + i * M;
      for (std::size_t m = 0; m < M; ++m) y[m] += wr[m] * x[m];
    }
  }
  return Y;
}

void check_spectral(const Channels& x, const SpectralView& w) {
  if (static_cast<std::size_t>(x.rows()) != w.in)
    throw std::invalid_argument("spectral_conv: input has " + std::to_string(x.rows()) +
                                " channels, weights expect " + std::to_string(w.in));
  const auto U = static_cast<std::size_t>(x.cols());
  if (w.modes > U / 2 + 1)
    throw std::invalid_argument("spectral_conv: " + std::to_string(w.modes) + " modes exceed " +
                                std::to_string(U / 2 + 1) + " available for length " +
                                std::to_string(U));
}

void add_bias(Channels& h, std::span<const double> b) {
  if (b.empty()) return;
  for (Eigen::Index r = 0; r < h.rows(); ++r) h.row(r).array() += b[static_cast<std::size_t>(r)];
}

Channels channels_of(const Sinogram& g) {
  Channels x(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
  std::copy(g.values.begin(), g.values.end(), x.data());
  return x;
}

Sinogram sinogram_of(const Channels& y, const FanGeometry& geom) {
  Sinogram out = Sinogram::zeros(geom);
  std::copy(y.data(), y.data() + y.size(), out.values.begin());
  return out;
}

Channels project(const Channels& h, const FnoParams& p) {
  Channels y = p.projection() * h;
  add_bias(y, p.projection_bias());
  return y;
}

}  // namespace

Channels spectral_conv(const Channels& x, const SpectralView& w) {
  check_spectral(x, w);
  const auto U = static_cast<std::size_t>(x.cols());
  return rows_from_spectra(mix_modes(w, row_spectra(x, w.modes)), U, 1.0 / static_cast<double>(U));
}

FnoOutput fno_forward(const Sinogram& g, const FnoParams& p) {
  const FnoDims& d = p.dims();
  if (g.rows() != d.angles)
    throw std::invalid_argument("fno_forward: sinogram has " + std::to_string(g.rows()) +
                                " angle rows, parameters expect " + std::to_string(d.angles));
  d.check_bins(g.cols());
  const std::size_t U = g.cols();
  const double inv_u = 1.0 / static_cast<double>(U);

  Tape tape;
  tape.dims = d;
  tape.bins = U;
  tape.params_fingerprint = p.fingerprint();
  tape.geom = g.geom;
  tape.input = channels_of(g);

  Channels h = p.lifting() * tape.input;
  add_bias(h, p.lifting_bias());
  for (std::size_t l = 0; l < kFnoLayers; ++l) {
    const SpectralView w = p.spectral(l);
    Spectra X = row_spectra(h, d.modes);
    Channels z = rows_from_spectra(mix_modes(w, X), U, inv_u);
    z.noalias() += p.skip(l) * h;
    add_bias(z, p.layer_bias(l));
    tape.hidden.push_back(std::move(h));
    tape.spectra.push_back(std::move(X));
    if (l + 1 < kFnoLayers) {
      h = z.unaryExpr([](double v) { return gelu(v); });
    } else {
      h = z;
    }
    tape.preactivation.push_back(std::move(z));
  }
  tape.hidden.push_back(h);
  Sinogram out = sinogram_of(project(h, p), g.geom);
  return {std::move(out), std::move(tape)};
}

Sinogram fno_replay(const Tape& tape, const FnoParams& p) {
  if (tape.params_fingerprint != p.fingerprint())
    throw std::logic_error("fno_replay: tape was recorded with different parameters");
  return sinogram_of(project(tape.hidden.back(), p), tape.geom);
}

FnoGradients fno_backward(const Tape& tape, const Sinogram& upstream, const FnoParams& p) {
  if (tape.params_fingerprint != p.fingerprint() || !(tape.dims == p.dims()))
    throw std::logic_error("fno_backward: tape was recorded with different parameters");
  if (upstream.rows() != tape.dims.angles || upstream.cols() != tape.bins)
    throw std::invalid_argument("fno_backward: upstream gradient shape differs from the forward input");

  const FnoDims& d = p.dims();
  const std::size_t U = tape.bins, M = d.modes, C = d.channels;
  const double inv_u = 1.0 / static_cast<double>(U);
  const bool even = U % 2 == 0;

  FnoGradients out;
  out.params.assign(p.size(), 0.0);
  auto tensor = [&](const std::string& name) -> const TensorInfo& {
    for (const auto& t : p.tensors())
      if (t.name == name) return t;
    throw std::logic_error("fno_backward: missing tensor " + name);
  };
  auto grad_map = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    return Eigen::Map<Channels>(out.params.data() + tensor(name).offset, static_cast<Eigen::Index>(rows),
                                static_cast<Eigen::Index>(cols));
  };
  auto bias_grad = [&](const std::string& name, const Channels& g) {
    if (!d.bias) return;
    double* dst = out.params.data() + tensor(name).offset;
    for (Eigen::Index r = 0; r < g.rows(); ++r) dst[r] = g.row(r).sum();
  };

  const Channels gy = channels_of(upstream);
  grad_map("projection", d.angles, C) = gy * tape.hidden.back().transpose();
  bias_grad("projection_bias", gy);
  Channels gh = p.projection().transpose() * gy;

  for (std::size_t l = kFnoLayers; l-- > 0;) {
    const Channels& z = tape.preactivation[l];
    Channels gz = gh;
    if (l + 1 < kFnoLayers) gz.array() *= z.unaryExpr([](double v) { return gelu_derivative(v); }).array();

    const Channels& h = tape.hidden[l];
    const Spectra& X = tape.spectra[l];
    grad_map("skip" + std::to_string(l), C, C) = gz * h.transpose();
    bias_grad("bias" + std::to_string(l), gz);
    Channels gh_prev = p.skip(l).transpose() * gz;

    // Gradient w.r.t. the retained output spectrum: c_m / U times rfft(gz),
    // c_m = 1 on DC and Nyquist, 2 elsewhere.
    Spectra gY = row_spectra(gz, M);
    for (std::size_t m = 0; m < M; ++m) {
      const bool single = m == 0 || (even && m == U / 2);
      gY.col(static_cast<Eigen::Index>(m)) *= (single ? 1.0 : 2.0) * inv_u;
    }

    const SpectralView w = p.spectral(l);
    auto* gw = reinterpret_cast<cplx*>(out.params.data() + tensor("spectral" + std::to_string(l)).offset);
    Spectra gX = Spectra::Zero(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(M));
    for (std::size_t o = 0; o < C; ++o) {
      const cplx* g_o = gY.data() + o * M;
      for (std::size_t i = 0; i < C; ++i) {
        const cplx* x_i = X.data() + i * M;
        const cplx* w_oi = &w.at(o, i, 0);
        cplx* gw_oi = gw + (o * C + i) * M;
        cplx* gx_i = gX.data() + i * M;
        for (std::size_t m = 0; m < M; ++m) {
          gw_oi[m] = g_o[m] * std::conj(x_i[m]);
          gx_i[m] += std::conj(w_oi[m]) * g_o[m];
        }
      }
    }
    // Adjoint of the truncated forward rfft: halve interior modes, then c2r.
    for (std::size_t m = 0; m < M; ++m) {
      const bool single = m == 0 || (even && m == U / 2);
      if (!single) gX.col(static_cast<Eigen::Index>(m)) *= 0.5;
    }
    gh_prev += rows_from_spectra(gX, U, 1.0);
    gh = std::move(gh_prev);
  }

  grad_map("lifting", C, d.angles) = gh * tape.input.transpose();
  bias_grad("lifting_bias", gh);
  out.input = sinogram_of(p.lifting().transpose() * gh, tape.geom);
  return out;
}

FnoParams init_params(std::uint64_t seed, const FnoDims& dims, std::size_t bins) {
  dims.check_bins(bins);
  FnoParams p(dims);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& data = p.data();
  for (const auto& t : p.tensors()) {
    double* dst = data.data() + t.offset;
    if (t.complex) {
      const double scale = 1.0 / static_cast<double>(t.shape[0] * t.shape[1]);
      for (std::size_t k = 0; k < t.size; ++k) dst[k] = scale * normal(rng);
    } else if (t.shape.size() == 2) {
      const double bound = std::sqrt(1.0 / static_cast<double>(t.shape[1]));
      std::uniform_real_distribution<double> uni(-bound, bound);
      for (std::size_t k = 0; k < t.size; ++k) dst[k] = uni(rng);
    }
  }
  for (std::size_t k : p.inert_slots(bins)) data[k] = 0.0;
  return p;
}

void save_params(const FnoParams& p, const std::filesystem::path& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const FnoDims& d = p.dims();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : p.tensors()) {
    std::vector<std::size_t> shape = t.shape;
    if (t.complex) shape.push_back(2);
    const std::string file = t.name + ".f64";
    write_raster(dir / file,
                 Raster::from_f64(shape, std::span<const double>(p.data().data() + t.offset, t.size),
                                  {{"kind", "fno-tensor"}, {"name", t.name}}));
    tensors.push_back({{"name", t.name}, {"file", file}, {"shape", t.shape}, {"complex", t.complex}});
  }
  nlohmann::json j = {{"format", "ctkit-fno"}, {"version", 1},       {"L", d.angles},
                      {"C", d.channels},      {"M", d.modes},        {"bias", d.bias},
                      {"layers", kFnoLayers}, {"seed", seed},        {"tensors", tensors}};
  std::ofstream os(dir / "manifest.json");
  if (!os) throw std::runtime_error("save_params: cannot write " + (dir / "manifest.json").string());
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("save_params: write failed in " + dir.string());
}

FnoParams load_params(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("load_params: missing " + (dir / "manifest.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_params: malformed manifest: " + std::string(e.what()));
  }
  if (j.value("format", "") != "ctkit-fno") throw std::runtime_error("load_params: not an fno checkpoint");
  if (j.value("layers", 0) != static_cast<int>(kFnoLayers))
    throw std::runtime_error("load_params: unsupported layer count");
  FnoDims d;
  d.angles = j.at("L").get<std::size_t>();
  d.channels = j.at("C").get<std::size_t>();
  d.modes = j.at("M").get<std::size_t>();
  d.bias = j.value("bias", false);
  FnoParams p(d);
  for (const auto& t : p.tensors()) {
    const Raster r = read_raster(dir / (t.name + ".f64"));
    const auto values = r.to_f64();
    if (values.size() != t.size)
      throw std::runtime_error("load_params: tensor " + t.name + " has " + std::to_string(values.size()) +
                               " values, expected " + std::to_string(t.size));
    std::copy(values.begin(), values.end(), p.data().begin() + static_cast<std::ptrdiff_t>(t.offset));
  }
  return p;
}

}  // namespace ctkit
