#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctkit/arrays.hpp"
#include "ctkit/fft.hpp"

namespace ctkit {

/// Channels x samples, row-major; one row per channel.
using Channels = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Channels x retained modes.
using Spectra = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::size_t kFnoLayers = 3;

struct FnoDims {
  std::size_t angles = 0;     // L: input/output channels (sinogram rows)
  std::size_t channels = 60;  // C: hidden width
  std::size_t modes = 65;     // M: retained Fourier modes per layer
  bool bias = false;

  void validate() const;
  /// Throws std::invalid_argument when M exceeds bins / 2 + 1.
  void check_bins(std::size_t bins) const;
  bool operator==(const FnoDims&) const = default;
};

/// Weights of one spectral convolution, [out][in][mode].
struct SpectralView {
  std::size_t out = 0;
  std::size_t in = 0;
  std::size_t modes = 0;
  const cplx* data = nullptr;

  const cplx& at(std::size_t o, std::size_t i, std::size_t m) const {
    return data[(o * in + i) * modes + m];
  }
};

/// Named slice of the flat parameter vector.
struct TensorInfo {
  std::string name;
  std::size_t offset = 0;  // in doubles
  std::size_t size = 0;    // in doubles (complex entries count twice)
  std::vector<std::size_t> shape;
  bool complex = false;
};

/**
 * All trainable weights in one flat double vector so that optimizers and
 * checkpoints treat them uniformly. Complex spectral weights are stored as
 * interleaved (re, im) pairs.
 *
 * Layout: lifting C x L, then per layer spectral C x C x M (complex) and skip
 * C x C, then projection L x C; biases (when enabled) follow at the end.
 */
class FnoParams {
 public:
  FnoParams() = default;
  explicit FnoParams(const FnoDims& dims);

  const FnoDims& dims() const { return dims_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  std::size_t size() const { return data_.size(); }

  Eigen::Map<const Channels> lifting() const;
  Eigen::Map<const Channels> skip(std::size_t layer) const;
  Eigen::Map<const Channels> projection() const;
  SpectralView spectral(std::size_t layer) const;
  /// Empty spans when biases are disabled.
  std::span<const double> lifting_bias() const;
  std::span<const double> layer_bias(std::size_t layer) const;
  std::span<const double> projection_bias() const;

  /// Parameter slots that cannot influence the output: imaginary parts of
  /// the DC weights (and of the Nyquist weights when that mode is kept for an
  /// even bin count). Their gradients are identically zero.
  std::vector<std::size_t> inert_slots(std::size_t bins) const;

  /// Cheap content hash used to detect stale tapes.
  std::uint64_t fingerprint() const;

 private:
  FnoDims dims_;
  std::vector<TensorInfo> tensors_;
  std::vector<double> data_;
  std::size_t lifting_ = 0, projection_ = 0;
  std::size_t spectral_[kFnoLayers]{}, skip_[kFnoLayers]{};
  std::size_t lifting_bias_ = 0, projection_bias_ = 0, layer_bias_[kFnoLayers]{};
};

/// Exact GELU x Phi(x) and its derivative.
double gelu(double x);
double gelu_derivative(double x);

/**
 * Real DFT of every row, per-mode complex matrix product on the first M modes,
 * higher modes zeroed, inverse real DFT with 1/U. Throws std::invalid_argument
 * when M > U/2 + 1 or the channel counts disagree.
 */
Channels spectral_conv(const Channels& x, const SpectralView& w);

/// Activations recorded by fno_forward.
struct Tape {
  FnoDims dims;
  std::size_t bins = 0;
  std::uint64_t params_fingerprint = 0;
  FanGeometry geom;
  Channels input;                              // L x U
  std::vector<Channels> hidden;                // layer inputs h_0 .. h_3 (C x U)
  std::vector<Spectra> spectra;                // rfft of h_0 .. h_2, C x M
  std::vector<Channels> preactivation;         // z_0 .. z_2
};

struct FnoOutput {
  Sinogram correction;
  Tape tape;
};

/// Angle rows are channels. Throws std::invalid_argument on an L mismatch.
FnoOutput fno_forward(const Sinogram& g, const FnoParams& p);

/// Output recomputed from the tape's last hidden state; bitwise equal to the
/// forward output.
Sinogram fno_replay(const Tape& tape, const FnoParams& p);

struct FnoGradients {
  std::vector<double> params;  // same layout as FnoParams::data()
  Sinogram input;
};

/// Reverse-mode adjoint of fno_forward. Throws std::logic_error when the
/// tape was recorded with different parameters.
FnoGradients fno_backward(const Tape& tape, const Sinogram& upstream, const FnoParams& p);

/// Spectral weights complex Gaussian scaled by 1 / (C_in C_out) (inert
/// imaginary parts zeroed), other matrices uniform in +-sqrt(1 / C_in), biases
/// zero. Deterministic per seed.
FnoParams init_params(std::uint64_t seed, const FnoDims& dims, std::size_t bins);

/// Checkpoint directory: manifest.json plus one raster per tensor.
void save_params(const FnoParams& p, const std::filesystem::path& dir, std::uint64_t seed = 0);
FnoParams load_params(const std::filesystem::path& dir);

}  // namespace ctkit
