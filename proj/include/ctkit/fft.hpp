#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace ctkit {

using cplx = std::complex<double>;

/**
 * Real-input DFT of a fixed length backed by FFTW.
 *
 * forward: X[m] = sum_n x[n] exp(-2 pi i m n / N), m = 0 .. N/2 (unnormalized)
 * inverse: x[n] = sum over the Hermitian-extended spectrum, also unnormalized;
 *          the imaginary parts of X[0] and, for even N, X[N/2] are ignored.
 *
 * Plans are created under a global lock; execution is thread-safe.
 */
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  RealFft(RealFft&& other) noexcept;
  RealFft& operator=(RealFft&& other) noexcept;

  std::size_t size() const { return n_; }
  std::size_t spectrum_size() const { return n_ / 2 + 1; }

  void forward(std::span<const double> in, std::span<cplx> out) const;
  void inverse(std::span<const cplx> in, std::span<double> out) const;

 private:
  std::size_t n_ = 0;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

/// Process-wide plan for length n, created on first use and never freed.
const RealFft& shared_real_fft(std::size_t n);

}  // namespace ctkit
