#include "ctkit/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace ctkit {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("RealFft: length must be positive");
  std::vector<double> re(n);
  std::vector<cplx> spec(n / 2 + 1);
  const int len = static_cast<int>(n);
  std::lock_guard lock(planner_mutex());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  forward_plan_ = fftw_plan_dft_r2c_1d(len, re.data(), reinterpret_cast<fftw_complex*>(spec.data()),
                                       flags);
  inverse_plan_ = fftw_plan_dft_c2r_1d(len, reinterpret_cast<fftw_complex*>(spec.data()), re.data(),
                                       flags | FFTW_DESTROY_INPUT);
  if (!forward_plan_ || !inverse_plan_) throw std::runtime_error("RealFft: FFTW planning failed");
}

RealFft::~RealFft() {
  if (!forward_plan_ && !inverse_plan_) return;
  std::lock_guard lock(planner_mutex());
  if (forward_plan_) fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  if (inverse_plan_) fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

RealFft::RealFft(RealFft&& other) noexcept
    : n_(other.n_),
      forward_plan_(std::exchange(other.forward_plan_, nullptr)),
      inverse_plan_(std::exchange(other.inverse_plan_, nullptr)) {}

RealFft& RealFft::operator=(RealFft&& other) noexcept {
  if (this != &other) {
    std::swap(n_, other.n_);
    std::swap(forward_plan_, other.forward_plan_);
    std::swap(inverse_plan_, other.inverse_plan_);
  }
  return *this;
}

void RealFft::forward(std::span<const double> in, std::span<cplx> out) const {
  if (in.size() != n_ || out.size() != spectrum_size())
    throw std::invalid_argument("RealFft::forward: size mismatch");
  // r2c does not modify its input
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(std::span<const cplx> in, std::span<double> out) const {
  if (in.size() != spectrum_size() || out.size() != n_)
    throw std::invalid_argument("RealFft::inverse: size mismatch");
  std::vector<cplx> scratch(in.begin(), in.end());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_),
                       reinterpret_cast<fftw_complex*>(scratch.data()), out.data());
}

const RealFft& shared_real_fft(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<RealFft>> plans;
  std::lock_guard lock(mutex);
  auto& slot = plans[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

}  // namespace ctkit
