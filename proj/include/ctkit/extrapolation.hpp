#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ctkit/arrays.hpp"

namespace ctkit {

using cplx = std::complex<double>;

enum class PolynomialFamily { chebyshev2, chebyshev1, legendre };

/**
 * Range-condition basis e^{ik theta} P_n(s / r_fov) W(s) in parallel
 * coordinates, sampled on the fan-beam lattice. Radial orders n < order_count,
 * angular orders 0 <= k <= n with k = n (mod 2); negative k follow from
 * conjugate symmetry of real sinograms. W(s) = sqrt(1 - (s / r_fov)^2).
 */
struct BasisSpec {
  std::size_t order_count = 50;
  PolynomialFamily family = PolynomialFamily::chebyshev2;

  std::size_t coefficient_count() const;
  void validate() const;
};

nlohmann::json to_json(const BasisSpec& spec);
BasisSpec basis_spec_from_json(const nlohmann::json& j);

/// Orthonormal family member of degree n at x in [-1, 1].
double basis_polynomial(PolynomialFamily family, std::size_t n, double x);

/// Index of one coefficient slot.
struct BasisIndex {
  std::size_t n;
  std::size_t k;
};

/// Slots in n-major order; (n, k) with k + n odd has no slot.
std::vector<BasisIndex> basis_indices(const BasisSpec& spec);
std::optional<std::size_t> basis_slot(const BasisSpec& spec, std::size_t n, std::size_t k);

/// Complex coefficients c_{n,k}, ordered as basis_indices().
struct BasisCoefficients {
  std::vector<cplx> values;
};

/// Real inner product Re sum conj(a) b.
double real_inner(const BasisCoefficients& a, const BasisCoefficients& b);

/**
 * Precomputed basis tables for one geometry. The basis separates as
 * e^{ik beta} phi_{n,k}(u) because theta = beta + atan(u / R) - pi / 2 and s
 * depends on u only.
 */
class BasisOperator {
 public:
  BasisOperator(const FanGeometry& geom, const BasisSpec& spec);

  /// Real part of the series; k = 0 counted once, k > 0 twice (2 Re).
  Sinogram synthesize(const BasisCoefficients& c) const;
  /// Adjoint of synthesize restricted to the mask.
  BasisCoefficients analyze(const Sinogram& g, const KnownMask& mask) const;

  const FanGeometry& geometry() const { return geom_; }
  const BasisSpec& spec() const { return spec_; }
  const std::vector<BasisIndex>& indices() const { return indices_; }
  /// U x P matrix of phi_p(u_j).
  const Eigen::MatrixXcd& radial_table() const { return phi_; }
  double slot_weight(std::size_t p) const { return indices_[p].k == 0 ? 1.0 : 2.0; }

 private:
  FanGeometry geom_;
  BasisSpec spec_;
  std::vector<BasisIndex> indices_;
  Eigen::MatrixXcd phi_;       // bins x slots
  Eigen::MatrixXcd angular_;   // angles x orders, e^{ik beta_i}
};

Sinogram synthesize(const BasisCoefficients& c, const FanGeometry& geom, const BasisSpec& spec);
BasisCoefficients analyze(const Sinogram& g, const KnownMask& mask, const BasisSpec& spec);

/**
 * Normal operator of the masked basis. Because the synthesized sinogram is the
 * real part of the complex series, analyze(mask * synthesize(c)) equals
 * gram * c + conj_gram * conj(c): `gram` is the Hermitian 650 x 650 matrix of
 * masked column inner products (scaled by the slot weights) and `conj_gram`
 * the complex-symmetric coupling to conj(c).
 */
struct GramCache {
  Eigen::MatrixXcd gram;
  Eigen::MatrixXcd conj_gram;
  std::string geometry_hash;
  std::string mask_hash;
  std::string basis_hash;

  std::size_t size() const { return static_cast<std::size_t>(gram.rows()); }
  /// trace(gram) / slot count; ridge defaults are multiples of this.
  double trace_per_slot() const;
};

std::string hash_geometry(const FanGeometry& geom);
std::string hash_mask(const KnownMask& mask);
std::string hash_basis(const BasisSpec& spec);

GramCache compute_gram(const KnownMask& mask, const BasisOperator& basis);
GramCache compute_gram(const KnownMask& mask, const FanGeometry& geom, const BasisSpec& spec);

/// Loads the Gram matrices from `cache_dir` when present, else computes and
/// stores them there. Throws std::runtime_error on I/O failure.
GramCache load_or_compute_gram(const KnownMask& mask, const BasisOperator& basis,
                               const std::filesystem::path& cache_dir);
void save_gram(const GramCache& gram, const std::filesystem::path& cache_dir);
std::optional<GramCache> load_gram(const std::string& geometry_hash, const std::string& mask_hash,
                                   const std::string& basis_hash, const std::filesystem::path& cache_dir);

/// Cache directory from CTKIT_CACHE_DIR, falling back to ./ctkit-cache.
std::filesystem::path default_cache_dir();

/// Factorized ridge system (normal operator + lambda I) for one Gram.
class RidgeSolver {
 public:
  /// Throws std::domain_error when lambda == 0 and the system is singular.
  RidgeSolver(const GramCache& gram, const BasisSpec& spec, double lambda);

  /// Solves for the coefficients given analyze(g, mask).
  BasisCoefficients solve(const BasisCoefficients& rhs) const;
  double lambda() const { return lambda_; }

 private:
  std::vector<BasisIndex> indices_;
  std::vector<std::size_t> real_slot_;  // real-vector position of Re c_p
  std::vector<std::ptrdiff_t> imag_slot_;  // position of Im c_p, -1 if k == 0
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double lambda_;
};

/// Minimizes ||mask * (synthesize(c) - g)||^2 + lambda ||c||^2.
BasisCoefficients fit(const Sinogram& g, const KnownMask& mask, double lambda, const GramCache& gram,
                      const BasisOperator& basis);

/// g on known bins, synthesize(fit(...)) on unknown bins.
Sinogram extrapolate(const Sinogram& g, const KnownMask& mask, double lambda, const GramCache& gram,
                     const BasisOperator& basis);

/// Relative residual of g after projection onto the basis orders <= n, for
/// every n. Non-increasing in n.
std::vector<double> range_residual(const Sinogram& g, const BasisOperator& basis);

/**
 * Row shift that moves a contiguous measured arc of a uniform full-orbit
 * geometry to start at row 0, or nullopt when the mask is not of that form.
 * Extrapolation commutes with such shifts, so one Gram serves every arc
 * start of the same length.
 */
std::optional<std::ptrdiff_t> canonical_wedge_shift(const KnownMask& mask, const FanGeometry& geom);

/// Range-condition extrapolation with per-mask Gram/factorization caching.
class Extrapolator {
 public:
  /// lambda_scale multiplies the default ridge trace(gram) / slot count.
  Extrapolator(const FanGeometry& geom, BasisSpec spec, double lambda_scale = 1e-3,
               std::optional<std::filesystem::path> cache_dir = std::nullopt);

  Sinogram extrapolate(const Sinogram& g, const KnownMask& mask) const;

  const BasisOperator& basis() const { return basis_; }
  double lambda_scale() const { return lambda_scale_; }

 private:
  struct Entry {
    GramCache gram;
    std::unique_ptr<RidgeSolver> solver;
  };
  const Entry& entry_for(const KnownMask& mask) const;

  BasisOperator basis_;
  double lambda_scale_;
  std::optional<std::filesystem::path> cache_dir_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::unique_ptr<Entry>> entries_;
};

}  // namespace ctkit
