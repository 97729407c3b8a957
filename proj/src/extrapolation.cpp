#include "ctkit/extrapolation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "ctkit/raster.hpp"

namespace ctkit {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string fnv1a(const void* data, std::size_t size, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

const char* family_name(PolynomialFamily f) {
  switch (f) {
    case PolynomialFamily::chebyshev2: return "chebyshev2";
    case PolynomialFamily::chebyshev1: return "chebyshev1";
    case PolynomialFamily::legendre: return "legendre";
  }
  return "?";
}

// Real unknowns: Re c_p for every slot, Im c_p for k > 0 (Im c_{n,0} never
// reaches the real-valued synthesis).
struct RealLayout {
  std::vector<std::size_t> re;
  std::vector<std::ptrdiff_t> im;
  std::size_t dims = 0;
};

RealLayout real_layout(const std::vector<BasisIndex>& idx) {
  RealLayout l;
  for (const auto& bi : idx) {
    l.re.push_back(l.dims++);
    l.im.push_back(bi.k > 0 ? static_cast<std::ptrdiff_t>(l.dims++) : -1);
  }
  return l;
}

Eigen::MatrixXd assemble_real_system(const GramCache& g, const RealLayout& l) {
  const auto p_count = static_cast<Eigen::Index>(l.re.size());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l.dims), static_cast<Eigen::Index>(l.dims));
  for (Eigen::Index p = 0; p < p_count; ++p) {
    const auto xp = static_cast<Eigen::Index>(l.re[p]);
    const auto yp = l.im[p];
    for (Eigen::Index q = 0; q < p_count; ++q) {
      const cplx gv = g.gram(p, q), hv = g.conj_gram(p, q);
      const auto xq = static_cast<Eigen::Index>(l.re[q]);
      const auto yq = l.im[q];
      s(xp, xq) = gv.real() + hv.real();
      if (yq >= 0) s(xp, yq) = hv.imag() - gv.imag();
      if (yp >= 0) s(yp, xq) = gv.imag() + hv.imag();
      if (yp >= 0 && yq >= 0) s(yp, yq) = gv.real() - hv.real();
    }
  }
  return 0.5 * (s + s.transpose());
}

Eigen::VectorXd to_real(const BasisCoefficients& c, const RealLayout& l) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(l.dims));
  for (std::size_t p = 0; p < l.re.size(); ++p) {
    v(static_cast<Eigen::Index>(l.re[p])) = c.values[p].real();
    if (l.im[p] >= 0) v(l.im[p]) = c.values[p].imag();
  }
  return v;
}

BasisCoefficients from_real(const Eigen::VectorXd& v, const RealLayout& l) {
  BasisCoefficients c{std::vector<cplx>(l.re.size())};
  for (std::size_t p = 0; p < l.re.size(); ++p)
    c.values[p] = {v(static_cast<Eigen::Index>(l.re[p])), l.im[p] >= 0 ? v(l.im[p]) : 0.0};
  return c;
}

std::string gram_stem(const std::string& gh, const std::string& mh, const std::string& bh) {
  return "gram-" + gh + "-" + mh + "-" + bh;
}

}  // namespace

std::size_t BasisSpec::coefficient_count() const {
  std::size_t n = 0;
  for (std::size_t order = 0; order < order_count; ++order) n += order / 2 + 1;
  return n;
}

void BasisSpec::validate() const {
  if (order_count == 0) throw std::invalid_argument("basis: order count must be positive");
}

nlohmann::json to_json(const BasisSpec& spec) {
  return {{"N", spec.order_count}, {"family", family_name(spec.family)}};
}

BasisSpec basis_spec_from_json(const nlohmann::json& j) {
  BasisSpec s;
  s.order_count = j.value("N", s.order_count);
  const std::string fam = j.value("family", std::string(family_name(s.family)));
  if (fam == "chebyshev2") s.family = PolynomialFamily::chebyshev2;
  else if (fam == "chebyshev1") s.family = PolynomialFamily::chebyshev1;
  else if (fam == "legendre") s.family = PolynomialFamily::legendre;
  else throw std::invalid_argument("basis: unknown family '" + fam + "'");
  s.validate();
  return s;
}

double basis_polynomial(PolynomialFamily family, std::size_t n, double x) {
  double p0 = 1.0, p1 = 0.0;
  switch (family) {
    case PolynomialFamily::chebyshev2:
      p1 = 2.0 * x;
      for (std::size_t m = 1; m < n; ++m) p0 = std::exchange(p1, 2.0 * x * p1 - p0);
      return std::sqrt(2.0 / kPi) * (n == 0 ? 1.0 : p1);
    case PolynomialFamily::chebyshev1:
      if (n == 0) return 1.0 / std::sqrt(kPi);
      p1 = x;
      for (std::size_t m = 1; m < n; ++m) p0 = std::exchange(p1, 2.0 * x * p1 - p0);
      return std::sqrt(2.0 / kPi) * p1;
    case PolynomialFamily::legendre:
      p1 = x;
      for (std::size_t m = 1; m < n; ++m) {
        const double md = static_cast<double>(m);
        p0 = std::exchange(p1, ((2.0 * md + 1.0) * x * p1 - md * p0) / (md + 1.0));
      }
      return std::sqrt((2.0 * static_cast<double>(n) + 1.0) / 2.0) * (n == 0 ? 1.0 : p1);
  }
  return 0.0;
}

std::vector<BasisIndex> basis_indices(const BasisSpec& spec) {
  std::vector<BasisIndex> idx;
  for (std::size_t n = 0; n < spec.order_count; ++n)
    for (std::size_t k = n % 2; k <= n; k += 2) idx.push_back({n, k});
  return idx;
}

std::optional<std::size_t> basis_slot(const BasisSpec& spec, std::size_t n, std::size_t k) {
  if (n >= spec.order_count || k > n || (n + k) % 2 != 0) return std::nullopt;
  std::size_t slot = 0;
  for (std::size_t m = 0; m < n; ++m) slot += m / 2 + 1;
  return slot + k / 2;
}

double real_inner(const BasisCoefficients& a, const BasisCoefficients& b) {
  if (a.values.size() != b.values.size()) throw std::invalid_argument("coefficients: size mismatch");
  double s = 0.0;
  for (std::size_t p = 0; p < a.values.size(); ++p) s += (std::conj(a.values[p]) * b.values[p]).real();
  return s;
}

BasisOperator::BasisOperator(const FanGeometry& geom, const BasisSpec& spec)
    : geom_(geom), spec_(spec), indices_(basis_indices(spec)) {
  spec.validate();
  if (!(geom.fov_radius > 0)) throw std::invalid_argument("basis: fov must be positive");
  const auto bins = static_cast<Eigen::Index>(geom.bin_count);
  const auto slots = static_cast<Eigen::Index>(indices_.size());
  phi_ = Eigen::MatrixXcd::Zero(bins, slots);
  std::vector<double> radial(spec.order_count);
  for (Eigen::Index j = 0; j < bins; ++j) {
    const ParallelCoords pc = fan_to_parallel({0.0, geom.bin_center(static_cast<std::size_t>(j))}, geom.source_radius);
    const double x = pc.s / geom.fov_radius;
    if (std::abs(x) >= 1.0) continue;
    const double w = std::sqrt(1.0 - x * x);
    for (std::size_t n = 0; n < spec.order_count; ++n) radial[n] = basis_polynomial(spec.family, n, x) * w;
    for (Eigen::Index p = 0; p < slots; ++p) {
      const auto& bi = indices_[static_cast<std::size_t>(p)];
      phi_(j, p) = std::polar(radial[bi.n], static_cast<double>(bi.k) * pc.theta);
    }
  }
  const auto rows = static_cast<Eigen::Index>(geom.angle_count());
  angular_.resize(rows, static_cast<Eigen::Index>(spec.order_count));
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < angular_.cols(); ++k)
      angular_(i, k) = std::polar(1.0, static_cast<double>(k) * geom.angles[static_cast<std::size_t>(i)]);
}

Sinogram BasisOperator::synthesize(const BasisCoefficients& c) const {
  if (c.values.size() != indices_.size()) throw std::invalid_argument("synthesize: coefficient count mismatch");
  const auto bins = phi_.rows();
  Eigen::MatrixXcd per_order = Eigen::MatrixXcd::Zero(angular_.cols(), bins);  // orders x bins
  for (std::size_t p = 0; p < indices_.size(); ++p) {
    const cplx wc = slot_weight(p) * c.values[p];
    if (wc == cplx{}) continue;
    per_order.row(static_cast<Eigen::Index>(indices_[p].k)) += wc * phi_.col(static_cast<Eigen::Index>(p)).transpose();
  }
  const RowMatrix g = (angular_ * per_order).real();
  Sinogram out = Sinogram::zeros(geom_);
  std::copy(g.data(), g.data() + g.size(), out.values.begin());
  return out;
}

BasisCoefficients BasisOperator::analyze(const Sinogram& g, const KnownMask& mask) const {
  if (g.rows() != geom_.angle_count() || g.cols() != geom_.bin_count)
    throw std::invalid_argument("analyze: sinogram shape mismatch");
  mask.validate(g.rows(), g.cols());
  RowMatrix masked(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
  for (std::size_t k = 0; k < g.values.size(); ++k) masked.data()[k] = mask.known[k] ? g.values[k] : 0.0;
  const Eigen::MatrixXcd per_order = angular_.adjoint() * masked.cast<cplx>();  // orders x bins
  BasisCoefficients c{std::vector<cplx>(indices_.size())};
  for (std::size_t p = 0; p < indices_.size(); ++p) {
    const auto col = phi_.col(static_cast<Eigen::Index>(p));
    const auto row = per_order.row(static_cast<Eigen::Index>(indices_[p].k));
    c.values[p] = slot_weight(p) * (col.adjoint() * row.transpose())(0, 0);
  }
  return c;
}

Sinogram synthesize(const BasisCoefficients& c, const FanGeometry& geom, const BasisSpec& spec) {
  return BasisOperator(geom, spec).synthesize(c);
}

BasisCoefficients analyze(const Sinogram& g, const KnownMask& mask, const BasisSpec& spec) {
  return BasisOperator(g.geom, spec).analyze(g, mask);
}

double GramCache::trace_per_slot() const {
  return gram.trace().real() / static_cast<double>(gram.rows());
}

std::string hash_geometry(const FanGeometry& geom) { return fnv1a(to_json(geom).dump()); }

std::string hash_mask(const KnownMask& mask) {
  const std::string shape = std::to_string(mask.rows) + "x" + std::to_string(mask.cols);
  return fnv1a(mask.known.data(), mask.known.size(), std::stoull(fnv1a(shape), nullptr, 16));
}

std::string hash_basis(const BasisSpec& spec) { return fnv1a(to_json(spec).dump()); }

GramCache compute_gram(const KnownMask& mask, const BasisOperator& basis) {
  const FanGeometry& geom = basis.geometry();
  mask.validate(geom.angle_count(), geom.bin_count);
  const auto& idx = basis.indices();
  const auto slots = static_cast<Eigen::Index>(idx.size());
  const auto orders = static_cast<long>(basis.spec().order_count);

  // rows sharing a bin pattern share the radial Gram factors
  std::map<std::vector<std::uint8_t>, std::vector<std::size_t>> patterns;
  for (std::size_t i = 0; i < mask.rows; ++i) {
    std::vector<std::uint8_t> pat(mask.known.begin() + static_cast<std::ptrdiff_t>(i * mask.cols),
                                  mask.known.begin() + static_cast<std::ptrdiff_t>((i + 1) * mask.cols));
    if (std::find(pat.begin(), pat.end(), 1) == pat.end()) continue;
    patterns[std::move(pat)].push_back(i);
  }

  GramCache out;
  out.gram = Eigen::MatrixXcd::Zero(slots, slots);
  out.conj_gram = Eigen::MatrixXcd::Zero(slots, slots);
  for (const auto& [pat, rows] : patterns) {
    std::vector<Eigen::Index> bins;
    for (std::size_t j = 0; j < pat.size(); ++j)
      if (pat[j]) bins.push_back(static_cast<Eigen::Index>(j));
    Eigen::MatrixXcd phi(static_cast<Eigen::Index>(bins.size()), slots);
    for (std::size_t b = 0; b < bins.size(); ++b) phi.row(static_cast<Eigen::Index>(b)) = basis.radial_table().row(bins[b]);
    const Eigen::MatrixXcd same = phi.adjoint() * phi;
    const Eigen::MatrixXcd cross = phi.adjoint() * phi.conjugate();
    // angular sums A(kappa) = sum_i e^{i kappa beta_i}, kappa in [-2(N-1), 2(N-1)]
    std::vector<cplx> ang(static_cast<std::size_t>(4 * orders + 1));
    for (long kappa = -2 * orders; kappa <= 2 * orders; ++kappa) {
      cplx s{};
      for (auto i : rows) s += std::polar(1.0, static_cast<double>(kappa) * geom.angles[i]);
      ang[static_cast<std::size_t>(kappa + 2 * orders)] = s;
    }
    auto a = [&](long kappa) { return ang[static_cast<std::size_t>(kappa + 2 * orders)]; };
    for (Eigen::Index p = 0; p < slots; ++p) {
      const auto kp = static_cast<long>(idx[static_cast<std::size_t>(p)].k);
      const double wp = basis.slot_weight(static_cast<std::size_t>(p));
      for (Eigen::Index q = 0; q < slots; ++q) {
        const auto kq = static_cast<long>(idx[static_cast<std::size_t>(q)].k);
        const double scale = 0.5 * wp * basis.slot_weight(static_cast<std::size_t>(q));
        out.gram(p, q) += scale * a(kq - kp) * same(p, q);
        out.conj_gram(p, q) += scale * a(-kp - kq) * cross(p, q);
      }
    }
  }
  out.gram = (0.5 * (out.gram + out.gram.adjoint())).eval();
  out.conj_gram = (0.5 * (out.conj_gram + out.conj_gram.transpose())).eval();
  out.geometry_hash = hash_geometry(geom);
  out.mask_hash = hash_mask(mask);
  out.basis_hash = hash_basis(basis.spec());
  return out;
}

GramCache compute_gram(const KnownMask& mask, const FanGeometry& geom, const BasisSpec& spec) {
  return compute_gram(mask, BasisOperator(geom, spec));
}

void save_gram(const GramCache& gram, const std::filesystem::path& cache_dir) {
  std::filesystem::create_directories(cache_dir);
  const std::string stem = gram_stem(gram.geometry_hash, gram.mask_hash, gram.basis_hash);
  const auto n = static_cast<std::size_t>(gram.gram.rows());
  auto write_part = [&](const Eigen::MatrixXcd& m, bool imag, const std::string& suffix) {
    std::vector<double> v(n * n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        const cplx z = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        v[r * n + c] = imag ? z.imag() : z.real();
      }
    write_raster(cache_dir / (stem + suffix), Raster::from_f64({n, n}, v));
  };
  write_part(gram.gram, false, ".gram.re");
  write_part(gram.gram, true, ".gram.im");
  write_part(gram.conj_gram, false, ".conj.re");
  write_part(gram.conj_gram, true, ".conj.im");
  std::ofstream os(cache_dir / (stem + ".json"));
  os << nlohmann::json{{"geometry_hash", gram.geometry_hash},
                       {"mask_hash", gram.mask_hash},
                       {"basis_hash", gram.basis_hash},
                       {"size", n}}
            .dump(1)
     << '\n';
  if (!os) throw std::runtime_error("gram cache: cannot write sidecar in " + cache_dir.string());
}

std::optional<GramCache> load_gram(const std::string& geometry_hash, const std::string& mask_hash,
                                   const std::string& basis_hash, const std::filesystem::path& cache_dir) {
  const std::string stem = gram_stem(geometry_hash, mask_hash, basis_hash);
  std::ifstream sidecar(cache_dir / (stem + ".json"));
  if (!sidecar) return std::nullopt;
  const auto meta = nlohmann::json::parse(sidecar);
  if (meta.value("geometry_hash", "") != geometry_hash || meta.value("mask_hash", "") != mask_hash ||
      meta.value("basis_hash", "") != basis_hash)
    return std::nullopt;
  auto read_pair = [&](const std::string& part) {
    const auto re = read_raster(cache_dir / (stem + part + ".re")).to_f64();
    const auto im = read_raster(cache_dir / (stem + part + ".im")).to_f64();
    const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(re.size()))));
    if (re.size() != im.size() || static_cast<std::size_t>(n * n) != re.size())
      throw std::runtime_error("gram cache: inconsistent matrix files for " + stem);
    Eigen::MatrixXcd m(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c)
        m(r, c) = {re[static_cast<std::size_t>(r * n + c)], im[static_cast<std::size_t>(r * n + c)]};
    return m;
  };
  GramCache g;
  g.gram = read_pair(".gram");
  g.conj_gram = read_pair(".conj");
  g.geometry_hash = geometry_hash;
  g.mask_hash = mask_hash;
  g.basis_hash = basis_hash;
  return g;
}

GramCache load_or_compute_gram(const KnownMask& mask, const BasisOperator& basis,
                               const std::filesystem::path& cache_dir) {
  const auto gh = hash_geometry(basis.geometry());
  const auto mh = hash_mask(mask);
  const auto bh = hash_basis(basis.spec());
  if (auto cached = load_gram(gh, mh, bh, cache_dir)) return std::move(*cached);
  GramCache g = compute_gram(mask, basis);
  save_gram(g, cache_dir);
  return g;
}

std::filesystem::path default_cache_dir() {
  if (const char* env = std::getenv("CTKIT_CACHE_DIR"); env && *env) return env;
  return std::filesystem::current_path() / "ctkit-cache";
}

RidgeSolver::RidgeSolver(const GramCache& gram, const BasisSpec& spec, double lambda)
    : indices_(basis_indices(spec)), lambda_(lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("fit: lambda must be nonnegative");
  if (static_cast<std::size_t>(gram.gram.rows()) != indices_.size())
    throw std::invalid_argument("fit: gram size does not match the basis");
  const RealLayout layout = real_layout(indices_);
  real_slot_ = layout.re;
  imag_slot_ = layout.im;
  Eigen::MatrixXd system = assemble_real_system(gram, layout);
  system.diagonal().array() += lambda;
  llt_.compute(system);
  const bool singular = llt_.info() != Eigen::Success || (lambda == 0.0 && llt_.rcond() < 1e-13);
  if (singular)
    throw std::domain_error("fit: normal equations are singular for this mask; use a ridge lambda > 0");
}

BasisCoefficients RidgeSolver::solve(const BasisCoefficients& rhs) const {
  const RealLayout layout{real_slot_, imag_slot_, static_cast<std::size_t>(llt_.rows())};
  return from_real(llt_.solve(to_real(rhs, layout)), layout);
}

namespace {
void check_gram_matches(const GramCache& gram, const KnownMask& mask, const BasisOperator& basis) {
  if (gram.mask_hash != hash_mask(mask) || gram.geometry_hash != hash_geometry(basis.geometry()) ||
      gram.basis_hash != hash_basis(basis.spec()))
    throw std::invalid_argument("fit: gram was computed for a different mask, geometry or basis");
}
}  // namespace

BasisCoefficients fit(const Sinogram& g, const KnownMask& mask, double lambda, const GramCache& gram,
                      const BasisOperator& basis) {
  check_gram_matches(gram, mask, basis);
  const RidgeSolver solver(gram, basis.spec(), lambda);
  return solver.solve(basis.analyze(g, mask));
}

Sinogram extrapolate(const Sinogram& g, const KnownMask& mask, double lambda, const GramCache& gram,
                     const BasisOperator& basis) {
  const BasisCoefficients c = fit(g, mask, lambda, gram, basis);
  Sinogram out = basis.synthesize(c);
  for (std::size_t k = 0; k < out.values.size(); ++k)
    if (mask.known[k]) out.values[k] = g.values[k];
  return out;
}

std::vector<double> range_residual(const Sinogram& g, const BasisOperator& basis) {
  const KnownMask full = KnownMask::all(g.rows(), g.cols());
  const GramCache gram = compute_gram(full, basis);
  const auto& idx = basis.indices();
  const RealLayout layout = real_layout(idx);
  Eigen::MatrixXd system = assemble_real_system(gram, layout);
  // a whisper of ridge keeps the factorization defined for coarse samplings
  system.diagonal().array() += 1e-14 * system.trace() / static_cast<double>(layout.dims);
  const Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() != Eigen::Success) throw std::runtime_error("range_residual: basis Gram is not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();
  const Eigen::VectorXd rhs = to_real(basis.analyze(g, full), layout);
  const double energy = dot(g.values, g.values);

  std::vector<double> out;
  double best = 1.0;
  std::size_t slot = 0;
  for (std::size_t n = 0; n < basis.spec().order_count; ++n) {
    while (slot < idx.size() && idx[slot].n <= n) ++slot;
    const auto dims = static_cast<Eigen::Index>(slot < idx.size() ? layout.re[slot] : layout.dims);
    const auto block = lower.topLeftCorner(dims, dims);
    Eigen::VectorXd z = block.triangularView<Eigen::Lower>().solve(rhs.head(dims));
    z = block.transpose().triangularView<Eigen::Upper>().solve(z);
    Eigen::VectorXd full_z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.dims));
    full_z.head(dims) = z;
    const Sinogram fitted = basis.synthesize(from_real(full_z, layout));
    double res = 0.0;
    for (std::size_t k = 0; k < g.values.size(); ++k) {
      const double d = g.values[k] - fitted.values[k];
      res += d * d;
    }
    const double r = energy > 0 ? std::sqrt(res / energy) : 0.0;
    best = std::min(best, r);  // exact projections are nested; clip rounding wiggles
    out.push_back(best);
  }
  return out;
}

std::optional<std::ptrdiff_t> canonical_wedge_shift(const KnownMask& mask, const FanGeometry& geom) {
  if (!geom.is_uniform_full_scan() || mask.rows != geom.angle_count() || mask.cols != geom.bin_count)
    return std::nullopt;
  std::vector<bool> known(mask.rows);
  for (std::size_t i = 0; i < mask.rows; ++i) {
    std::size_t cnt = 0;
    for (std::size_t j = 0; j < mask.cols; ++j) cnt += mask.at(i, j);
    if (cnt != 0 && cnt != mask.cols) return std::nullopt;
    known[i] = cnt != 0;
  }
  std::size_t starts = 0, start = 0;
  for (std::size_t i = 0; i < mask.rows; ++i) {
    const bool prev = known[(i + mask.rows - 1) % mask.rows];
    if (known[i] && !prev) {
      ++starts;
      start = i;
    }
  }
  if (starts == 0) return std::ptrdiff_t{0};  // all rows measured
  if (starts > 1) return std::nullopt;
  return -static_cast<std::ptrdiff_t>(start);
}

Extrapolator::Extrapolator(const FanGeometry& geom, BasisSpec spec, double lambda_scale,
                           std::optional<std::filesystem::path> cache_dir)
    : basis_(geom, spec), lambda_scale_(lambda_scale), cache_dir_(std::move(cache_dir)) {
  if (!(lambda_scale >= 0)) throw std::invalid_argument("extrapolator: lambda scale must be nonnegative");
}

const Extrapolator::Entry& Extrapolator::entry_for(const KnownMask& mask) const {
  const std::string key = hash_mask(mask);
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it != entries_.end()) return *it->second;
  auto e = std::make_unique<Entry>();
  e->gram = cache_dir_ ? load_or_compute_gram(mask, basis_, *cache_dir_) : compute_gram(mask, basis_);
  e->solver = std::make_unique<RidgeSolver>(e->gram, basis_.spec(), lambda_scale_ * e->gram.trace_per_slot());
  return *entries_.emplace(key, std::move(e)).first->second;
}

Sinogram Extrapolator::extrapolate(const Sinogram& g, const KnownMask& mask) const {
  mask.validate(g.rows(), g.cols());
  const auto shift = canonical_wedge_shift(mask, g.geom);
  const Sinogram gc = shift ? roll_rows(g, *shift) : g;
  const KnownMask mc = shift ? roll_rows(mask, *shift) : mask;
  const Entry& e = entry_for(mc);
  Sinogram out = basis_.synthesize(e.solver->solve(basis_.analyze(gc, mc)));
  for (std::size_t k = 0; k < out.values.size(); ++k)
    if (mc.known[k]) out.values[k] = gc.values[k];
  return shift ? roll_rows(out, -*shift) : out;
}

}  // namespace ctkit
