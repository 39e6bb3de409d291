#pragma once

#include "dmgrad/core.hpp"
#include "dmgrad/manifold_opt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace dmgrad {

using IntVector = Eigen::Matrix<long, Eigen::Dynamic, 1>;

/// Square basis matrix (columns b_1..b_n) with determinant 1.
class LatticeBasis
{
public:
  /// Wraps a matrix already in SL(n); use sl_retract for arbitrary input.
  static LatticeBasis from_unimodular(Matrix columns, double tol = 1e-10)
  {
    detail::require(columns.rows() == columns.cols() && columns.rows() >= 1, "LatticeBasis: matrix must be square");
    detail::require(std::abs(columns.determinant() - 1.0) <= tol, "LatticeBasis: determinant must equal 1");
    return LatticeBasis(std::move(columns));
  }

  Eigen::Index n() const { return columns_.cols(); }
  const Matrix& columns() const { return columns_; }

  Vector flatten() const { return columns_.reshaped(); }
  static Matrix unflatten(const Vector& x, Eigen::Index n) { return x.reshaped(n, n); }

private:
  explicit LatticeBasis(Matrix columns) : columns_(std::move(columns)) {}
  Matrix columns_;
  friend LatticeBasis sl_retract(const Matrix& b);
};

/// Multiplies the first column by sign(det B) and scales everything by
/// |det B|^{-1/n}.
inline LatticeBasis sl_retract(const Matrix& b)
{
  detail::require(b.rows() == b.cols() && b.rows() >= 1, "sl_retract: matrix must be square");
  const double det = b.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-300) throw NumericalError("sl_retract: matrix is singular");
  Matrix out = b;
  if (det < 0.0) out.col(0) = -out.col(0);
  out /= std::pow(std::abs(det), 1.0 / static_cast<double>(b.rows()));
  return LatticeBasis(std::move(out));
}

struct ShortestVectorResult
{
  double length = 0.0;
  IntVector coeffs;
};

namespace detail {

/// Orders coefficient vectors: negate so the leading nonzero entry is
/// positive, then compare lexicographically.
inline IntVector canonical_sign(IntVector z)
{
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z(i) == 0) continue;
    if (z(i) < 0) z = -z;
    break;
  }
  return z;
}

inline bool lex_less(const IntVector& a, const IntVector& b)
{
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a(i) != b(i)) return a(i) < b(i);
  return false;
}

/// Relative slack under which two squared lengths count as equal.
inline constexpr double kTieTolerance = 1e-9;

/// Keeps the shortest vectors seen so far, with ties resolved by
/// canonical_sign + lex order.
struct ShortestTracker
{
  double best2 = std::numeric_limits<double>::infinity();
  IntVector best;

  void offer(double len2, const IntVector& z)
  {
    const IntVector c = canonical_sign(z);
    if (len2 < best2 * (1.0 - kTieTolerance)) {
      best2 = len2;
      best = c;
    } else if (len2 <= best2 * (1.0 + kTieTolerance) && lex_less(c, best)) {
      best2 = std::min(best2, len2);
      best = c;
    }
  }
};

inline void require_full_rank(const Matrix& b, const char* who)
{
  require(b.rows() == b.cols() && b.rows() >= 1, std::string(who) + ": basis must be square");
  Eigen::FullPivLU<Matrix> lu(b);
  if (lu.rank() < b.cols()) throw std::invalid_argument(std::string(who) + ": basis is rank deficient");
}

} // namespace detail

/// Exact shortest nonzero lattice vector by depth-first enumeration.
///
/// The basis is size-reduced (unimodular column operations, tracked so the
/// result is expressed in the caller's basis) and triangularized by QR. The
/// search radius starts at the shortest reduced column and shrinks on every
/// improvement; candidates within the tie tolerance are compared by the
/// canonical coefficient order.
inline ShortestVectorResult shortest_vector(const Matrix& b)
{
  detail::require_full_rank(b, "shortest_vector");
  const Eigen::Index n = b.cols();

  Matrix r = Eigen::HouseholderQR<Matrix>(b).matrixQR().triangularView<Eigen::Upper>();
  Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> u = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>::Identity(n, n);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index j = i - 1; j >= 0; --j) {
      const double q = std::round(r(j, i) / r(j, j));
      if (q == 0.0) continue;
      r.col(i) -= q * r.col(j);
      u.col(i) -= static_cast<long>(q) * u.col(j);
    }
  }

  detail::ShortestTracker tracker;
  double radius2 = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    IntVector z = u.col(i);
    const double len2 = (b * z.cast<double>()).squaredNorm();
    tracker.offer(len2, z);
    radius2 = std::min(radius2, r.col(i).squaredNorm());
  }
  radius2 *= 1.0 + detail::kTieTolerance;

  IntVector y = IntVector::Zero(n);
  std::function<void(Eigen::Index, double)> descend = [&](Eigen::Index level, double partial) {
    double center = 0.0;
    for (Eigen::Index j = level + 1; j < n; ++j) center -= r(level, j) * static_cast<double>(y(j));
    center /= r(level, level);
    const double diag2 = r(level, level) * r(level, level);
    const long y0 = std::lround(center);
    for (long d = 0;; ++d) {
      if (d > 0 && diag2 * (static_cast<double>(d) - 0.5) * (static_cast<double>(d) - 0.5) + partial > radius2) break;
      const long candidates[2] = {y0 + d, y0 - d};
      for (int c = 0; c < (d == 0 ? 1 : 2); ++c) {
        const double off = static_cast<double>(candidates[c]) - center;
        const double len2 = partial + diag2 * off * off;
        if (len2 > radius2) continue;
        y(level) = candidates[c];
        if (level > 0) {
          descend(level - 1, len2);
        } else if (!y.isZero()) {
          const IntVector z = u * y;
          const double exact2 = (b * z.cast<double>()).squaredNorm();
          tracker.offer(exact2, z);
          radius2 = std::min(radius2, tracker.best2 * (1.0 + detail::kTieTolerance));
        }
      }
    }
    y(level) = 0;
  };
  descend(n - 1, 0.0);

  return {std::sqrt((b * tracker.best.cast<double>()).squaredNorm()), tracker.best};
}

inline ShortestVectorResult shortest_vector(const LatticeBasis& b) { return shortest_vector(b.columns()); }

/// Per-coordinate half-widths of a coefficient box that provably contains
/// every shortest vector: |z_i| <= |row_i(B^{-1})| |Bz|, and |Bz| is at most
/// the shortest nonzero vector with coefficients in {-1, 0, 1}. Integer z_i
/// lets the bound be floored.
inline IntVector certified_box(const Matrix& b)
{
  detail::require_full_rank(b, "certified_box");
  const Eigen::Index n = b.cols();
  double radius2 = std::numeric_limits<double>::infinity();
  IntVector z = IntVector::Constant(n, -1);
  while (true) {
    if (!z.isZero()) radius2 = std::min(radius2, (b * z.cast<double>()).squaredNorm());
    Eigen::Index i = 0;
    while (i < n && z(i) == 1) z(i++) = -1;
    if (i == n) break;
    ++z(i);
  }
  const Vector rows = b.inverse().rowwise().norm();
  IntVector box(n);
  for (Eigen::Index i = 0; i < n; ++i)
    box(i) = std::max<long>(1, static_cast<long>(std::floor(std::sqrt(radius2) * rows(i) * (1.0 + 1e-12))));
  return box;
}

/// Smallest |z|_inf bound accepted by shortest_vector_bruteforce.
inline long certified_bound(const Matrix& b) { return certified_box(b).maxCoeff(); }

/// Exhaustive scan of all nonzero z with |z|_inf <= bound. Coordinates are
/// additionally clipped to the certified box, which holds every minimizer.
inline ShortestVectorResult shortest_vector_bruteforce(const Matrix& b, long bound)
{
  detail::require_full_rank(b, "shortest_vector_bruteforce");
  detail::require(bound >= 1, "shortest_vector_bruteforce: bound must be positive");
  const IntVector box = certified_box(b);
  if (bound < box.maxCoeff())
    throw NumericalError("shortest_vector_bruteforce: bound " + std::to_string(bound) +
                         " is not certified; need at least " + std::to_string(box.maxCoeff()));
  const Eigen::Index n = b.cols();
  detail::ShortestTracker tracker;
  IntVector z = -box;
  Vector v = b * z.cast<double>();  // updated incrementally, re-evaluated for candidates
  while (true) {
    if (!z.isZero() && v.squaredNorm() <= tracker.best2 * (1.0 + 1e-6))
      tracker.offer((b * z.cast<double>()).squaredNorm(), z);
    Eigen::Index i = 0;
    while (i < n && z(i) == box(i)) {
      v -= static_cast<double>(2 * box(i)) * b.col(i);
      z(i) = -box(i);
      ++i;
    }
    if (i == n) break;
    ++z(i);
    v += b.col(i);
  }
  return {std::sqrt((b * tracker.best.cast<double>()).squaredNorm()), tracker.best};
}

inline double unit_ball_volume(Eigen::Index n)
{
  const double h = 0.5 * static_cast<double>(n);
  return std::pow(std::numbers::pi, h) / std::tgamma(h + 1.0);
}

/// Density V_n (g/2)^n of the packing by balls of radius g/2.
inline double packing_density(const LatticeBasis& b)
{
  const double g = shortest_vector(b).length;
  return unit_ball_volume(b.n()) * std::pow(0.5 * g, static_cast<double>(b.n()));
}

/// Hexagonal lattice scaled to determinant 1.
inline LatticeBasis hexagonal_basis()
{
  const double s = std::sqrt(2.0 / std::sqrt(3.0));
  Matrix b(2, 2);
  b << s, 0.5 * s, 0.0, 0.5 * std::sqrt(3.0) * s;
  return LatticeBasis::from_unimodular(b);
}

/// Face-centred cubic lattice scaled to determinant 1.
inline LatticeBasis fcc_basis()
{
  Matrix b(3, 3);
  b << 1, 1, 0, 1, 0, 1, 0, 1, 1;
  return sl_retract(b);
}

/// m perturbations B + sigma G (G i.i.d. standard normal, entrywise), each
/// retracted onto SL(n). Near-singular draws are redrawn a bounded number
/// of times.
inline std::vector<LatticeBasis> sample_neighbors(const LatticeBasis& b, double sigma, int m, std::uint64_t seed)
{
  detail::require(sigma > 0.0, "sample_neighbors: sigma must be positive");
  detail::require(m >= 1, "sample_neighbors: m must be positive");
  constexpr int kMaxRedraws = 100;
  Rng rng(seed);
  const Eigen::Index n = b.n();
  std::vector<LatticeBasis> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    for (int attempt = 0;; ++attempt) {
      const Matrix draw = b.columns() + sigma * standard_normal(n, n, rng);
      const double det = draw.determinant();
      if (std::isfinite(det) && std::abs(det) >= 1e-300) {
        out.push_back(sl_retract(draw));
        break;
      }
      if (attempt == kMaxRedraws) throw NumericalError("sample_neighbors: repeated singular draws");
    }
  }
  return out;
}

inline Retraction sl_retraction(Eigen::Index n, double tol = 1e-10)
{
  return {[n](const Vector&, const Vector& z) { return sl_retract(LatticeBasis::unflatten(z, n)).flatten(); },
          [n, tol](const Vector& x) {
            return x.size() == n * n && std::abs(LatticeBasis::unflatten(x, n).determinant() - 1.0) <= tol;
          }};
}

/// How the kernel bandwidth relates to the perturbation scale sigma.
enum class PackCoupling
{
  bandwidth_is_sigma,  ///< t = sigma and the direction is raw_v / sigma^2
  raw_v                ///< caller's t, undivided raw_v
};

struct PackOptions
{
  int n = 2;
  double sigma = 0.02;
  int samples = 20;
  PackCoupling coupling = PackCoupling::bandwidth_is_sigma;
  std::uint64_t seed = 0;
};

struct PackRow
{
  long iter = 0;
  double g = 0.0;
  double density = 0.0;
  double lambda = 0.0;
};

struct PackResult
{
  LatticeBasis best_basis = LatticeBasis::from_unimodular(Matrix::Identity(1, 1));
  double best_density = 0.0;
  IterateTrace trace;
  std::vector<PackRow> rows;
  double max_g_seen = 0.0;        ///< over every basis evaluated, samples included
  long bases_evaluated = 0;
};

/// Maximizes g (minimizes -g) over SL(n) from the identity basis.
inline PackResult pack(const PackOptions& options, OptimizerParams params)
{
  detail::require(options.n >= 2, "pack: n must be at least 2");
  detail::require(options.samples >= 1, "pack: need at least one sample per step");
  const Eigen::Index n = options.n;
  if (options.coupling == PackCoupling::bandwidth_is_sigma) {
    params.kernel = KernelParams(options.sigma, params.kernel.delta(), static_cast<std::size_t>(options.samples));
    params.divide_by_t2 = true;
  } else {
    params.divide_by_t2 = false;
  }

  PackResult out;
  const Objective f = [&](const Vector& x) {
    const double g = shortest_vector(LatticeBasis::unflatten(x, n)).length;
    out.max_g_seen = std::max(out.max_g_seen, g);
    ++out.bases_evaluated;
    return -g;
  };
  std::uint64_t draw = 0;
  const Sampler sampler = [&](const Vector& x) {
    const auto bases = sample_neighbors(sl_retract(LatticeBasis::unflatten(x, n)), options.sigma, options.samples,
                                        derive_seed(options.seed, draw++));
    NeighborCloud cloud;
    cloud.base = x;
    cloud.samples.resize(options.samples, n * n);
    for (int i = 0; i < options.samples; ++i) cloud.samples.row(i) = bases[static_cast<std::size_t>(i)].flatten().transpose();
    return cloud;
  };

  out.trace = minimize(f, Matrix::Identity(n, n).reshaped(), sampler, sl_retraction(n), params);
  const double vn = unit_ball_volume(n);
  for (const auto& it : out.trace.iterates) {
    const double g = -it.f_value;
    out.rows.push_back({it.k, g, vn * std::pow(0.5 * g, static_cast<double>(n)), it.lambda});
  }
  out.best_basis = sl_retract(LatticeBasis::unflatten(out.trace.best_point, n));
  out.best_density = vn * std::pow(-0.5 * out.trace.best_f, static_cast<double>(n));
  return out;
}

/// All lattice points B z with |B z| <= radius, one per row, with their
/// coefficient vectors.
inline std::pair<Matrix, std::vector<IntVector>> lattice_points(const LatticeBasis& b, double radius)
{
  detail::require(radius > 0.0, "lattice_points: radius must be positive");
  const Matrix& m = b.columns();
  const Eigen::Index n = b.n();
  const long bound = static_cast<long>(std::ceil(radius * m.inverse().rowwise().norm().maxCoeff()));
  std::vector<Vector> pts;
  std::vector<IntVector> coeffs;
  IntVector z = IntVector::Constant(n, -bound);
  while (true) {
    const Vector p = m * z.cast<double>();
    if (p.norm() <= radius) {
      pts.push_back(p);
      coeffs.push_back(z);
    }
    Eigen::Index i = 0;
    while (i < n && z(i) == bound) z(i++) = -bound;
    if (i == n) break;
    ++z(i);
  }
  Matrix out(static_cast<Eigen::Index>(pts.size()), n);
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return {out, coeffs};
}

} // namespace dmgrad
