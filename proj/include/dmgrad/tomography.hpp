#pragma once

#include "dmgrad/core.hpp"
#include "dmgrad/diffusion_map.hpp"
#include "dmgrad/kernel_gradient.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace dmgrad::tomo {

// Geometry. Pixel (r, c) of an n x n image has centre
//   x = c - (n - 1)/2,   y = (n - 1)/2 - r
// in pixel units; the physical square [-extent, extent]^2 is tiled by the
// n x n cells. Projections are expressed in pixel units as well: detector
// i sits at x_i = i - (l - 1)/2 (spacing h = 1) and
//   P_theta f(s) = int f(s (cos t, sin t) + u (-sin t, cos t)) du.

struct Image
{
  Matrix pixels;
  double extent = 1.0;

  Eigen::Index size() const { return pixels.rows(); }
};

struct ProjectionSet
{
  Vector detectors;
  double h = 1.0;
  Matrix rows;  ///< one projection per row
  std::optional<std::vector<double>> true_angles;

  Eigen::Index count() const { return rows.rows(); }

  /// Copy without the hidden angles, for the recovery path.
  ProjectionSet stripped() const { return {detectors, h, rows, std::nullopt}; }
};

inline Vector detector_grid(Eigen::Index l)
{
  Vector x(l);
  for (Eigen::Index i = 0; i < l; ++i) x(i) = static_cast<double>(i) - 0.5 * static_cast<double>(l - 1);
  return x;
}

// ---------------------------------------------------------------------------
// Phantom and forward model.

struct Ellipse
{
  double intensity, a, b, x0, y0, phi_deg;
};

/// Modified Shepp-Logan table (higher-contrast variant), physical units.
inline const std::array<Ellipse, 10>& shepp_logan_ellipses()
{
  static const std::array<Ellipse, 10> table{{
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
  }};
  return table;
}

/// Renders the phantom with 4 x 4 supersampling per pixel, clamped at 0.
inline Image shepp_logan(Eigen::Index n)
{
  detail::require(n >= 32, "shepp_logan: grid size must be at least 32");
  constexpr int kSuper = 4;
  Image img{Matrix::Zero(n, n), 1.0};
  const double cell = 2.0 / static_cast<double>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int sr = 0; sr < kSuper; ++sr) {
        for (int sc = 0; sc < kSuper; ++sc) {
          const double x = -1.0 + cell * (static_cast<double>(c) + (sc + 0.5) / kSuper);
          const double y = 1.0 - cell * (static_cast<double>(r) + (sr + 0.5) / kSuper);
          double v = 0.0;
          for (const auto& e : shepp_logan_ellipses()) {
            const double phi = e.phi_deg * std::numbers::pi / 180.0;
            const double dx = x - e.x0;
            const double dy = y - e.y0;
            const double u = dx * std::cos(phi) + dy * std::sin(phi);
            const double w = -dx * std::sin(phi) + dy * std::cos(phi);
            if ((u * u) / (e.a * e.a) + (w * w) / (e.b * e.b) <= 1.0) v += e.intensity;
          }
          acc += v;
        }
      }
      img.pixels(r, c) = std::max(0.0, acc / (kSuper * kSuper));
    }
  }
  return img;
}

/// Bilinear sample at pixel-unit coordinates (x, y); zero outside the grid.
inline double sample_bilinear(const Matrix& pixels, double x, double y)
{
  const auto n = pixels.rows();
  const double half = 0.5 * static_cast<double>(n - 1);
  const double cf = x + half;
  const double rf = half - y;
  if (cf <= -1.0 || rf <= -1.0 || cf >= static_cast<double>(n) || rf >= static_cast<double>(n)) return 0.0;
  const auto c0 = static_cast<Eigen::Index>(std::floor(cf));
  const auto r0 = static_cast<Eigen::Index>(std::floor(rf));
  const double fc = cf - static_cast<double>(c0);
  const double fr = rf - static_cast<double>(r0);
  auto at = [&](Eigen::Index r, Eigen::Index c) {
    return (r < 0 || c < 0 || r >= n || c >= n) ? 0.0 : pixels(r, c);
  };
  return (1.0 - fr) * ((1.0 - fc) * at(r0, c0) + fc * at(r0, c0 + 1)) +
         fr * ((1.0 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1));
}

/// Line integrals by ray marching with unit (pixel) steps and bilinear
/// interpolation.
inline ProjectionSet radon_forward(const Image& image, const std::vector<double>& angles, Eigen::Index l)
{
  detail::require(l >= 8, "radon_forward: need at least 8 detectors");
  const auto n = image.size();
  ProjectionSet out;
  out.detectors = detector_grid(l);
  out.h = 1.0;
  out.rows = Matrix::Zero(static_cast<Eigen::Index>(angles.size()), l);
  out.true_angles = angles;
  const auto reach = static_cast<long>(std::ceil(std::sqrt(2.0) * 0.5 * static_cast<double>(n))) + 1;
  for (std::size_t a = 0; a < angles.size(); ++a) {
    const double ct = std::cos(angles[a]);
    const double st = std::sin(angles[a]);
    for (Eigen::Index i = 0; i < l; ++i) {
      const double s = out.detectors(i);
      double acc = 0.0;
      for (long u = -reach; u <= reach; ++u) {
        const double du = static_cast<double>(u);
        acc += sample_bilinear(image.pixels, s * ct - du * st, s * st + du * ct);
      }
      out.rows(static_cast<Eigen::Index>(a), i) = acc;
    }
  }
  return out;
}

inline ProjectionSet add_white_noise(const ProjectionSet& p, double eta, std::uint64_t seed)
{
  detail::require(eta >= 0.0, "add_white_noise: eta must be non-negative");
  ProjectionSet out = p;
  if (eta == 0.0) return out;
  Rng rng(seed);
  out.rows += eta * standard_normal(p.rows.rows(), p.rows.cols(), rng);
  return out;
}

/// Scales every row to unit discrete L1 mass h * sum |row|.
inline ProjectionSet l1_normalize(const ProjectionSet& p)
{
  ProjectionSet out = p;
  for (Eigen::Index i = 0; i < p.rows.rows(); ++i) {
    const double mass = p.h * p.rows.row(i).cwiseAbs().sum();
    if (!(mass > 0.0)) throw NumericalError("l1_normalize: row " + std::to_string(i) + " has zero mass");
    out.rows.row(i) /= mass;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Unsigned angles from first moments.

/// First moment h * sum row_i x_i. For an L1-normalized row this is the
/// centre of mass, so a unit-mass spike at x_j gives x_j.
inline double projection_moment(const Eigen::Ref<const Vector>& row, const Vector& detectors, double h)
{
  detail::require(row.size() == detectors.size(), "projection_moment: length mismatch");
  return h * row.dot(detectors);
}

inline Vector projection_moments(const ProjectionSet& p)
{
  Vector out(p.count());
  for (Eigen::Index i = 0; i < p.count(); ++i) out(i) = projection_moment(p.rows.row(i).transpose(), p.detectors, p.h);
  return out;
}

struct VnormEstimate
{
  double value = 0.0;
  Eigen::Index argmax = 0;  ///< first row attaining the maximum
};

/// max_i |moment_i|, the norm of the centroid vector.
inline VnormEstimate estimate_vnorm(const ProjectionSet& p)
{
  detail::require(p.count() >= 1, "estimate_vnorm: no projections");
  const Vector moments = projection_moments(p);
  VnormEstimate out;
  for (Eigen::Index i = 0; i < moments.size(); ++i) {
    if (std::abs(moments(i)) > out.value) {
      out.value = std::abs(moments(i));
      out.argmax = i;
    }
  }
  const double scale = p.detectors.cwiseAbs().maxCoeff();
  if (!(out.value > 1e-12 * scale))
    throw NumericalError("estimate_vnorm: all projection moments vanish; the object's centre of mass sits at the "
                         "rotation centre. Shift the object off centre.");
  return out;
}

struct UnsignedAngles
{
  std::vector<double> values;
  long clamped = 0;  ///< ratios outside [-1, 1] before clamping
};

inline UnsignedAngles recover_unsigned_angles(const ProjectionSet& p, double vnorm)
{
  detail::require(vnorm > 0.0, "recover_unsigned_angles: vnorm must be positive");
  const Vector moments = projection_moments(p);
  UnsignedAngles out;
  out.values.reserve(static_cast<std::size_t>(moments.size()));
  for (Eigen::Index i = 0; i < moments.size(); ++i) {
    const double ratio = moments(i) / vnorm;
    if (ratio > 1.0 || ratio < -1.0) ++out.clamped;
    out.values.push_back(std::acos(std::clamp(ratio, -1.0, 1.0)));
  }
  return out;
}

struct ReflectResult
{
  std::vector<double> values;
  bool reflected = false;
  bool endpoint_found = true;  ///< false when neither min ~ 0 nor max ~ pi
};

/// Maps theta -> pi - theta when the largest unsigned angle sits at pi and
/// the smallest does not sit at 0. A minimum at 0 takes precedence.
inline ReflectResult maybe_reflect(const std::vector<double>& unsigned_angles,
                                   double tol = 1e-3 * std::numbers::pi)
{
  detail::require(!unsigned_angles.empty(), "maybe_reflect: empty input");
  const auto [lo, hi] = std::minmax_element(unsigned_angles.begin(), unsigned_angles.end());
  ReflectResult out{unsigned_angles, false, true};
  if (*lo <= tol) return out;
  if (*hi >= std::numbers::pi - tol) {
    for (auto& v : out.values) v = std::numbers::pi - v;
    out.reflected = true;
    return out;
  }
  out.endpoint_found = false;
  return out;
}

// ---------------------------------------------------------------------------
// Windows and signs.

struct PartitionPlan
{
  int s = 1;
  int u = 0;
  int r = 0;
  std::vector<Eigen::Index> order;                  ///< position -> row index
  std::vector<std::vector<Eigen::Index>> windows;  ///< row indices per window
};

/// k = u s + r: u windows of s consecutive positions, then one window of
/// the r remaining positions when r > 0. Positions map to rows through
/// `order`.
inline PartitionPlan partition(std::vector<Eigen::Index> order, int s)
{
  const auto k = static_cast<int>(order.size());
  detail::require(s >= 1 && s <= k, "partition: window size must lie in [1, k]");
  PartitionPlan plan;
  plan.s = s;
  plan.u = k / s;
  plan.r = k % s;
  plan.order = std::move(order);
  for (int w = 0; w * s < k; ++w) {
    const int end = std::min(k, (w + 1) * s);
    plan.windows.emplace_back(plan.order.begin() + w * s, plan.order.begin() + end);
  }
  return plan;
}

inline PartitionPlan partition(int k, int s)
{
  detail::require(k >= 1, "partition: k must be positive");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  return partition(std::move(order), s);
}

/// Windows over the rows sorted ascending by unsigned angle (stable).
inline PartitionPlan partition_by_angle(const std::vector<double>& unsigned_angles, int s)
{
  std::vector<Eigen::Index> order(unsigned_angles.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return unsigned_angles[static_cast<std::size_t>(a)] < unsigned_angles[static_cast<std::size_t>(b)];
  });
  return partition(std::move(order), s);
}

enum class BandwidthRule
{
  median,  ///< auto_bandwidth
  rms      ///< rms_bandwidth
};

struct EmbedParams
{
  int neighbors = 10;  ///< m nearest embedded points per gradient
  double diffusion_time = 1.0;
  BandwidthRule rule = BandwidthRule::rms;
  std::optional<double> bandwidth;  ///< fixed kernel bandwidth, overrides the rule
};

/// Signs per row: +1, -1, or 0 when not yet assigned.
struct SignState
{
  std::vector<int> signs;
  long eigensolves = 0;
  std::vector<Matrix> embeddings;  ///< 2-D coordinates per embedded window union
  std::vector<std::vector<Eigen::Index>> embedded_rows;
};

namespace window {

inline Matrix gather_rows(const Matrix& rows, const std::vector<Eigen::Index>& idx)
{
  Matrix out(static_cast<Eigen::Index>(idx.size()), rows.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows.row(idx[i]);
  return out;
}

inline Matrix embed_2d(const Matrix& points, const EmbedParams& params, SignState& state,
                       const std::vector<Eigen::Index>& rows)
{
  const int dim = std::min<int>(2, static_cast<int>(points.rows()) - 1);
  const double eps = params.bandwidth ? *params.bandwidth
                     : params.rule == BandwidthRule::rms ? rms_bandwidth(points)
                                                         : auto_bandwidth(points);
  const Embedding emb = diffusion_map(points, dim, params.diffusion_time, eps);
  ++state.eigensolves;
  Matrix coords = Matrix::Zero(points.rows(), 2);
  coords.leftCols(dim) = emb.coordinates;
  state.embeddings.push_back(coords);
  state.embedded_rows.push_back(rows);
  return coords;
}

/// Indices of the m points nearest to point i (excluding i), ties by index.
inline std::vector<Eigen::Index> nearest(const Matrix& y, Eigen::Index i, int m)
{
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < y.rows(); ++j)
    if (j != i) idx.push_back(j);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return (y.row(a) - y.row(i)).squaredNorm() < (y.row(b) - y.row(i)).squaredNorm();
  });
  if (static_cast<int>(idx.size()) > m) idx.resize(static_cast<std::size_t>(m));
  return idx;
}

} // namespace window

/// Signs of the rows in the first two windows.
///
/// The first three windows are embedded together in 2-D. At every embedded
/// point the unit-bandwidth kernel direction of g~ (the row's first moment,
/// carried to the embedding) is formed from its m nearest embedded points.
/// Rows of the first two windows take the sign of the inner product of their
/// direction with the direction at the row of second-smallest unsigned angle,
/// which itself is +1. With fewer than three windows all available windows
/// are embedded and signed.
inline SignState bootstrap_signs(const ProjectionSet& p, const PartitionPlan& plan, const EmbedParams& params)
{
  detail::require(!plan.windows.empty(), "bootstrap_signs: empty partition");
  detail::require(params.neighbors >= 1, "bootstrap_signs: need at least one neighbor");
  SignState state;
  state.signs.assign(static_cast<std::size_t>(p.count()), 0);

  std::vector<Eigen::Index> rows;
  for (std::size_t w = 0; w < std::min<std::size_t>(3, plan.windows.size()); ++w)
    rows.insert(rows.end(), plan.windows[w].begin(), plan.windows[w].end());
  std::size_t signed_count = 0;
  for (std::size_t w = 0; w < std::min<std::size_t>(2, plan.windows.size()); ++w) signed_count += plan.windows[w].size();

  if (rows.size() < 2) {
    for (auto r : rows) state.signs[static_cast<std::size_t>(r)] = 1;
    return state;
  }

  const Matrix points = window::gather_rows(p.rows, rows);
  const Matrix y = window::embed_2d(points, params, state, rows);
  Vector g(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    g(static_cast<Eigen::Index>(i)) = projection_moment(p.rows.row(rows[i]).transpose(), p.detectors, p.h);

  auto direction = [&](Eigen::Index i) {
    const auto nb = window::nearest(y, i, params.neighbors);
    Matrix pts(static_cast<Eigen::Index>(nb.size()), 2);
    Vector gv(static_cast<Eigen::Index>(nb.size()));
    for (std::size_t j = 0; j < nb.size(); ++j) {
      pts.row(static_cast<Eigen::Index>(j)) = y.row(nb[j]);
      gv(static_cast<Eigen::Index>(j)) = g(nb[j]);
    }
    return gradient_direction_unnormalized(y.row(i).transpose(), pts, g(i), gv);
  };

  // rows[] follows sorted order, so position 1 holds the second-smallest angle.
  const Eigen::Index anchor = 1;
  const Vector anchor_dir = direction(anchor);
  if (!(anchor_dir.norm() > 0.0))
    throw NumericalError("bootstrap_signs: zero gradient at the anchor; increase the neighbor count m");
  for (std::size_t i = 0; i < signed_count; ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    const double dot = idx == anchor ? 1.0 : direction(idx).dot(anchor_dir);
    state.signs[static_cast<std::size_t>(rows[i])] = dot < 0.0 ? -1 : 1;
  }
  return state;
}

/// Extends signs window by window: DS_j and DS_{j+1} are embedded together
/// and each row of DS_{j+1} copies the sign of the nearest embedded row
/// that already has one (lowest index on ties).
inline SignState propagate_signs(const ProjectionSet& p, const PartitionPlan& plan, SignState state,
                                 const EmbedParams& params)
{
  for (std::size_t w = 2; w < plan.windows.size(); ++w) {
    std::vector<Eigen::Index> rows = plan.windows[w - 1];
    rows.insert(rows.end(), plan.windows[w].begin(), plan.windows[w].end());
    std::vector<Eigen::Index> known;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (state.signs[static_cast<std::size_t>(rows[i])] != 0) known.push_back(static_cast<Eigen::Index>(i));
    if (known.empty())
      throw NumericalError("propagate_signs: window " + std::to_string(w + 1) + " has no signed predecessor");

    const Matrix y = window::embed_2d(window::gather_rows(p.rows, rows), params, state, rows);
    const auto first_new = static_cast<Eigen::Index>(plan.windows[w - 1].size());
    for (Eigen::Index i = first_new; i < y.rows(); ++i) {
      Eigen::Index best = known.front();
      double best_d = (y.row(best) - y.row(i)).squaredNorm();
      for (Eigen::Index j : known) {
        const double d = (y.row(j) - y.row(i)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      state.signs[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])] =
        state.signs[static_cast<std::size_t>(rows[static_cast<std::size_t>(best)])];
    }
  }
  return state;
}

/// theta_i = sign_i * unsigned_i. The unsigned values are taken after any
/// reflection, so the result is the angle set up to one global rotation and
/// one global reflection. Unassigned signs count as +1.
inline std::vector<double> assemble_angles(const std::vector<double>& unsigned_angles, const std::vector<int>& signs,
                                           bool reflected)
{
  detail::require(unsigned_angles.size() == signs.size(), "assemble_angles: length mismatch");
  (void)reflected;  // already folded into unsigned_angles by maybe_reflect
  std::vector<double> out(unsigned_angles.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (signs[i] < 0 ? -1.0 : 1.0) * unsigned_angles[i];
  return out;
}

// ---------------------------------------------------------------------------
// Reconstruction and scoring.

/// Ram-Lak (ramp) filter in the spatial domain, unit detector spacing.
inline Vector ramp_filter(const Eigen::Ref<const Vector>& row)
{
  const auto l = row.size();
  Vector kernel(2 * l - 1);
  for (Eigen::Index j = -(l - 1); j <= l - 1; ++j) {
    double v = 0.0;
    if (j == 0) v = 0.25;
    else if (j % 2 != 0) v = -1.0 / (std::numbers::pi * std::numbers::pi * static_cast<double>(j * j));
    kernel(j + l - 1) = v;
  }
  Vector out = Vector::Zero(l);
  for (Eigen::Index i = 0; i < l; ++i)
    for (Eigen::Index j = 0; j < l; ++j) out(i) += kernel(i - j + l - 1) * row(j);
  return out;
}

/// Filtered back projection onto an n x n grid, negatives clamped to 0.
inline Image fbp_reconstruct(const ProjectionSet& p, const std::vector<double>& angles, Eigen::Index n)
{
  detail::require(static_cast<Eigen::Index>(angles.size()) == p.count(), "fbp_reconstruct: angle count mismatch");
  detail::require(n >= 2, "fbp_reconstruct: grid too small");
  const auto l = p.detectors.size();
  const double x0 = p.detectors(0);
  Matrix acc = Matrix::Zero(n, n);
  const double half = 0.5 * static_cast<double>(n - 1);
  for (Eigen::Index a = 0; a < p.count(); ++a) {
    const Vector q = ramp_filter(p.rows.row(a).transpose());
    const double ct = std::cos(angles[static_cast<std::size_t>(a)]);
    const double st = std::sin(angles[static_cast<std::size_t>(a)]);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double y = half - static_cast<double>(r);
      for (Eigen::Index c = 0; c < n; ++c) {
        const double x = static_cast<double>(c) - half;
        const double pos = (x * ct + y * st - x0) / p.h;
        const double fl = std::floor(pos);
        const auto i0 = static_cast<Eigen::Index>(fl);
        if (i0 < -1 || i0 >= l) continue;
        const double frac = pos - fl;
        const double lo = i0 >= 0 ? q(i0) : 0.0;
        const double hi = i0 + 1 < l ? q(i0 + 1) : 0.0;
        acc(r, c) += (1.0 - frac) * lo + frac * hi;
      }
    }
  }
  Image out{acc * (std::numbers::pi / static_cast<double>(std::max<Eigen::Index>(1, p.count()))), 1.0};
  out.pixels = out.pixels.cwiseMax(0.0);
  return out;
}

/// Rotation of an image about its centre by `angle` (counter-clockwise),
/// optionally mirrored x -> -x first; bilinear, zero fill.
inline Matrix transform_image(const Matrix& pixels, double angle, bool mirror)
{
  const auto n = pixels.rows();
  const double half = 0.5 * static_cast<double>(n - 1);
  const double ct = std::cos(angle);
  const double st = std::sin(angle);
  Matrix out(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double y = half - static_cast<double>(r);
    for (Eigen::Index c = 0; c < n; ++c) {
      const double x = static_cast<double>(c) - half;
      // inverse map: rotate back by -angle, then undo the mirror
      double sx = ct * x + st * y;
      const double sy = -st * x + ct * y;
      if (mirror) sx = -sx;
      out(r, c) = sample_bilinear(pixels, sx, sy);
    }
  }
  return out;
}

/// Relative L2 distance |recon - truth| / |truth|. With registration, the
/// minimum over rotations on a 1 degree grid, with and without mirroring.
inline double l2_error(const Image& recon, const Image& truth, bool register_pose)
{
  detail::require(recon.size() == truth.size(), "l2_error: grids differ");
  const double denom = truth.pixels.norm();
  detail::require(denom > 0.0, "l2_error: truth image is zero");
  if (!register_pose) return (recon.pixels - truth.pixels).norm() / denom;
  double best = std::numeric_limits<double>::infinity();
  for (int mirror = 0; mirror < 2; ++mirror)
    for (int deg = 0; deg < 360; ++deg) {
      const Matrix moved = transform_image(recon.pixels, deg * std::numbers::pi / 180.0, mirror == 1);
      best = std::min(best, (moved - truth.pixels).norm() / denom);
    }
  return best;
}

// ---------------------------------------------------------------------------
// Recovery and the end-to-end experiment.

struct AngleRecovery
{
  std::vector<double> unsigned_angles;  ///< after reflection
  std::vector<int> signs;
  std::vector<double> angles;  ///< signed, up to a global rotation/reflection
  bool reflected = false;
  bool endpoint_found = true;
  long clamped = 0;
  long eigensolves = 0;
  Eigen::Index anchor_row = 0;  ///< row attaining max |moment|
  PartitionPlan plan;
  SignState state;
};

/// Angle recovery from projections alone. Refuses data carrying the hidden
/// angles so the truth cannot leak into the estimate.
inline AngleRecovery recover_angles(const ProjectionSet& data, int s, const EmbedParams& params)
{
  detail::require(!data.true_angles.has_value(), "recover_angles: strip the hidden angles before recovery");
  const ProjectionSet p = l1_normalize(data);
  const auto vnorm = estimate_vnorm(p);
  const auto unsigned_angles = recover_unsigned_angles(p, vnorm.value);
  const auto reflect = maybe_reflect(unsigned_angles.values);

  AngleRecovery out;
  out.unsigned_angles = reflect.values;
  out.reflected = reflect.reflected;
  out.endpoint_found = reflect.endpoint_found;
  out.clamped = unsigned_angles.clamped;
  out.anchor_row = vnorm.argmax;
  out.plan = partition_by_angle(out.unsigned_angles, s);
  out.state = propagate_signs(p, out.plan, bootstrap_signs(p, out.plan, params), params);
  out.signs = out.state.signs;
  out.eigensolves = out.state.eigensolves;
  out.angles = assemble_angles(out.unsigned_angles, out.signs, out.reflected);
  return out;
}

/// Fraction of rows whose recovered sign matches the sign of the true angle
/// relative to the anchor row, maximized over a global sign flip. Rows at
/// the anchor angle itself are skipped.
inline double sign_accuracy(const std::vector<int>& signs, const std::vector<double>& true_angles, Eigen::Index anchor_row)
{
  detail::require(signs.size() == true_angles.size(), "sign_accuracy: length mismatch");
  const double ref = true_angles[static_cast<std::size_t>(anchor_row)];
  long agree = 0;
  long total = 0;
  for (std::size_t i = 0; i < signs.size(); ++i) {
    const double delta = std::remainder(true_angles[i] - ref, 2.0 * std::numbers::pi);
    if (std::abs(delta) < 1e-12) continue;
    ++total;
    if ((delta > 0.0) == (signs[i] > 0)) ++agree;
  }
  if (total == 0) return 1.0;
  return static_cast<double>(std::max(agree, total - agree)) / static_cast<double>(total);
}

struct TomoConfig
{
  Eigen::Index n = 128;
  Eigen::Index detectors = 0;  ///< 0 means n
  int k = 2000;
  int s = 20;
  double eta = 0.0;
  std::uint64_t seed = 0;
  EmbedParams embed;
};

struct TomoResult
{
  Image phantom;
  ProjectionSet data;  ///< noisy projections with the hidden angles kept for scoring
  AngleRecovery recovery;
  Image recon_signed;
  Image recon_unsigned;
  double error_signed = 0.0;
  double error_unsigned = 0.0;
  double sign_accuracy = 0.0;
};

/// Phantom -> projections at k uniform hidden angles in [0, pi] -> noise ->
/// recovery -> FBP with the signed angles and with the unsigned ones.
inline TomoResult run_tomography(const TomoConfig& cfg)
{
  detail::require(cfg.k >= 1 && cfg.s >= 1 && cfg.s <= cfg.k, "run_tomography: need 1 <= s <= k");
  TomoResult out;
  out.phantom = shepp_logan(cfg.n);
  Rng rng(derive_seed(cfg.seed, 0));
  std::uniform_real_distribution<double> uniform(0.0, std::numbers::pi);
  std::vector<double> angles(static_cast<std::size_t>(cfg.k));
  for (auto& a : angles) a = uniform(rng);
  const Eigen::Index l = cfg.detectors > 0 ? cfg.detectors : cfg.n;
  out.data = add_white_noise(radon_forward(out.phantom, angles, l), cfg.eta, derive_seed(cfg.seed, 1));

  out.recovery = recover_angles(out.data.stripped(), cfg.s, cfg.embed);
  out.sign_accuracy = sign_accuracy(out.recovery.signs, *out.data.true_angles, out.recovery.anchor_row);
  out.recon_signed = fbp_reconstruct(out.data, out.recovery.angles, cfg.n);
  out.recon_unsigned = fbp_reconstruct(out.data, out.recovery.unsigned_angles, cfg.n);
  out.error_signed = l2_error(out.recon_signed, out.phantom, true);
  out.error_unsigned = l2_error(out.recon_unsigned, out.phantom, true);
  return out;
}

} // namespace dmgrad::tomo
