#pragma once

#include "dmgrad/core.hpp"
#include "dmgrad/kernel_gradient.hpp"
#include "dmgrad/learning_gradient.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace dmgrad {

// ---------------------------------------------------------------------------
// Closed curve in R^9 used for the estimator comparison:
//   c(s) = (cos 2 pi s, sin 2 pi s, cos 4 pi s),   x(s) = (c(s), c(s), c(s)).

inline Vector benchmark_curve(double s)
{
  using std::numbers::pi;
  Vector x(9);
  for (int k = 0; k < 3; ++k) {
    x(3 * k) = std::cos(2.0 * pi * s);
    x(3 * k + 1) = std::sin(2.0 * pi * s);
    x(3 * k + 2) = std::cos(4.0 * pi * s);
  }
  return x;
}

inline Vector benchmark_curve_velocity(double s)
{
  using std::numbers::pi;
  Vector v(9);
  for (int k = 0; k < 3; ++k) {
    v(3 * k) = -2.0 * pi * std::sin(2.0 * pi * s);
    v(3 * k + 1) = 2.0 * pi * std::cos(2.0 * pi * s);
    v(3 * k + 2) = -4.0 * pi * std::sin(4.0 * pi * s);
  }
  return v;
}

struct MseRecord
{
  double mse_proposed = 0.0;
  double mse_learning = 0.0;
};

inline Eigen::Index in_ball(const NeighborCloud& cloud, double radius)
{
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < cloud.size(); ++i)
    if ((cloud.samples.row(i).transpose() - cloud.base).norm() <= radius) ++count;
  return count;
}

/// Compares the kernel estimator with the learning-gradient baseline for
/// f(x) = <x, A A^T x> on the R^9 curve. Parameters s_i are uniform on
/// [0, 1]; the sampling density along the curve (per unit arclength) is
/// 1 / |x'(s_i)|. A (9x9) has i.i.d. standard normal entries.
///
/// The kernel estimate at each sample uses the other samples that fall in
/// its ball of radius t^delta; with none there the Monte-Carlo sum is empty
/// and the estimate is the zero vector. The baseline is fitted once on all
/// samples with d = 1. Errors are measured against the tangential
/// projection of the ambient gradient 2 A A^T x.
inline MseRecord mse_benchmark(double t, int m, std::uint64_t seed, double delta = 0.9)
{
  detail::require(m >= 2, "mse_benchmark: need at least two samples");
  Rng rng(seed);
  const Matrix a = standard_normal(9, 9, rng);
  const Matrix quad = a * a.transpose();
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Matrix points(m, 9);
  Vector fvals(m);
  Vector density(m);
  Matrix truth(m, 9);
  for (int i = 0; i < m; ++i) {
    const double s = uniform(rng);
    const Vector x = benchmark_curve(s);
    const Vector v = benchmark_curve_velocity(s);
    points.row(i) = x.transpose();
    fvals(i) = x.dot(quad * x);
    density(i) = 1.0 / v.norm();
    const Vector u = v.normalized();
    const Vector ambient = 2.0 * quad * x;
    truth.row(i) = (ambient.dot(u) * u).transpose();
  }

  const KernelParams params(t, delta, static_cast<std::size_t>(m - 1));
  double sq_proposed = 0.0;
  for (int j = 0; j < m; ++j) {
    NeighborCloud cloud;
    cloud.base = points.row(j).transpose();
    cloud.f_base = fvals(j);
    cloud.samples.resize(m - 1, 9);
    cloud.f_samples.resize(m - 1);
    Vector q(m - 1);
    for (int i = 0, r = 0; i < m; ++i) {
      if (i == j) continue;
      cloud.samples.row(r) = points.row(i);
      cloud.f_samples(r) = fvals(i);
      q(r) = density(i);
      ++r;
    }
    cloud.density = std::move(q);
    Vector direction = Vector::Zero(9);
    if (in_ball(cloud, params.ball_radius()) > 0) direction = estimate_gradient(cloud, params, true).direction;
    sq_proposed += (direction - truth.row(j).transpose()).squaredNorm();
  }

  const auto learned = LearningGradient::fit(points, fvals, t, 1);
  double sq_learning = 0.0;
  for (int j = 0; j < m; ++j)
    sq_learning += (learned(points.row(j).transpose()) - truth.row(j).transpose()).squaredNorm();

  return {sq_proposed / m, sq_learning / m};
}

// ---------------------------------------------------------------------------
// Empirical convergence of the estimator on a flat patch.

struct ConvergenceRow
{
  double t = 0.0;
  int m = 0;
  double median = 0.0;
  double q90 = 0.0;
};

namespace detail {

inline double quantile(std::vector<double> values, double p)
{
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

} // namespace detail

/// Samples an isotropic Gaussian cloud N(base, t^2 I) in R^d with its exact
/// density as the sampling weights.
inline NeighborCloud gaussian_flat_cloud(const Vector& base, double t, int m, Rng& rng)
{
  const auto d = base.size();
  NeighborCloud cloud;
  cloud.base = base;
  cloud.samples = (standard_normal(d, m, rng) * t).transpose();
  cloud.samples.rowwise() += base.transpose();
  Vector q(m);
  const double norm = std::pow(2.0 * std::numbers::pi * t * t, -0.5 * static_cast<double>(d));
  for (int i = 0; i < m; ++i)
    q(i) = norm * std::exp(-(cloud.samples.row(i).transpose() - base).squaredNorm() / (2.0 * t * t));
  cloud.density = std::move(q);
  cloud.f_samples = Vector::Zero(m);
  return cloud;
}

/// For every (t, m) pair, repeats the estimate of a linear function
/// f(y) = slope . y at the origin of a flat 2-D patch `trials` times and
/// reports the median and 0.9-quantile of |estimate - slope|.
inline std::vector<ConvergenceRow> convergence_probe(const std::vector<double>& t_list,
                                                     const std::vector<int>& m_list,
                                                     int trials,
                                                     std::uint64_t seed,
                                                     const Vector& slope = Vector::Unit(2, 0))
{
  detail::require(trials >= 30, "convergence_probe: need at least 30 trials");
  std::vector<ConvergenceRow> rows;
  std::uint64_t cell = 0;
  for (double t : t_list) {
    for (int m : m_list) {
      Rng rng(derive_seed(seed, cell++));
      std::vector<double> errors;
      errors.reserve(static_cast<std::size_t>(trials));
      const KernelParams params(t, 0.9, static_cast<std::size_t>(m));
      for (int trial = 0; trial < trials; ++trial) {
        auto cloud = gaussian_flat_cloud(Vector::Zero(slope.size()), t, m, rng);
        cloud.f_base = 0.0;
        cloud.f_samples = cloud.samples * slope;
        const auto estimate = estimate_gradient(cloud, params);
        errors.push_back((estimate.direction - slope).norm());
      }
      rows.push_back({t, m, detail::quantile(errors, 0.5), detail::quantile(errors, 0.9)});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Unit circle with f(p) = p_1 at base (0, 1); the Riemannian gradient there
// is (1, 0).

enum class CircleSampling
{
  gaussian_arclength,  ///< arclength offsets ~ N(0, t^2)
  uniform_ball         ///< arclength offsets uniform on the arc inside the t^delta ball
};

inline NeighborCloud circle_cloud(const KernelParams& params, int m, Rng& rng, CircleSampling sampling)
{
  const double t = params.t();
  NeighborCloud cloud;
  cloud.base = Vector::Unit(2, 1);
  cloud.f_base = 0.0;
  cloud.samples.resize(m, 2);
  cloud.f_samples.resize(m);
  Vector q(m);
  std::normal_distribution<double> normal(0.0, t);
  // chord |p(s) - p(0)| = 2 sin(|s| / 2) <= r  <=>  |s| <= 2 asin(r / 2)
  const double half_arc = 2.0 * std::asin(std::min(1.0, params.ball_radius() / 2.0));
  std::uniform_real_distribution<double> uniform(-half_arc, half_arc);
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    if (sampling == CircleSampling::gaussian_arclength) {
      s = normal(rng);
      q(i) = std::exp(-s * s / (2.0 * t * t)) / (std::sqrt(2.0 * std::numbers::pi) * t);
    } else {
      s = uniform(rng);
      q(i) = 1.0 / (2.0 * half_arc);
    }
    cloud.samples(i, 0) = std::sin(s);
    cloud.samples(i, 1) = std::cos(s);
    cloud.f_samples(i) = std::sin(s);
  }
  cloud.density = std::move(q);
  return cloud;
}

/// Relative error |estimate - (1, 0)| of one circle experiment.
inline double circle_gradient_error(const KernelParams& params, int m, std::uint64_t seed,
                                    CircleSampling sampling = CircleSampling::gaussian_arclength)
{
  Rng rng(seed);
  const auto cloud = circle_cloud(params, m, rng, sampling);
  const auto estimate = estimate_gradient(cloud, params);
  return (estimate.direction - Vector::Unit(2, 0)).norm();
}

} // namespace dmgrad
