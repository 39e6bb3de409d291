#pragma once

#include "dmgrad/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace dmgrad {

/// Bandwidth t, ball exponent delta and nominal sample count m of the
/// kernel gradient estimator. Samples are expected in the ball of radius
/// t^delta around the base point.
class KernelParams
{
public:
  explicit KernelParams(double t, double delta = 0.9, std::size_t m = 1)
    : t_(t), delta_(delta), m_(m)
  {
    detail::require(t > 0.0 && std::isfinite(t), "KernelParams: t must be positive");
    detail::require(delta > 0.5 && delta < 1.0, "KernelParams: delta must lie in (1/2, 1)");
    detail::require(m >= 1, "KernelParams: m must be at least 1");
  }

  double t() const { return t_; }
  double delta() const { return delta_; }
  std::size_t m() const { return m_; }
  double ball_radius() const { return std::pow(t_, delta_); }

private:
  double t_;
  double delta_;
  std::size_t m_;
};

/// A base point with its neighbor samples (one per row), the function
/// values at both, and optionally the sampling density q at each sample.
/// Without density the samples are assumed drawn from the Gaussian PDF
/// centred at the base point with standard deviation t.
struct NeighborCloud
{
  Vector base;
  Matrix samples;
  double f_base = 0.0;
  Vector f_samples;
  std::optional<Vector> density;

  Eigen::Index size() const { return samples.rows(); }

  void validate() const
  {
    detail::require(samples.cols() == base.size(), "NeighborCloud: sample dimension mismatch");
    detail::require(f_samples.size() == samples.rows(), "NeighborCloud: f_samples length mismatch");
    if (density) {
      detail::require(density->size() == samples.rows(), "NeighborCloud: density length mismatch");
      for (Eigen::Index i = 0; i < density->size(); ++i)
        detail::require((*density)(i) > 0.0 && std::isfinite((*density)(i)),
                        "NeighborCloud: density weight " + std::to_string(i) + " is not positive");
    }
  }
};

struct GradientEstimate
{
  Vector direction;  ///< raw_v / t^2
  Vector raw_v;
  double dt_hat = 0.0;  ///< sum of the weights c_i
  double log_dt_hat = 0.0;
  Eigen::Index outside_ball = 0;  ///< samples farther than t^delta from the base
};

inline double gaussian_weight(const Eigen::Ref<const Vector>& x,
                              const Eigen::Ref<const Vector>& y,
                              double t)
{
  detail::require(t > 0.0, "gaussian_weight: t must be positive");
  return std::exp(-(y - x).squaredNorm() / (2.0 * t * t));
}

/// Monte-Carlo estimate of d_t(x) = (1/m) sum_i w(x, x_i) / q(x_i).
inline double estimate_density(const NeighborCloud& cloud, const KernelParams& params)
{
  cloud.validate();
  detail::require(cloud.density.has_value(), "estimate_density: cloud carries no density weights");
  detail::require(cloud.size() > 0, "estimate_density: empty cloud");
  const auto& q = *cloud.density;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < cloud.size(); ++i)
    sum += gaussian_weight(cloud.base, cloud.samples.row(i).transpose(), params.t()) / q(i);
  return sum / static_cast<double>(cloud.size());
}

/// Kernel estimate of the Riemannian gradient from weighted samples.
///
/// Weights are c_i = exp(-|x_i - x|^2 / 2t^2) / q(x_i). They are formed in
/// log space and shifted by the largest exponent, which cancels in the
/// normalized sum, so bandwidths far below the sample spread do not
/// underflow. When `restrict_to_ball` is set, samples outside the ball of
/// radius t^delta are dropped; otherwise they are kept and only counted.
inline GradientEstimate estimate_gradient(const NeighborCloud& cloud,
                                          const KernelParams& params,
                                          bool restrict_to_ball = false)
{
  cloud.validate();
  detail::require(cloud.density.has_value(), "estimate_gradient: cloud carries no density weights");
  const auto m = cloud.size();
  const auto n = cloud.base.size();
  const double t = params.t();
  const double radius = params.ball_radius();
  const auto& q = *cloud.density;

  Vector exponent(m);
  std::vector<bool> keep(static_cast<std::size_t>(m), true);
  GradientEstimate out;
  double max_exponent = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < m; ++i) {
    const double dist2 = (cloud.samples.row(i).transpose() - cloud.base).squaredNorm();
    if (dist2 > radius * radius) {
      ++out.outside_ball;
      if (restrict_to_ball) keep[static_cast<std::size_t>(i)] = false;
    }
    exponent(i) = -dist2 / (2.0 * t * t) - std::log(q(i));
    if (keep[static_cast<std::size_t>(i)]) max_exponent = std::max(max_exponent, exponent(i));
  }
  if (!std::isfinite(max_exponent))
    throw NumericalError("estimate_gradient: all kernel weights vanish (degenerate bandwidth or empty ball)");

  double weight_sum = 0.0;
  Vector accum = Vector::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    const double c = std::exp(exponent(i) - max_exponent);
    weight_sum += c;
    accum += (cloud.samples.row(i).transpose() - cloud.base) * ((cloud.f_samples(i) - cloud.f_base) * c);
  }
  if (!(weight_sum > 0.0))
    throw NumericalError("estimate_gradient: kernel weights sum to zero");

  out.raw_v = accum / weight_sum;
  out.direction = out.raw_v / (t * t);
  out.log_dt_hat = max_exponent + std::log(weight_sum);
  out.dt_hat = std::exp(out.log_dt_hat);
  return out;
}

/// Gradient estimate for samples drawn from the Gaussian PDF
/// q(y) = exp(-|y - x|^2 / 2t^2) / d_t(x): the weights c_i are all equal to
/// d_t(x), leaving the plain average raw_v = (1/m) sum (x_i - x)(f(x_i) - f(x)).
inline GradientEstimate estimate_gradient_gaussian(const NeighborCloud& cloud, const KernelParams& params)
{
  cloud.validate();
  detail::require(cloud.size() > 0, "estimate_gradient_gaussian: empty cloud");
  const auto m = cloud.size();
  Vector accum = Vector::Zero(cloud.base.size());
  for (Eigen::Index i = 0; i < m; ++i)
    accum += (cloud.samples.row(i).transpose() - cloud.base) * (cloud.f_samples(i) - cloud.f_base);

  GradientEstimate out;
  out.raw_v = accum / static_cast<double>(m);
  out.direction = out.raw_v / (params.t() * params.t());
  out.dt_hat = static_cast<double>(m);
  out.log_dt_hat = std::log(out.dt_hat);
  return out;
}

/// Unit-bandwidth, unnormalized kernel direction
/// sum_i (x_i - x)(g_i - g(x)) exp(-|x_i - x|^2 / 2), used where only the
/// orientation of the gradient matters.
inline Vector gradient_direction_unnormalized(const Eigen::Ref<const Vector>& base,
                                              const Eigen::Ref<const Matrix>& neighbors,
                                              double g_base,
                                              const Eigen::Ref<const Vector>& g_neighbors)
{
  detail::require(neighbors.rows() > 0, "gradient_direction_unnormalized: no neighbors");
  detail::require(neighbors.cols() == base.size(), "gradient_direction_unnormalized: dimension mismatch");
  detail::require(g_neighbors.size() == neighbors.rows(), "gradient_direction_unnormalized: value count mismatch");
  Vector out = Vector::Zero(base.size());
  for (Eigen::Index i = 0; i < neighbors.rows(); ++i) {
    const Vector offset = neighbors.row(i).transpose() - base;
    out += offset * ((g_neighbors(i) - g_base) * std::exp(-0.5 * offset.squaredNorm()));
  }
  return out;
}

} // namespace dmgrad
