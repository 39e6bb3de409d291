#pragma once

#include "dmgrad/core.hpp"
#include "dmgrad/diffusion_map.hpp"
#include "dmgrad/kernel_gradient.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace dmgrad {

/// Control parameters of the descent loop.
struct OptimizerParams
{
  double lambda0 = 0.1;
  int l = 10;
  double epsilon = 1e-10;
  double s_f = 1.1;
  KernelParams kernel = KernelParams(0.05);
  long max_iters = 100000;
  /// Divide the kernel estimate by t^2. Disable when the sampler's offsets
  /// are not on the scale of the bandwidth and raw_v is wanted as is.
  bool divide_by_t2 = true;

  void validate() const
  {
    detail::require(lambda0 > 0.0, "OptimizerParams: lambda0 must be positive");
    detail::require(l >= 1, "OptimizerParams: l must be at least 1");
    detail::require(epsilon > 0.0, "OptimizerParams: epsilon must be positive");
    detail::require(s_f > 1.0, "OptimizerParams: s_f must exceed 1");
    detail::require(max_iters >= 1, "OptimizerParams: max_iters must be at least 1");
  }
};

/// A retraction beta_x(z) together with the membership predicate of the
/// manifold it maps onto.
struct Retraction
{
  std::function<Vector(const Vector& x, const Vector& target)> map;
  std::function<bool(const Vector&)> contains;

  Vector operator()(const Vector& x, const Vector& target) const { return map(x, target); }
};

inline Retraction euclidean_retraction()
{
  return {[](const Vector&, const Vector& z) { return z; },
          [](const Vector& x) { return x.allFinite(); }};
}

/// Normalization onto the unit sphere.
inline Retraction sphere_retraction(double tol = 1e-12)
{
  return {[](const Vector&, const Vector& z) {
            const double norm = z.norm();
            if (!(norm > 0.0)) throw NumericalError("sphere_retraction: cannot normalize the zero vector");
            return Vector(z / norm);
          },
          [tol](const Vector& x) { return std::abs(x.norm() - 1.0) <= tol; }};
}

/// Maps z to the closest dataset point (one point per row); ties go to the
/// lowest index.
inline Retraction nearest_point_retraction(const Matrix& dataset, double tol = 0.0)
{
  detail::require(dataset.rows() >= 1, "nearest_point_retraction: empty dataset");
  auto data = std::make_shared<const Matrix>(dataset);
  auto nearest = [data](const Vector& z) {
    Eigen::Index best = 0;
    double best_d = (data->row(0).transpose() - z).squaredNorm();
    for (Eigen::Index i = 1; i < data->rows(); ++i) {
      const double d = (data->row(i).transpose() - z).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return std::pair{best, best_d};
  };
  return {[data, nearest](const Vector&, const Vector& z) { return Vector(data->row(nearest(z).first).transpose()); },
          [nearest, tol](const Vector& x) { return nearest(x).second <= tol * tol; }};
}

/// One update beta_x(x - lambda grad).
inline Vector step(const Vector& x, const Vector& grad, double lambda, const Retraction& retraction)
{
  detail::require(grad.allFinite(), "step: gradient has non-finite entries");
  detail::require(lambda > 0.0, "step: lambda must be positive");
  Vector next = retraction(x, x - lambda * grad);
  if (!next.allFinite()) throw NumericalError("step: retraction returned non-finite values");
  return next;
}

/// Produces neighbor samples around a point. The cloud's f fields are
/// filled in by the optimizer; a cloud without density weights is treated
/// as drawn from the Gaussian PDF centred at the point.
using Sampler = std::function<NeighborCloud(const Vector&)>;
using Objective = std::function<double(const Vector&)>;

/// Isotropic Gaussian offsets of scale t around x, mapped back through the
/// retraction.
inline Sampler gaussian_sampler(double t, int m, std::uint64_t seed, Retraction retraction = euclidean_retraction())
{
  detail::require(t > 0.0 && m >= 1, "gaussian_sampler: need t > 0 and m >= 1");
  auto rng = std::make_shared<Rng>(seed);
  return [=](const Vector& x) {
    NeighborCloud cloud;
    cloud.base = x;
    cloud.samples.resize(m, x.size());
    const Matrix noise = standard_normal(x.size(), m, *rng);
    for (int i = 0; i < m; ++i) cloud.samples.row(i) = retraction(x, x + t * noise.col(i)).transpose();
    return cloud;
  };
}

enum class StopReason
{
  tolerance,
  max_iters
};

struct Iterate
{
  long k = 0;
  Vector point;
  double f_value = 0.0;
  double lambda = 0.0;  ///< step size that produced this iterate
  int rescales = 0;     ///< number of lambda reductions before this step
  double best_f = 0.0;
};

struct IterateTrace
{
  std::vector<Iterate> iterates;  ///< iterates[0] is x0
  Vector best_point;
  double best_f = 0.0;
  StopReason stop_reason = StopReason::tolerance;
  long guard_evaluations = 0;  ///< comparisons |f(x_{k-1}) - f(x_k)| >= eps made
};

namespace detail {

inline GradientEstimate estimate_for(NeighborCloud& cloud, const Objective& f, double f_base,
                                     const OptimizerParams& params)
{
  cloud.f_base = f_base;
  if (cloud.f_samples.size() != cloud.samples.rows()) {
    cloud.f_samples.resize(cloud.samples.rows());
    for (Eigen::Index i = 0; i < cloud.samples.rows(); ++i) cloud.f_samples(i) = f(cloud.samples.row(i).transpose());
  }
  if (!cloud.f_samples.allFinite()) throw NumericalError("f is not finite at a neighbor sample");
  return cloud.density ? estimate_gradient(cloud, params.kernel) : estimate_gradient_gaussian(cloud, params.kernel);
}

} // namespace detail

/// Derivative-free descent driven by the kernel gradient estimate.
///
/// Control flow, per iteration: step from x_k, record x_min when improved,
/// k += 1; once the counter exceeds l, reset it, resume from x_min and
/// divide lambda by s_f; then increment the counter. The loop runs while
/// the last two evaluated values differ by at least epsilon (or k = 0),
/// capped at max_iters steps. f is evaluated once per iterate.
inline IterateTrace minimize(const Objective& f, const Vector& x0, const Sampler& sampler,
                             const Retraction& retraction, const OptimizerParams& params)
{
  params.validate();
  detail::require(retraction.contains(x0), "minimize: x0 is not on the manifold");
  const double t = params.kernel.t();
  const double scale = params.divide_by_t2 ? 1.0 / (t * t) : 1.0;

  IterateTrace trace;
  const double f0 = f(x0);
  if (!std::isfinite(f0)) throw NumericalError("minimize: f(x0) is not finite");

  Vector x = x0;
  double fx = f0;
  trace.best_point = x0;
  trace.best_f = f0;
  trace.iterates.push_back({0, x0, f0, params.lambda0, 0, f0});

  double f_prev = f0;  // last two evaluated values, for the guard
  double f_last = f0;
  long k = 0;
  int counter = 0;
  int rescales = 0;
  double lambda = params.lambda0;
  trace.stop_reason = StopReason::tolerance;

  while (true) {
    if (k > 0) {
      ++trace.guard_evaluations;
      if (!(std::abs(f_prev - f_last) >= params.epsilon)) break;
    }
    if (k >= params.max_iters) {
      trace.stop_reason = StopReason::max_iters;
      break;
    }

    Vector next;
    try {
      NeighborCloud cloud = sampler(x);
      const auto estimate = detail::estimate_for(cloud, f, fx, params);
      next = step(x, estimate.raw_v * scale, lambda, retraction);
    } catch (const NumericalError& e) {
      throw NumericalError("minimize: iterate " + std::to_string(k) + ": " + e.what());
    }
    if (!retraction.contains(next))
      throw NumericalError("minimize: iterate " + std::to_string(k + 1) + " left the manifold");
    const double f_next = f(next);
    if (!std::isfinite(f_next))
      throw NumericalError("minimize: f is not finite at iterate " + std::to_string(k + 1));

    if (f_next < trace.best_f) {
      trace.best_f = f_next;
      trace.best_point = next;
    }
    ++k;
    trace.iterates.push_back({k, next, f_next, lambda, rescales, trace.best_f});
    f_prev = f_last;
    f_last = f_next;
    x = std::move(next);
    fx = f_next;

    if (params.l < counter) {
      counter = 0;
      x = trace.best_point;
      fx = trace.best_f;
      ++rescales;
      lambda = params.lambda0 / std::pow(params.s_f, rescales);
    }
    ++counter;
  }
  return trace;
}

struct EmbeddedResult
{
  Eigen::Index best_index = 0;
  IterateTrace trace;
  Embedding embedding;
};

/// Embeds the dataset (one point per row) with a diffusion map, carries f
/// over to the embedded points and minimizes over them with the
/// nearest-point retraction, starting from the embedding of x0_index.
/// Neighbor clouds are the kernel.m() nearest embedded points under the
/// counting measure.
inline EmbeddedResult embed_and_minimize(const Matrix& dataset, const Vector& fvals, int embed_dim,
                                         const OptimizerParams& params, Eigen::Index x0_index,
                                         double diffusion_time = 1.0)
{
  detail::require(dataset.rows() == fvals.size(), "embed_and_minimize: fvals must align with the dataset");
  detail::require(x0_index >= 0 && x0_index < dataset.rows(), "embed_and_minimize: x0_index out of range");
  EmbeddedResult out;
  out.embedding = diffusion_map(dataset, embed_dim, diffusion_time);
  const Matrix& y = out.embedding.coordinates;
  const Eigen::Index k = y.rows();

  auto index_of = [&y](const Vector& p) {
    Eigen::Index best = 0;
    double best_d = (y.row(0).transpose() - p).squaredNorm();
    for (Eigen::Index i = 1; i < y.rows(); ++i) {
      const double d = (y.row(i).transpose() - p).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  };

  const Objective f_tilde = [&](const Vector& p) { return fvals(index_of(p)); };
  const auto neighbors = static_cast<Eigen::Index>(std::min<std::size_t>(params.kernel.m(), static_cast<std::size_t>(k - 1)));
  const Sampler sampler = [&](const Vector& p) {
    const Eigen::Index self = index_of(p);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return (y.row(a).transpose() - p).squaredNorm() < (y.row(b).transpose() - p).squaredNorm();
    });
    NeighborCloud cloud;
    cloud.base = p;
    cloud.samples.resize(neighbors, y.cols());
    cloud.f_samples.resize(neighbors);
    Eigen::Index r = 0;
    for (Eigen::Index idx : order) {
      if (r == neighbors) break;
      if (idx == self) continue;
      cloud.samples.row(r) = y.row(idx);
      cloud.f_samples(r) = fvals(idx);
      ++r;
    }
    cloud.density = Vector::Ones(neighbors);
    return cloud;
  };

  out.trace = minimize(f_tilde, y.row(x0_index).transpose(), sampler, nearest_point_retraction(y), params);
  out.best_index = index_of(out.trace.best_point);
  return out;
}

} // namespace dmgrad
