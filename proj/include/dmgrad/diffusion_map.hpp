#pragma once

#include "dmgrad/core.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

namespace dmgrad {

/// Symmetric Gaussian affinities W_ij = exp(-|x_i - x_j|^2 / 2 eps^2).
struct KernelMatrix
{
  Matrix entries;
  double bandwidth = 0.0;
};

/// Row-stochastic P = D^{-1} W together with the degrees D = W 1, which
/// fix the stationary measure and the symmetric conjugate of P.
struct MarkovMatrix
{
  Matrix transition;
  Vector degrees;
};

struct Embedding
{
  Matrix coordinates;  ///< one row per input point
  Vector eigenvalues;  ///< descending, trivial eigenvalue excluded
  double diffusion_time = 1.0;
  double trivial_eigenvalue = 1.0;
};

/// `points` holds one point per row.
inline KernelMatrix pairwise_kernel(const Matrix& points, double epsilon)
{
  detail::require(points.rows() >= 2, "pairwise_kernel: need at least two points");
  detail::require(epsilon > 0.0, "pairwise_kernel: bandwidth must be positive");
  const auto k = points.rows();
  KernelMatrix out{Matrix(k, k), epsilon};
  const double scale = 1.0 / (2.0 * epsilon * epsilon);
  for (Eigen::Index i = 0; i < k; ++i) {
    out.entries(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const double w = std::exp(-(points.row(i) - points.row(j)).squaredNorm() * scale);
      out.entries(i, j) = w;
      out.entries(j, i) = w;
    }
  }
  return out;
}

inline MarkovMatrix markov_normalize(const KernelMatrix& kernel)
{
  const Vector degrees = kernel.entries.rowwise().sum();
  for (Eigen::Index i = 0; i < degrees.size(); ++i)
    if (!(degrees(i) > 0.0))
      throw NumericalError("markov_normalize: row " + std::to_string(i) + " has zero mass (degenerate bandwidth)");
  return {degrees.cwiseInverse().asDiagonal() * kernel.entries, degrees};
}

/// Diffusion-map coordinates psi_j * lambda_j^t for the `dim` leading
/// nontrivial eigenpairs of P.
///
/// The eigenpairs come from the symmetric conjugate D^{1/2} P D^{-1/2}.
/// Right eigenvectors psi_j = D^{-1/2} v_j are scaled to unit norm under the
/// stationary measure pi = D / sum(D), so Euclidean distances between rows
/// of the full embedding equal diffusion distances. Each psi_j is signed so
/// that its largest-magnitude entry (lowest index on ties) is positive.
inline Embedding spectral_embed(const MarkovMatrix& markov, int dim, double t = 1.0)
{
  const auto k = markov.transition.rows();
  detail::require(dim >= 1 && dim <= k - 1, "spectral_embed: dimension must lie in [1, k-1]");
  detail::require(t > 0.0, "spectral_embed: diffusion time must be positive");

  const Vector sqrt_deg = markov.degrees.cwiseSqrt();
  Matrix sym = sqrt_deg.asDiagonal() * markov.transition * sqrt_deg.cwiseInverse().asDiagonal();
  sym = 0.5 * (sym + sym.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "spectral_embed: eigensolver failed (k = " << k << ", |S|_F = " << sym.norm() << ")";
    throw NumericalError(msg.str());
  }
  const Vector& values = solver.eigenvalues();  // ascending
  const Matrix& vectors = solver.eigenvectors();

  const double volume = markov.degrees.sum();
  Embedding out;
  out.diffusion_time = t;
  out.trivial_eigenvalue = values(k - 1);
  out.eigenvalues.resize(dim);
  out.coordinates.resize(k, dim);
  for (int j = 0; j < dim; ++j) {
    const Eigen::Index col = k - 2 - j;
    const double lambda = std::clamp(values(col), 0.0, 1.0);
    Vector psi = std::sqrt(volume) * (vectors.col(col).array() / sqrt_deg.array()).matrix();

    Eigen::Index pivot = 0;
    for (Eigen::Index i = 1; i < k; ++i)
      if (std::abs(psi(i)) > std::abs(psi(pivot))) pivot = i;
    if (psi(pivot) < 0.0) psi = -psi;

    out.eigenvalues(j) = lambda;
    out.coordinates.col(j) = std::pow(lambda, t) * psi;
  }
  return out;
}

/// Square root of the median nonzero squared pairwise distance.
inline double auto_bandwidth(const Matrix& points)
{
  std::vector<double> dist2;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index j = i + 1; j < points.rows(); ++j) {
      const double d = (points.row(i) - points.row(j)).squaredNorm();
      if (d > 0.0) dist2.push_back(d);
    }
  if (dist2.empty()) throw NumericalError("auto_bandwidth: all points coincide");
  std::sort(dist2.begin(), dist2.end());
  const auto n = dist2.size();
  const double median = n % 2 == 1 ? dist2[n / 2] : 0.5 * (dist2[n / 2 - 1] + dist2[n / 2]);
  return std::sqrt(median);
}

/// Root-mean-square pairwise distance. Unlike the median it is dominated by
/// the largest separations, so the kernel graph stays connected when the
/// points form a few well-separated groups of unequal size.
inline double rms_bandwidth(const Matrix& points)
{
  detail::require(points.rows() >= 2, "rms_bandwidth: need at least two points");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index j = i + 1; j < points.rows(); ++j) sum += (points.row(i) - points.row(j)).squaredNorm();
  if (!(sum > 0.0)) throw NumericalError("rms_bandwidth: all points coincide");
  const double pairs = 0.5 * static_cast<double>(points.rows()) * static_cast<double>(points.rows() - 1);
  return std::sqrt(sum / pairs);
}

/// Full pipeline: kernel (auto bandwidth unless given), Markov
/// normalization and spectral embedding into `dim` coordinates.
inline Embedding diffusion_map(const Matrix& points, int dim, double t = 1.0,
                               std::optional<double> epsilon = std::nullopt)
{
  const double eps = epsilon ? *epsilon : auto_bandwidth(points);
  return spectral_embed(markov_normalize(pairwise_kernel(points, eps)), dim, t);
}

} // namespace dmgrad
