#pragma once

#include "dmgrad/core.hpp"

#include <cmath>
#include <vector>

namespace dmgrad {

/// RKHS "learning gradient" baseline: a vector field
///   F(x) = sum_i C_i K_t(x, x_i),   K_t(x, y) = exp(-|x - y|^2 / 2t^2),
/// whose coefficients minimize
///   sum_{i,j} w_ij (f_j - f_i - F(x_i) . (x_j - x_i))^2 + lambda |C|^2
/// with w_ij = K_t(x_i, x_j) and lambda = t^(d+3).
class LearningGradient
{
public:
  LearningGradient(Matrix samples, Matrix coefficients, double t)
    : samples_(std::move(samples)), coefficients_(std::move(coefficients)), t_(t)
  {}

  /// Fits the field. `samples` holds one point per row, `d` is the
  /// intrinsic dimension used in the regularization weight.
  /// Kernel entries below this are dropped; keeps the products in the
  /// normal equations out of the subnormal range.
  static constexpr double kNegligibleWeight = 1e-150;

  static LearningGradient fit(const Matrix& samples, const Vector& fvals, double t, int d)
  {
    detail::require(t > 0.0, "LearningGradient: t must be positive");
    detail::require(d >= 1, "LearningGradient: manifold dimension must be positive");
    detail::require(samples.rows() == fvals.size(), "LearningGradient: value count mismatch");
    detail::require(samples.rows() >= 1, "LearningGradient: no samples");
    const Eigen::Index m = samples.rows();
    const Eigen::Index n = samples.cols();
    const double lambda = std::pow(t, d + 3);

    Matrix kernel(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      kernel(i, i) = 1.0;
      for (Eigen::Index j = i + 1; j < m; ++j) {
        double w = std::exp(-(samples.row(i) - samples.row(j)).squaredNorm() / (2.0 * t * t));
        if (w < kNegligibleWeight) w = 0.0;
        kernel(i, j) = w;
        kernel(j, i) = w;
      }
    }

    // Per-sample second moments S_i = sum_j w_ij d_ij d_ij^T and targets
    // b_i = sum_j w_ij (f_j - f_i) d_ij, d_ij = x_j - x_i.
    std::vector<Matrix> second(static_cast<std::size_t>(m), Matrix::Zero(n, n));
    Matrix target = Matrix::Zero(m, n);
    for (Eigen::Index i = 0; i < m; ++i) {
      auto& s = second[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < m; ++j) {
        if (j == i) continue;
        const Vector diff = (samples.row(j) - samples.row(i)).transpose();
        const double w = kernel(i, j);
        s.noalias() += w * diff * diff.transpose();
        target.row(i) += (w * (fvals(j) - fvals(i))) * diff.transpose();
      }
    }

    // Normal equations (K (x) I) S (K (x) I) c + lambda c = (K (x) I) b with
    // c ordered sample-major. Block (p, q) of the system, indexed by samples,
    // is K diag(S_pq) K.
    const Eigen::Index dim = m * n;
    Matrix system(dim, dim);
    Vector entries(m);
    Matrix block(m, m);
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p; q < n; ++q) {
        for (Eigen::Index i = 0; i < m; ++i) entries(i) = second[static_cast<std::size_t>(i)](p, q);
        block.noalias() = kernel * entries.asDiagonal() * kernel;
        for (Eigen::Index a = 0; a < m; ++a)
          for (Eigen::Index b = 0; b < m; ++b) {
            system(a * n + p, b * n + q) = block(a, b);
            system(b * n + q, a * n + p) = block(a, b);
          }
      }
    }
    system.diagonal().array() += lambda;

    const Matrix projected = kernel * target;  // row a: sum_i K_ai b_i
    Vector rhs(dim);
    for (Eigen::Index a = 0; a < m; ++a) rhs.segment(a * n, n) = projected.row(a).transpose();

    Eigen::LLT<Matrix> llt(system);
    if (llt.info() != Eigen::Success)
      throw NumericalError("LearningGradient: normal system is not positive definite");
    const Vector solution = llt.solve(rhs);
    if (!solution.allFinite())
      throw NumericalError("LearningGradient: non-finite solution");

    Matrix coefficients(m, n);
    for (Eigen::Index a = 0; a < m; ++a) coefficients.row(a) = solution.segment(a * n, n).transpose();
    return LearningGradient(samples, std::move(coefficients), t);
  }

  Vector operator()(const Eigen::Ref<const Vector>& x) const
  {
    Vector out = Vector::Zero(samples_.cols());
    for (Eigen::Index i = 0; i < samples_.rows(); ++i) {
      const double w = std::exp(-(samples_.row(i).transpose() - x).squaredNorm() / (2.0 * t_ * t_));
      out += w * coefficients_.row(i).transpose();
    }
    return out;
  }

  const Matrix& coefficients() const { return coefficients_; }

private:
  Matrix samples_;
  Matrix coefficients_;
  double t_;
};

} // namespace dmgrad
