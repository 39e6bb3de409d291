#include "dmgrad/diffusion_map.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

using namespace dmgrad;
using std::numbers::pi;

namespace {

Matrix circle_points(const std::vector<double>& angles)
{
  Matrix pts(static_cast<Eigen::Index>(angles.size()), 2);
  for (std::size_t i = 0; i < angles.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) << std::cos(angles[i]), std::sin(angles[i]);
  return pts;
}

std::vector<double> ranks(const std::vector<double>& v)
{
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b)
{
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

/// Best rank correlation between generating angles and embedded polar
/// angles over reflections and rotations (cut points at every sample).
double circular_rank_correlation(const std::vector<double>& truth, const Matrix& y)
{
  std::vector<double> phi(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) phi[i] = std::atan2(y(static_cast<Eigen::Index>(i), 1), y(static_cast<Eigen::Index>(i), 0));
  double best = -1.0;
  for (double mirror : {1.0, -1.0})
    for (std::size_t c = 0; c < truth.size(); ++c) {
      std::vector<double> shifted(truth.size());
      for (std::size_t i = 0; i < truth.size(); ++i) {
        double a = mirror * phi[i] - mirror * phi[c] + truth[c];
        a = std::fmod(a, 2.0 * pi);
        if (a < 0.0) a += 2.0 * pi;
        shifted[i] = a;
      }
      best = std::max(best, spearman(truth, shifted));
    }
  return best;
}

} // namespace

TEST(PairwiseKernel, Examples)
{
  Matrix same(2, 3);
  same << 1, 2, 3, 1, 2, 3;
  EXPECT_EQ(pairwise_kernel(same, 0.7).entries, Matrix::Ones(2, 2));

  const double eps = 0.4;
  Matrix pair(2, 2);
  pair << 0.0, 0.0, eps * std::sqrt(2.0), 0.0;
  const auto w = pairwise_kernel(pair, eps);
  EXPECT_NEAR(w.entries(0, 1), std::exp(-1.0), 1e-15);
  EXPECT_EQ(w.bandwidth, eps);

  Rng rng(1);
  const auto big = pairwise_kernel(standard_normal(30, 4, rng), 1.3);
  EXPECT_EQ(big.entries, big.entries.transpose());
  EXPECT_TRUE((big.entries.diagonal().array() == 1.0).all());
  EXPECT_THROW(pairwise_kernel(Matrix::Ones(1, 2), 1.0), std::invalid_argument);
  EXPECT_THROW(pairwise_kernel(same, 0.0), std::invalid_argument);
}

TEST(MarkovNormalize, RowsSumToOne)
{
  KernelMatrix w{Matrix::Ones(2, 2), 1.0};
  const auto p = markov_normalize(w);
  EXPECT_EQ(p.transition, Matrix::Constant(2, 2, 0.5));

  KernelMatrix near_identity{Matrix::Identity(4, 4), 1.0};
  near_identity.entries(0, 1) = near_identity.entries(1, 0) = 1e-14;
  near_identity.entries(2, 3) = near_identity.entries(3, 2) = 1e-300;
  const auto q = markov_normalize(near_identity);
  EXPECT_LT((q.transition.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);

  Rng rng(2);
  const auto r = markov_normalize(pairwise_kernel(standard_normal(25, 3, rng), 0.8));
  EXPECT_LT((r.transition.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_TRUE((r.transition * Vector::Ones(25)).isApprox(Vector::Ones(25), 1e-12));
}

TEST(MarkovNormalize, ZeroRowIsDegenerate)
{
  KernelMatrix w{Matrix::Zero(3, 3), 1.0};
  w.entries(0, 0) = w.entries(1, 1) = 1.0;
  EXPECT_THROW(markov_normalize(w), NumericalError);
}

TEST(SpectralEmbed, TrivialEigenvalueAndBounds)
{
  Rng rng(3);
  const auto emb = diffusion_map(standard_normal(40, 5, rng), 6);
  EXPECT_NEAR(emb.trivial_eigenvalue, 1.0, 1e-10);
  for (Eigen::Index j = 0; j < emb.eigenvalues.size(); ++j) {
    EXPECT_GT(emb.eigenvalues(j), 0.0);
    EXPECT_LE(emb.eigenvalues(j), 1.0);
    if (j > 0) EXPECT_LE(emb.eigenvalues(j), emb.eigenvalues(j - 1));
  }
}

TEST(SpectralEmbed, CoordinatesAreScaledRightEigenvectors)
{
  Rng rng(4);
  const auto markov = markov_normalize(pairwise_kernel(standard_normal(30, 3, rng), 1.0));
  const double t = 2.5;
  const auto emb = spectral_embed(markov, 3, t);
  for (int j = 0; j < 3; ++j) {
    const Vector psi = emb.coordinates.col(j) / std::pow(emb.eigenvalues(j), t);
    EXPECT_TRUE((markov.transition * psi).isApprox(emb.eigenvalues(j) * psi, 1e-9));
    // largest-magnitude entry positive
    Eigen::Index pivot = 0;
    psi.cwiseAbs().maxCoeff(&pivot);
    EXPECT_GT(psi(pivot), 0.0);
  }
}

TEST(SpectralEmbed, DimensionBounds)
{
  Rng rng(5);
  const auto markov = markov_normalize(pairwise_kernel(standard_normal(6, 2, rng), 1.0));
  EXPECT_THROW(spectral_embed(markov, 0), std::invalid_argument);
  EXPECT_THROW(spectral_embed(markov, 6), std::invalid_argument);
  EXPECT_NO_THROW(spectral_embed(markov, 5));
  EXPECT_THROW(spectral_embed(markov, 2, 0.0), std::invalid_argument);
}

// Diffusion distance at time t from its definition,
//   D_t(i, j)^2 = sum_l (P^t_il - P^t_jl)^2 / pi_l,   pi = d / sum d,
// equals the Euclidean distance of the full embedding.
TEST(SpectralEmbed, FullEmbeddingIsometricToDiffusionDistance)
{
  Rng rng(6);
  const int k = 25;
  const Matrix pts = standard_normal(k, 3, rng);
  const auto markov = markov_normalize(pairwise_kernel(pts, 1.2));
  const int t = 2;
  const auto emb = spectral_embed(markov, k - 1, t);
  const Matrix pt = markov.transition * markov.transition;
  const Vector stationary = markov.degrees / markov.degrees.sum();
  double worst = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) {
      const double defn = ((pt.row(i) - pt.row(j)).array().square() / stationary.transpose().array()).sum();
      const double embd = (emb.coordinates.row(i) - emb.coordinates.row(j)).squaredNorm();
      worst = std::max(worst, std::abs(std::sqrt(defn) - std::sqrt(embd)));
    }
  EXPECT_LT(worst, 1e-8);
}

TEST(SpectralEmbed, IdenticalPointsCollapse)
{
  Matrix pts(2, 2);
  pts << 0.3, 0.3, 0.3, 0.3;
  const auto emb = spectral_embed(markov_normalize(pairwise_kernel(pts, 1.0)), 1);
  EXPECT_NEAR(emb.eigenvalues(0), 0.0, 1e-12);
  EXPECT_NEAR(emb.coordinates(0, 0), emb.coordinates(1, 0), 1e-12);
}

TEST(SpectralEmbed, CircleRecoversCyclicOrder)
{
  Rng rng(7);
  std::uniform_real_distribution<double> u(0.0, 2.0 * pi);
  std::vector<double> angles(200);
  for (auto& a : angles) a = u(rng);
  const auto emb = diffusion_map(circle_points(angles), 2);
  EXPECT_GE(circular_rank_correlation(angles, emb.coordinates), 0.99);
}

TEST(SpectralEmbed, EvenlySpacedCircleEmbedsOnACircle)
{
  std::vector<double> angles(60);
  for (std::size_t i = 0; i < angles.size(); ++i) angles[i] = 2.0 * pi * static_cast<double>(i) / 60.0;
  const auto emb = diffusion_map(circle_points(angles), 2);
  const Vector radius = emb.coordinates.rowwise().norm();
  EXPECT_LT((radius.array() - radius.mean()).abs().maxCoeff() / radius.mean(), 1e-6);
  EXPECT_GE(circular_rank_correlation(angles, emb.coordinates), 0.999);
}

TEST(DiffusionMap, PermutationEquivariance)
{
  Rng rng(8);
  const Matrix pts = standard_normal(20, 3, rng);
  std::vector<int> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix permuted(20, 3);
  for (int i = 0; i < 20; ++i) permuted.row(i) = pts.row(perm[static_cast<std::size_t>(i)]);
  const auto a = diffusion_map(pts, 3);
  const auto b = diffusion_map(permuted, 3);
  for (int i = 0; i < 20; ++i)
    EXPECT_TRUE(b.coordinates.row(i).isApprox(a.coordinates.row(perm[static_cast<std::size_t>(i)]), 1e-8));
}

TEST(DiffusionMap, IsometryInvariance)
{
  Rng rng(9);
  const Matrix pts = standard_normal(20, 3, rng);
  const Matrix rot = Eigen::HouseholderQR<Matrix>(standard_normal(3, 3, rng)).householderQ();
  Matrix moved = pts * rot.transpose();
  moved.rowwise() += Eigen::RowVector3d(4.0, -2.0, 0.5);
  const auto a = diffusion_map(pts, 3);
  const auto b = diffusion_map(moved, 3);
  EXPECT_LT((a.coordinates - b.coordinates).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(DiffusionMap, BitIdenticalReruns)
{
  Rng rng(10);
  const Matrix pts = standard_normal(50, 4, rng);
  EXPECT_EQ(diffusion_map(pts, 3).coordinates, diffusion_map(pts, 3).coordinates);
}

TEST(AutoBandwidth, Examples)
{
  Matrix two(2, 1);
  two << 0.0, 2.0;
  EXPECT_DOUBLE_EQ(auto_bandwidth(two), 2.0);

  // duplicate of the first point contributes a zero distance, which is excluded:
  // nonzero squared distances {1, 1} -> median 1
  Matrix dup(3, 1);
  dup << 0.0, 0.0, 1.0;
  EXPECT_DOUBLE_EQ(auto_bandwidth(dup), 1.0);

  Matrix same(3, 2);
  same.setConstant(1.0);
  EXPECT_THROW(auto_bandwidth(same), NumericalError);

  Rng rng(11);
  Matrix pts = standard_normal(15, 2, rng);
  const double ref = auto_bandwidth(pts);
  pts.row(3).swap(pts.row(11));
  pts.row(0).swap(pts.row(7));
  EXPECT_EQ(auto_bandwidth(pts), ref);
}

TEST(RmsBandwidth, MatchesDefinition)
{
  Matrix pts(3, 1);
  pts << 0.0, 1.0, 3.0;
  // squared distances 1, 9, 4 -> mean 14/3
  EXPECT_DOUBLE_EQ(rms_bandwidth(pts), std::sqrt(14.0 / 3.0));
  Matrix same = Matrix::Ones(2, 2);
  EXPECT_THROW(rms_bandwidth(same), NumericalError);
}
