#include "ldf/reweight.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <numeric>
#include <random>

using namespace ldf;
using namespace ldf::rw;

namespace {

Matrix gaussian(int n, int p, std::uint64_t seed, double shift = 0.0)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(shift, 1.0);
  Matrix x(n, p);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x.data()[i] = nd(rng);
  return x;
}

Matrix column(std::initializer_list<double> v)
{
  Matrix x(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double a : v)
    x(i++, 0) = a;
  return x;
}

std::vector<Eigen::Index> random_permutation(Eigen::Index n, std::uint64_t seed)
{
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

Matrix permute_rows(const Matrix& x, const std::vector<Eigen::Index>& p)
{
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < p.size(); ++i)
    y.row(static_cast<Eigen::Index>(i)) = x.row(p[i]);
  return y;
}

void expect_valid(const Vector& w)
{
  EXPECT_TRUE(w.allFinite());
  EXPECT_GE(w.minCoeff(), 0.0);
}

} // namespace

TEST(Kernel, HandValues)
{
  Eigen::RowVectorXd x(2), y(2);
  x << 1, 0;
  y << 1, 0;
  EXPECT_EQ(kernel_eval(x, y, { KernelKind::rbf, 1.0 }), 1.0);
  y << 0, 0;
  EXPECT_NEAR(kernel_eval(x, y, { KernelKind::rbf, 1.0 }), std::exp(-1.0), 1e-15);
  y << 1, 5;
  EXPECT_NEAR(kernel_eval(x, y, { KernelKind::poly, 1.0, 2 }), 4.0, 1e-15);
  EXPECT_THROW(kernel_eval(x, Eigen::RowVectorXd::Zero(3), {}), DataError);
}

TEST(Kernel, MatrixMatchesPointwise)
{
  const Matrix a = gaussian(7, 3, 1), b = gaussian(5, 3, 2);
  for (const KernelConfig cfg : { KernelConfig{ KernelKind::rbf, 0.5 }, KernelConfig{ KernelKind::poly, 0.1, 3 } }) {
    const Matrix k = kernel_matrix(a, b, cfg);
    for (Eigen::Index i = 0; i < 7; ++i)
      for (Eigen::Index j = 0; j < 5; ++j)
        EXPECT_NEAR(k(i, j), kernel_eval(a.row(i), b.row(j), cfg), 1e-12);
  }
  EXPECT_THROW(kernel_matrix(a, b, { KernelKind::rbf, 0.0 }), DataError);
  EXPECT_THROW(kernel_matrix(a, gaussian(2, 2, 3), {}), DataError);
}

TEST(Nnw, VoronoiCounts)
{
  const auto w = nnw_weights(column({ 0, 10 }), column({ 0.1, 0.2, 9.9 }), 1);
  EXPECT_EQ(w.method, Method::nnw);
  EXPECT_NEAR(w.weights(0), 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(w.weights(1), 2.0 / 3.0, 1e-15);
}

TEST(Nnw, IdenticalSetsGiveOnes)
{
  const Matrix s = gaussian(40, 3, 4);
  EXPECT_TRUE(nnw_weights(s, s, 1).weights.isApprox(Vector::Ones(40)));
}

TEST(Nnw, AllNeighborsGiveOnes)
{
  const Matrix s = gaussian(12, 2, 5), t = gaussian(9, 2, 6, 1.0);
  EXPECT_TRUE(nnw_weights(s, t, 12).weights.isApprox(Vector::Ones(12)));
}

TEST(Nnw, Errors)
{
  const Matrix s = gaussian(3, 2, 1);
  EXPECT_THROW(nnw_weights(s, s, 4), DataError);
  EXPECT_THROW(nnw_weights(s, s, 0), DataError);
  EXPECT_THROW(nnw_weights(s, Matrix(0, 2), 1), DataError);
  EXPECT_THROW(nnw_weights(s, gaussian(3, 1, 1), 1), DataError);
}

TEST(Nnw, BruteForceEquivalenceProperty)
{
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int m = 50 + static_cast<int>(seed) * 20, n = 30 + static_cast<int>(seed) * 5;
    const Matrix s = gaussian(m, 3, seed), t = gaussian(n, 3, seed + 50, 0.5);
    const std::size_t k = 1 + seed % 6;
    // oracle: full sort of all source rows for every target row
    Vector counts = Vector::Zero(m);
    for (int j = 0; j < n; ++j) {
      std::vector<std::pair<double, int>> d;
      for (int i = 0; i < m; ++i)
        d.emplace_back((s.row(i) - t.row(j)).norm(), i);
      std::sort(d.begin(), d.end());
      for (std::size_t r = 0; r < k; ++r)
        counts(d[r].second) += 1.0;
    }
    const Vector want = counts * (static_cast<double>(m) / (n * static_cast<double>(k)));
    const Vector got = nnw_weights(s, t, k).weights;
    EXPECT_TRUE(got.isApprox(want, 1e-14)) << "seed " << seed;
    EXPECT_NEAR(got.mean(), 1.0, 1e-12);
    expect_valid(got);
  }
}

TEST(Kliep, IdenticalSetsNearUniform)
{
  const Matrix s = gaussian(200, 2, 7);
  const auto w = kliep(s, s, { KernelKind::rbf, 0.5 }).weights.weights;
  EXPECT_NEAR(w.mean(), 1.0, 1e-6);
  const double sd = std::sqrt((w.array() - w.mean()).square().sum() / static_cast<double>(w.size() - 1));
  EXPECT_LT(sd, 0.2);
}

TEST(Kliep, IdenticalSetsWithinBandProperty)
{
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    for (int p : { 2, 3, 4 }) {
      const Matrix s = gaussian(100, p, seed + 500);
      const Vector w = kliep(s, s, { KernelKind::rbf, 0.5 }).weights.weights;
      EXPECT_GE(w.minCoeff(), 0.8) << "seed " << seed << " p " << p;
      EXPECT_LE(w.maxCoeff(), 1.2) << "seed " << seed << " p " << p;
    }
}

TEST(Kliep, ProjectionIsNearestFeasiblePoint)
{
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd(0.0, 2.0);
  std::uniform_real_distribution<double> ub(0.1, 2.0);
  for (int rep = 0; rep < 20; ++rep) {
    Vector v(5), b(5);
    for (Eigen::Index j = 0; j < 5; ++j) {
      v(j) = nd(rng);
      b(j) = ub(rng);
    }
    const auto p = kliep_project(v, b);
    ASSERT_TRUE(p.has_value());
    EXPECT_GE(p->minCoeff(), 0.0);
    EXPECT_NEAR(b.dot(*p), 1.0, 1e-12);
    // random feasible points: scaled nonnegative vectors on the hyperplane
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 2000; ++k) {
      Vector q(5);
      for (auto& x : q)
        x = u(rng) * (k % 2 ? 1.0 : static_cast<double>(k % 5 == 0));
      if (!(b.dot(q) > 0.0))
        continue;
      q /= b.dot(q);
      EXPECT_LE((*p - v).norm(), (q - v).norm() + 1e-9);
    }
  }
  EXPECT_FALSE(kliep_project(Vector::Ones(3), Vector::Zero(3)).has_value());
}

TEST(Kliep, DensityRatioDirection)
{
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> us(0.0, 2.0), ut(0.0, 1.0);
  Matrix s(500, 1), t(500, 1);
  for (int i = 0; i < 500; ++i) {
    s(i, 0) = us(rng);
    t(i, 0) = ut(rng);
  }
  const Vector w = kliep(s, t, { KernelKind::rbf, 0.5 }).weights.weights;
  double lo = 0.0, hi = 0.0;
  int n_lo = 0, n_hi = 0;
  for (int i = 0; i < 500; ++i)
    (s(i, 0) < 1.0 ? (++n_lo, lo) : (++n_hi, hi)) += w(i);
  EXPECT_GT(lo / n_lo, hi / n_hi);
}

TEST(Kliep, ConstraintAndMonotoneObjectiveProperty)
{
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix s = gaussian(200, 3, seed), t = gaussian(50, 3, seed + 9, 0.7);
    for (const KernelConfig cfg : { KernelConfig{ KernelKind::rbf, 0.1 }, KernelConfig{ KernelKind::rbf, 1.0 } }) {
      const auto r = kliep(s, t, cfg);
      expect_valid(r.weights.weights);
      EXPECT_NEAR(r.weights.weights.mean(), 1.0, 1e-6) << "seed " << seed;
      EXPECT_GE(r.alpha.minCoeff(), 0.0);
      for (std::size_t i = 1; i < r.objective.size(); ++i)
        EXPECT_GT(r.objective[i], r.objective[i - 1]);
      // weights are the model density at the source points
      const Vector direct = kernel_matrix(s, t.topRows(r.alpha.size()), cfg) * r.alpha;
      EXPECT_TRUE(r.weights.weights.isApprox(direct, 1e-12));
    }
  }
}

TEST(Kliep, CentersAreFirstTargets)
{
  const Matrix s = gaussian(30, 2, 1), t = gaussian(20, 2, 2);
  EXPECT_EQ(kliep(s, t, {}, 5).alpha.size(), 5);
  EXPECT_EQ(kliep(s, t, {}, 100).alpha.size(), 20);
  EXPECT_THROW(kliep(s, Matrix(0, 2), {}), DataError);
}

TEST(Kmm, IdenticalSetsNearUniform)
{
  const Matrix s = gaussian(120, 2, 3);
  const KernelConfig cfg{ KernelKind::rbf, 0.5 };
  const auto r = kmm(s, s, cfg);
  const Vector& w = r.weights.weights;
  EXPECT_GE(w.minCoeff(), 0.8);
  EXPECT_LE(w.maxCoeff(), 1.2);
  const Matrix K = kernel_matrix(s, s, cfg);
  const Vector kappa = K.rowwise().sum();
  EXPECT_LE(kmm_objective(K, kappa, w), kmm_objective(K, kappa, Vector::Ones(120)) + 1e-9);
}

TEST(Kmm, TwoPointGridSearchOracle)
{
  Matrix K(2, 2);
  K << 2.0, 0.5, 0.5, 1.0;
  Vector kappa(2);
  kappa << 3.0, 0.2;
  const double B = 2.0, eps = 0.25;
  const auto r = kmm_solve(K, kappa, B, eps, 20000, 0.0);
  // exhaustive search over the feasible set at resolution 1e-3
  double best = std::numeric_limits<double>::infinity();
  Vector w(2);
  for (int a = 0; a <= 2000; ++a)
    for (int b = 0; b <= 2000; ++b) {
      w << a * 1e-3, b * 1e-3;
      if (std::abs(w.sum() - 2.0) <= 2.0 * eps + 1e-12)
        best = std::min(best, kmm_objective(K, kappa, w));
    }
  const double got = kmm_objective(K, kappa, r.weights.weights);
  EXPECT_NEAR(got, best, 1e-4);
  EXPECT_LE(std::abs(r.weights.weights.sum() - 2.0), 2.0 * eps + 1e-12);
}

TEST(Kmm, ConstraintsAndMonotoneProperty)
{
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix s = gaussian(200, 3, seed + 20), t = gaussian(50, 3, seed + 40, 0.8);
    for (const double B : { 1000.0, 3.0 }) {
      const auto r = kmm(s, t, { KernelKind::rbf, 0.5 }, B);
      const Vector& w = r.weights.weights;
      expect_valid(w);
      EXPECT_LE(w.maxCoeff(), B);
      const double eps = kmm_default_eps(200);
      EXPECT_LE(std::abs(w.sum() - 200.0), 200.0 * eps * (1.0 + 1e-12));
      EXPECT_LE(r.objective.back(), r.objective.front());
      for (std::size_t i = 1; i < r.objective.size(); ++i)
        EXPECT_LE(r.objective[i], r.objective[i - 1] + 1e-9 * std::abs(r.objective[i - 1]));
    }
  }
}

TEST(Kmm, ProjectionIsNearestFeasiblePoint)
{
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int rep = 0; rep < 20; ++rep) {
    Vector v(6);
    for (auto& x : v)
      x = nd(rng);
    const double B = 2.0, lo = 4.0, hi = 5.0;
    const Vector p = kmm_project(v, B, lo, hi);
    EXPECT_GE(p.minCoeff(), 0.0);
    EXPECT_LE(p.maxCoeff(), B);
    EXPECT_GE(p.sum(), lo - 1e-9);
    EXPECT_LE(p.sum(), hi + 1e-9);
    // no random feasible point is closer
    std::uniform_real_distribution<double> u(0.0, B);
    for (int k = 0; k < 2000; ++k) {
      Vector q(6);
      for (auto& x : q)
        x = u(rng);
      if (q.sum() < lo || q.sum() > hi)
        continue;
      EXPECT_LE((p - v).norm(), (q - v).norm() + 1e-9);
    }
  }
}

TEST(Kmm, Errors)
{
  EXPECT_THROW(kmm_solve(Matrix::Identity(2, 2), Vector::Ones(3), 1.0, 0.1), DataError);
  EXPECT_THROW(kmm_solve(Matrix::Identity(2, 2), Vector::Ones(2), 0.0, 0.1), DataError);
  EXPECT_THROW(kmm_solve(Matrix::Identity(2, 2), Vector::Ones(2), 0.1, 0.1), DataError);
  EXPECT_THROW(kmm(Matrix(0, 2), gaussian(3, 2, 1), {}), DataError);
}

TEST(Reweight, PermutationEquivarianceProperty)
{
  const Matrix s = gaussian(80, 2, 30), t = gaussian(40, 2, 31, 0.6);
  const auto p = random_permutation(80, 32);
  const Matrix sp = permute_rows(s, p);
  const KernelConfig cfg{ KernelKind::rbf, 0.5 };
  const std::vector<std::pair<const char*, std::function<Vector(const Matrix&)>>> methods{
    { "nnw", [&](const Matrix& x) { return nnw_weights(x, t, 6).weights; } },
    { "kliep", [&](const Matrix& x) { return kliep(x, t, cfg).weights.weights; } },
    { "kmm", [&](const Matrix& x) { return kmm(x, t, cfg).weights.weights; } },
  };
  for (const auto& [name, fn] : methods) {
    const Vector w = fn(s), wp = fn(sp);
    for (std::size_t i = 0; i < p.size(); ++i)
      EXPECT_NEAR(wp(static_cast<Eigen::Index>(i)), w(p[i]), 1e-6) << name << " row " << i;
  }
}
