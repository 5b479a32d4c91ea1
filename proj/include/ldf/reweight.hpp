#pragma once

// Importance weights for source samples under covariate shift.

#include "ldf/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace ldf::rw {

enum class Method
{
  uniform,
  nnw,
  kliep,
  kmm
};

inline const char* to_string(Method m)
{
  switch (m) {
    case Method::nnw: return "NNW";
    case Method::kliep: return "KLIEP";
    case Method::kmm: return "KMM";
    default: return "uniform";
  }
}

struct WeightVector
{
  Vector weights;
  Method method = Method::uniform;

  double mean() const { return weights.size() ? weights.mean() : 0.0; }
};

inline WeightVector uniform_weights(std::size_t m)
{
  return { Vector::Ones(static_cast<Eigen::Index>(m)), Method::uniform };
}

enum class KernelKind
{
  rbf,
  poly
};

struct KernelConfig
{
  KernelKind kind = KernelKind::rbf;
  double gamma = 1.0;
  int degree = 2;

  void validate() const
  {
    if (!(gamma > 0.0))
      throw DataError("kernel: gamma must be > 0");
    if (kind == KernelKind::poly && degree < 1)
      throw DataError("kernel: degree must be >= 1");
  }
};

inline KernelKind parse_kernel(const std::string& s)
{
  if (s == "rbf")
    return KernelKind::rbf;
  if (s == "poly")
    return KernelKind::poly;
  throw DataError("unknown kernel '" + s + "'");
}

inline const char* to_string(KernelKind k)
{
  return k == KernelKind::rbf ? "rbf" : "poly";
}

//! rbf: exp(-gamma |x - y|^2); poly: (gamma <x, y> + 1)^degree.
inline double kernel_eval(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                          const Eigen::Ref<const Eigen::RowVectorXd>& y,
                          const KernelConfig& cfg)
{
  if (x.size() != y.size())
    throw DataError("kernel_eval: dimension mismatch");
  if (cfg.kind == KernelKind::rbf)
    return std::exp(-cfg.gamma * (x - y).squaredNorm());
  return std::pow(cfg.gamma * x.dot(y) + 1.0, cfg.degree);
}

//! K(i, j) = k(a_i, b_j).
inline Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelConfig& cfg)
{
  cfg.validate();
  if (a.cols() != b.cols())
    throw DataError("kernel_matrix: dimension mismatch");
  Matrix k = a * b.transpose();
  if (cfg.kind == KernelKind::rbf) {
    const Vector na = a.rowwise().squaredNorm();
    const Vector nb = b.rowwise().squaredNorm();
    for (Eigen::Index j = 0; j < k.cols(); ++j)
      for (Eigen::Index i = 0; i < k.rows(); ++i)
        k(i, j) = std::exp(-cfg.gamma * std::max(0.0, na(i) + nb(j) - 2.0 * k(i, j)));
  } else {
    k = (cfg.gamma * k.array() + 1.0).pow(cfg.degree).matrix();
  }
  return k;
}

// ---------------------------------------------------------------------------
// Nearest-neighbor weighting

//! Every target sample adds one count to each of its n_neighbors nearest
//! source samples (ties by lower index). Counts are rescaled to mean 1:
//! w_i = count_i * m / (n * n_neighbors). With n_neighbors = 1 this counts the
//! target samples inside each source sample's Voronoi cell.
inline WeightVector nnw_weights(const Matrix& source, const Matrix& target, std::size_t n_neighbors)
{
  const auto m = static_cast<std::size_t>(source.rows());
  const auto n = static_cast<std::size_t>(target.rows());
  if (n_neighbors == 0)
    throw DataError("nnw: n_neighbors must be >= 1");
  if (m < n_neighbors)
    throw DataError("nnw: " + std::to_string(m) + " source samples, n_neighbors = " + std::to_string(n_neighbors));
  if (n == 0)
    throw DataError("nnw: no target samples");
  if (source.cols() != target.cols())
    throw DataError("nnw: dimension mismatch");

  Vector counts = Vector::Zero(static_cast<Eigen::Index>(m));
  std::vector<std::pair<double, std::size_t>> d(m);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < m; ++i)
      d[i] = { (source.row(static_cast<Eigen::Index>(i)) - target.row(static_cast<Eigen::Index>(t))).squaredNorm(), i };
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(n_neighbors), d.end());
    for (std::size_t j = 0; j < n_neighbors; ++j)
      counts(static_cast<Eigen::Index>(d[j].second)) += 1.0;
  }
  return { counts * (static_cast<double>(m) / static_cast<double>(n * n_neighbors)), Method::nnw };
}

inline WeightVector nnw_weights(const Dataset& source, const Dataset& target, std::size_t n_neighbors)
{
  return nnw_weights(source.samples, target.samples, n_neighbors);
}

// ---------------------------------------------------------------------------
// KLIEP

struct KliepResult
{
  WeightVector weights;
  Vector alpha;
  //! Objective after every accepted iteration; front() is the starting point.
  std::vector<double> objective;
  int iterations = 0;
};

//! Euclidean projection onto {alpha >= 0, b'alpha = 1}: the point
//! max(0, v - lambda b), with lambda bracketed, bisected, then solved exactly on
//! the active set. Empty when no feasible point exists.
inline std::optional<Vector> kliep_project(const Vector& v, const Vector& b)
{
  auto at = [&](double lambda) { return (v - lambda * b).cwiseMax(0.0).eval(); };
  auto f = [&](double lambda) { return b.dot(at(lambda)); };
  if (!(b.maxCoeff() > 0.0))
    return std::nullopt;
  // f is non-increasing in lambda
  double lo = -1.0, hi = 1.0;
  while (f(lo) < 1.0) {
    hi = lo;
    lo *= 2.0;
    if (!std::isfinite(lo))
      return std::nullopt;
  }
  while (f(hi) > 1.0) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi))
      return std::nullopt;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi)
      break;
    (f(mid) > 1.0 ? lo : hi) = mid;
  }
  const double mid = 0.5 * (lo + hi);
  double bv = 0.0, bb = 0.0;
  for (Eigen::Index j = 0; j < v.size(); ++j)
    if (v(j) - mid * b(j) > 0.0) {
      bv += b(j) * v(j);
      bb += b(j) * b(j);
    }
  double lambda = mid;
  if (bb > 0.0) {
    const double exact = (bv - 1.0) / bb;
    if (exact >= lo && exact <= hi)
      lambda = exact;
  }
  Vector alpha = at(lambda);
  const double sum = b.dot(alpha);
  if (!(sum > 0.0))
    return std::nullopt;
  return Vector(alpha / sum);
}

//! Maximizes sum_t log(sum_j alpha_j k(x_t, c_j)) over alpha >= 0 subject to
//! mean_i sum_j alpha_j k(x_i^S, c_j) = 1, where the centers c_j are the first
//! n_centers target samples. Projected gradient ascent with a backtracking
//! step: a step is accepted only if it increases the objective. The final
//! rescale only removes rounding drift from the equality.
inline KliepResult kliep(const Matrix& source,
                         const Matrix& target,
                         const KernelConfig& cfg,
                         std::size_t n_centers = 100,
                         int max_iter = 1000,
                         double tol = 1e-6)
{
  cfg.validate();
  if (source.rows() == 0 || target.rows() == 0)
    throw DataError("kliep: empty source or target");
  const auto b = static_cast<Eigen::Index>(std::min<std::size_t>(n_centers, static_cast<std::size_t>(target.rows())));
  if (b == 0)
    throw DataError("kliep: need at least one center");
  const Matrix centers = target.topRows(b);
  const Matrix A = kernel_matrix(target, centers, cfg);
  const Matrix Ks = kernel_matrix(source, centers, cfg);
  // summed in sorted order so the solver path does not depend on source row order
  Vector bvec(b);
  for (Eigen::Index j = 0; j < b; ++j) {
    std::vector<double> col(Ks.col(j).begin(), Ks.col(j).end());
    std::sort(col.begin(), col.end());
    bvec(j) = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(source.rows());
  }
  if (!(bvec.squaredNorm() > 0.0))
    throw DivergenceError("kliep: source kernel means vanish");

  auto objective = [&](const Vector& alpha) {
    const Vector dens = A * alpha;
    if ((dens.array() <= 0.0).any())
      return -std::numeric_limits<double>::infinity();
    return dens.array().log().sum();
  };
  auto project = [&](const Vector& v) { return kliep_project(v, bvec); };

  KliepResult res;
  Vector alpha = Vector::Ones(b) / bvec.sum();
  double obj = objective(alpha);
  if (!std::isfinite(obj))
    throw DivergenceError("kliep: non-finite objective at the starting point");
  res.objective.push_back(obj);

  Vector grad = A.transpose() * (A * alpha).cwiseInverse();
  double step = 0.1 * alpha.norm() / std::max(grad.norm(), 1e-300);
  for (int it = 0; it < max_iter && step > 1e-14; ++it) {
    const auto cand = project(alpha + step * grad);
    const double cand_obj = cand ? objective(*cand) : -std::numeric_limits<double>::infinity();
    if (std::isnan(cand_obj))
      throw DivergenceError("kliep: non-finite objective");
    if (cand_obj > obj) {
      const double change = cand_obj - obj;
      alpha = *cand;
      obj = cand_obj;
      res.objective.push_back(obj);
      res.iterations = it + 1;
      if (change < tol)
        break;
      grad = A.transpose() * (A * alpha).cwiseInverse();
      step *= 2.0;
    } else {
      step *= 0.5;
    }
  }
  res.alpha = alpha;
  res.weights = { (Ks * alpha).cwiseMax(0.0), Method::kliep };
  if (!res.weights.weights.allFinite())
    throw DivergenceError("kliep: non-finite weights");
  return res;
}

inline WeightVector kliep_weights(const Dataset& source,
                                  const Dataset& target,
                                  const KernelConfig& cfg,
                                  std::size_t n_centers = 100,
                                  int max_iter = 1000,
                                  double tol = 1e-6)
{
  return kliep(source.samples, target.samples, cfg, n_centers, max_iter, tol).weights;
}

// ---------------------------------------------------------------------------
// KMM

inline double kmm_objective(const Matrix& K, const Vector& kappa, const Vector& w)
{
  return 0.5 * w.dot(K * w) - kappa.dot(w);
}

//! Default sum tolerance (sqrt(m) - 1) / sqrt(m).
inline double kmm_default_eps(std::size_t m)
{
  const double r = std::sqrt(static_cast<double>(m));
  return (r - 1.0) / r;
}

//! Euclidean projection onto {0 <= w_i <= B, |sum w - m| <= m eps}: the point
//! clip(v - nu, 0, B) with the scalar shift nu chosen so the sum lands in the band.
inline Vector kmm_project(const Vector& v, double B, double lo, double hi)
{
  auto clipped = [&](double nu) { return (v.array() - nu).cwiseMax(0.0).cwiseMin(B).matrix().eval(); };
  Vector w = clipped(0.0);
  const double s = w.sum();
  if (s >= lo && s <= hi)
    return w;
  const double target = s > hi ? hi : lo;
  // sum(clipped(nu)) is non-increasing in nu; bracket then bisect
  double a = 0.0, b = 0.0, step = 1.0;
  if (s > hi) {
    while (clipped(b).sum() > target) {
      a = b;
      b += step;
      step *= 2.0;
    }
  } else {
    while (clipped(a).sum() < target) {
      b = a;
      a -= step;
      step *= 2.0;
    }
  }
  for (int it = 0; it < 200 && b - a > 0.0; ++it) {
    const double mid = 0.5 * (a + b);
    if (mid == a || mid == b)
      break;
    (clipped(mid).sum() > target ? a : b) = mid;
  }
  // exact shift for the active set found at the bracket midpoint
  const double nu0 = 0.5 * (a + b);
  double free_sum = 0.0, fixed = 0.0;
  int n_free = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = v(i) - nu0;
    if (x <= 0.0)
      continue;
    if (x >= B)
      fixed += B;
    else {
      free_sum += v(i);
      ++n_free;
    }
  }
  double nu = nu0;
  if (n_free > 0) {
    const double exact = (free_sum + fixed - target) / n_free;
    if (exact >= a && exact <= b)
      nu = exact;
  }
  return clipped(nu);
}

struct KmmResult
{
  WeightVector weights;
  std::vector<double> objective;
  int iterations = 0;
};

//! Minimizes 0.5 w'Kw - kappa'w subject to 0 <= w <= B and |sum w - m| <= m eps
//! by projected gradient descent from w = 1 with step 1/L, L the largest
//! absolute row sum of K.
inline KmmResult kmm_solve(const Matrix& K,
                           const Vector& kappa,
                           double B,
                           double eps,
                           int max_iter = 1000,
                           double tol = 1e-10)
{
  const auto m = K.rows();
  if (m == 0 || K.cols() != m || kappa.size() != m)
    throw DataError("kmm: K must be m x m and kappa of length m");
  if (!(B > 0.0) || eps < 0.0)
    throw DataError("kmm: need B > 0 and eps >= 0");
  const double lo = static_cast<double>(m) * (1.0 - eps);
  const double hi = static_cast<double>(m) * (1.0 + eps);
  if (static_cast<double>(m) * B < lo)
    throw DataError("kmm: box bound B too small for the sum constraint");
  const double L = K.cwiseAbs().rowwise().sum().maxCoeff();

  KmmResult res;
  Vector w = kmm_project(Vector::Ones(m), B, lo, hi);
  double obj = kmm_objective(K, kappa, w);
  res.objective.push_back(obj);
  if (L > 0.0) {
    for (int it = 0; it < max_iter; ++it) {
      const Vector grad = K * w - kappa;
      w = kmm_project(w - grad / L, B, lo, hi);
      const double next = kmm_objective(K, kappa, w);
      if (!std::isfinite(next))
        throw DivergenceError("kmm: non-finite objective");
      res.objective.push_back(next);
      res.iterations = it + 1;
      const double change = std::abs(obj - next);
      obj = next;
      if (change <= tol * std::max(1.0, std::abs(obj)))
        break;
    }
  }
  res.weights = { w, Method::kmm };
  return res;
}

inline KmmResult kmm(const Matrix& source,
                     const Matrix& target,
                     const KernelConfig& cfg,
                     double B = 1000.0,
                     double eps = -1.0,
                     int max_iter = 1000,
                     double tol = 1e-10)
{
  if (source.rows() == 0 || target.rows() == 0)
    throw DataError("kmm: empty source or target");
  const auto m = static_cast<double>(source.rows());
  const auto n = static_cast<double>(target.rows());
  const Matrix K = kernel_matrix(source, source, cfg);
  const Vector kappa = (m / n) * kernel_matrix(source, target, cfg).rowwise().sum();
  return kmm_solve(K, kappa, B, eps < 0.0 ? kmm_default_eps(static_cast<std::size_t>(source.rows())) : eps,
                   max_iter, tol);
}

inline WeightVector kmm_weights(const Dataset& source,
                                const Dataset& target,
                                const KernelConfig& cfg,
                                double B = 1000.0,
                                double eps = -1.0,
                                int max_iter = 1000,
                                double tol = 1e-10)
{
  return kmm(source.samples, target.samples, cfg, B, eps, max_iter, tol).weights;
}

} // namespace ldf::rw
