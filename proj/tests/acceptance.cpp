// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance <benchmark config JSON>

#include "ldf/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>

using namespace ldf;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail)
{
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok)
    ++failures;
}

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0)
{
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Matrix gaussian(int n, int p, std::mt19937_64& rng, double shift = 0.0)
{
  std::normal_distribution<double> nd(shift, 1.0);
  Matrix x(n, p);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x.data()[i] = nd(rng);
  return x;
}

// ---------------------------------------------------------------------------

void gradients()
{
  const auto t0 = Clock::now();
  double worst = 0.0, worst_linear = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 1000);
    LdfInput in;
    in.tensor = gaussian(5, 4, rng);
    in.tensor(0, 3) = 0.0;
    in.target_label = std::normal_distribution<double>()(rng);
    worst = std::max(worst, ae::gradient_check(ae::init_model({}, 4, 3, seed), in));
    ae::ArchConfig lin;
    lin.leaky_slope = 1.0;
    worst_linear = std::max(worst_linear, ae::gradient_check(ae::init_model(lin, 4, 3, seed), in));
  }
  const double t = seconds_since(t0);
  report(1, worst < 1e-3 && worst_linear < 1e-6 && t < 30.0,
         fmt("max rel. error %.3g (leaky), %.3g (linear), %.1f s", worst, worst_linear, t));
}

void reweighter_constraints()
{
  const auto t0 = Clock::now();
  double kliep_resid = 0.0, nnw_resid = 0.0, kmm_sum_excess = -1e300;
  bool kmm_box = true;
  const rw::KernelConfig kc{ rw::KernelKind::rbf, 0.5 };
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix s = gaussian(200, 4, rng), t = gaussian(50, 4, rng, 0.5);
    kliep_resid = std::max(kliep_resid, std::abs(rw::kliep(s, t, kc).weights.weights.mean() - 1.0));
    nnw_resid = std::max(nnw_resid, std::abs(rw::nnw_weights(s, t, 6).weights.mean() - 1.0));
    const double B = 1000.0;
    const Vector w = rw::kmm(s, t, kc, B).weights.weights;
    kmm_box = kmm_box && w.allFinite() && w.minCoeff() >= 0.0 && w.maxCoeff() <= B;
    kmm_sum_excess = std::max(kmm_sum_excess, std::abs(w.sum() - 200.0) - 200.0 * rw::kmm_default_eps(200));
  }
  const double t = seconds_since(t0);
  report(2, kliep_resid < 1e-6 && nnw_resid < 1e-12 && kmm_box && kmm_sum_excess <= 1e-9 && t < 60.0,
         fmt("|mean-1| KLIEP %.2g NNW %.2g; KMM sum slack %.3g; ", kliep_resid, nnw_resid, -kmm_sum_excess) +
           (kmm_box ? "KMM box ok; " : "KMM box VIOLATED; ") + fmt("%.1f s", t));
}

// Exhaustive split search; returns training SSE of the tree grown to `depth`.
double oracle_sse(const Matrix& X, const Vector& y, const Vector& w, const std::vector<int>& rows, int depth)
{
  auto sse = [&](const std::vector<int>& r) {
    double sw = 0.0, s = 0.0;
    for (int i : r) {
      sw += w(i);
      s += w(i) * y(i);
    }
    double e = 0.0;
    for (int i : r)
      e += w(i) * (y(i) - s / sw) * (y(i) - s / sw);
    return e;
  };
  const double here = sse(rows);
  if (here == 0.0 || depth == 0)
    return here;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> bl, br;
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    std::vector<double> v;
    for (int i : rows)
      v.push_back(X(i, f));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
      std::vector<int> l, r;
      for (int i : rows)
        (X(i, f) <= 0.5 * (v[k] + v[k + 1]) ? l : r).push_back(i);
      const double e = sse(l) + sse(r);
      if (e < best - 1e-12) {
        best = e;
        bl = l;
        br = r;
      }
    }
  }
  if (bl.empty())
    return here;
  return oracle_sse(X, y, w, bl, depth - 1) + oracle_sse(X, y, w, br, depth - 1);
}

void oracles()
{
  // (a) trees: training SSE of the greedy tree against the exhaustive-split oracle
  double tree_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed + 7);
    const int n = 20 + static_cast<int>(seed);
    const Matrix X = gaussian(n, 3, rng);
    const Vector y = gaussian(n, 1, rng).col(0) + X.col(0);
    const Vector w = (gaussian(n, 1, rng).col(0).array().abs() + 0.1).matrix();
    trees::TreeConfig tc;
    tc.max_depth = 3;
    const auto t = trees::fit_tree(X, y, w, tc);
    const Vector r = y - trees::predict_tree(t, X);
    const double got = w.dot(r.array().square().matrix());
    std::vector<int> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    tree_gap = std::max(tree_gap, std::abs(got - oracle_sse(X, y, w, rows, 3)));
  }
  // (b) NNW against full-sort nearest assignment
  double nnw_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed + 70);
    const Matrix s = gaussian(150, 3, rng), t = gaussian(100, 3, rng, 0.4);
    const std::size_t k = 1 + seed;
    Vector counts = Vector::Zero(150);
    for (Eigen::Index j = 0; j < t.rows(); ++j) {
      std::vector<std::pair<double, Eigen::Index>> d;
      for (Eigen::Index i = 0; i < s.rows(); ++i)
        d.emplace_back((s.row(i) - t.row(j)).squaredNorm(), i);
      std::sort(d.begin(), d.end());
      for (std::size_t r = 0; r < k; ++r)
        counts(d[r].second) += 1.0;
    }
    const Vector want = counts * (150.0 / (100.0 * static_cast<double>(k)));
    nnw_gap = std::max(nnw_gap, (rw::nnw_weights(s, t, k).weights - want).cwiseAbs().maxCoeff());
  }
  // (c) KMM m = 2 against a 1e-3 grid
  Matrix K(2, 2);
  K << 2.0, 0.5, 0.5, 1.0;
  Vector kappa(2);
  kappa << 3.0, 0.2;
  const double B = 2.0, eps = 0.25;
  const Vector w = rw::kmm_solve(K, kappa, B, eps, 20000, 0.0).weights.weights;
  double best = std::numeric_limits<double>::infinity();
  Vector g(2);
  for (int a = 0; a <= 2000; ++a)
    for (int b = 0; b <= 2000; ++b) {
      g << a * 1e-3, b * 1e-3;
      if (std::abs(g.sum() - 2.0) <= 2.0 * eps + 1e-12)
        best = std::min(best, rw::kmm_objective(K, kappa, g));
    }
  const double kmm_gap = std::abs(rw::kmm_objective(K, kappa, w) - best);
  report(3, tree_gap < 1e-9 && nnw_gap < 1e-12 && kmm_gap < 1e-4,
         fmt("tree SSE gap %.2g, NNW max gap %.2g, KMM objective gap %.2g", tree_gap, nnw_gap, kmm_gap));
}

void identical_distribution()
{
  // 100 samples, so the default 100 KLIEP centers cover the whole target set
  std::mt19937_64 rng(5);
  const Matrix s = gaussian(100, 3, rng);
  const rw::KernelConfig kc{ rw::KernelKind::rbf, 0.5 };
  const Vector wk = rw::kliep(s, s, kc).weights.weights;
  const Vector wm = rw::kmm(s, s, kc).weights.weights;
  const Vector wn = rw::nnw_weights(s, s, 1).weights;
  const bool ok = wk.minCoeff() >= 0.8 && wk.maxCoeff() <= 1.2 && wm.minCoeff() >= 0.8 && wm.maxCoeff() <= 1.2 &&
                  (wn.array() == 1.0).all();
  report(4, ok,
         fmt("KLIEP [%.3f, %.3f], ", wk.minCoeff(), wk.maxCoeff()) +
           fmt("KMM [%.3f, %.3f], ", wm.minCoeff(), wm.maxCoeff()) + fmt("NNW max |w-1| %.2g", (wn.array() - 1.0).abs().maxCoeff()));
}

void metrics()
{
  Vector y(3), yh(3);
  y << 1, 2, 3;
  yh << 1, 2, 4;
  Vector z(2), zh(2);
  z << 0, 0;
  zh << 3, 4;
  Vector one(1), oneh(1);
  one << 5;
  oneh << 7;
  const double e1 = std::abs(r_squared(y, yh) - 0.5);
  const double e2 = std::abs(r_squared(y, y) - 1.0);
  const double e3 = std::abs(r_squared(y, Vector::Constant(3, 2.0)));
  const double e4 = std::abs(rmse(z, zh) - std::sqrt(12.5));
  const double e5 = std::abs(rmse(one, oneh) - 2.0) + rmse(y, y);
  const double worst = std::max({ e1, e2, e3, e4, e5 });
  report(9, worst <= 1e-12, fmt("max deviation from hand values %.2g", worst));
}

} // namespace

int main(int argc, char** argv)
{
  if (argc != 2) {
    std::cerr << "usage: acceptance <benchmark.json>\n";
    return 1;
  }
  try {
    gradients();
    reweighter_constraints();
    oracles();
    identical_distribution();

    using namespace ldf::pipeline;
    const auto cfg = load_config(argv[1]);
    const auto data = load_domains(cfg);
    const RosterEntry nnw{ ModelKind::NNW, Variant::plain }, nnw_ldf{ ModelKind::NNW, Variant::ldf };

    auto t0 = Clock::now();
    const auto bench = run_experiment(cfg, data);
    const double bench_s = seconds_since(t0);
    std::ostringstream table;
    write_table(table, bench);
    std::cout << table.str();
    const double gain = bench.at(nnw_ldf, 9).mean_r2 - bench.at(nnw, 9).mean_r2;
    report(5, gain >= 0.03 && bench_s < 900.0,
           fmt("R2 NNW %.3f -> NNW[LDF] %.3f at 9 sensors", bench.at(nnw, 9).mean_r2, bench.at(nnw_ldf, 9).mean_r2) +
             fmt(" (gain %.3f), full benchmark %.0f s", gain, bench_s));

    const auto& corr = bench.ldf_test_correlation;
    const double mean_corr = std::accumulate(corr.begin(), corr.end(), 0.0) / static_cast<double>(corr.size());
    report(6, mean_corr > 0.5,
           fmt("|corr(LDF, label)| on held-out targets: mean %.3f, min %.3f over %.0f cells", mean_corr,
               *std::min_element(corr.begin(), corr.end()), static_cast<double>(corr.size())));

    t0 = Clock::now();
    auto abl_cfg = cfg;
    abl_cfg.sensor_counts = { 5 };
    const auto abl = ablate_k(abl_cfg, { 4, 12 }, data);
    const double r4 = abl[0].second.rows.at(0).mean_r2, r12 = abl[1].second.rows.at(0).mean_r2;
    report(7, r4 <= r12, fmt("mean R2 at 5 sensors: k=4 %.3f, k=12 %.3f (%.0f s)", r4, r12, seconds_since(t0)));

    auto det_cfg = cfg;
    det_cfg.roster = { nnw, nnw_ldf };
    det_cfg.sensor_counts = { 9 };
    det_cfg.cv_repeats = 3;
    const auto a = run_experiment(det_cfg, data);
    const auto b = run_experiment(det_cfg, data);
    std::ostringstream ta, tb;
    write_table(ta, a);
    write_table(tb, b);
    const std::size_t expected_checks = static_cast<std::size_t>(cfg.cv_repeats) * cfg.sensor_counts.size();
    report(8, a == b && ta.str() == tb.str() && bench.leakage_checks == expected_checks,
           std::string(a == b ? "repeated runs bit-identical" : "repeated runs DIFFER") + "; leakage checks passed on " +
             std::to_string(bench.leakage_checks) + "/" + std::to_string(expected_checks) + " cells");
  } catch (const LeakageError& e) {
    report(8, false, std::string("leakage: ") + e.what());
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    ++failures;
  }
  metrics();
  return failures == 0 ? 0 : 1;
}
