#pragma once

// Weighted CART regression trees and the two ensembles built on them.

#include "ldf/core_data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ldf::trees {

struct TreeConfig
{
  std::optional<int> max_depth;      // unbounded when empty
  std::optional<int> max_leaf_nodes; // unbounded when empty; best-first growth otherwise
  int min_samples_leaf = 1;

  void validate() const
  {
    if ((max_depth && *max_depth < 0) || (max_leaf_nodes && *max_leaf_nodes < 1) || min_samples_leaf < 1)
      throw DataError("tree config: bounds must be positive");
  }
};

struct Node
{
  int feature = -1; // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const Node&) const = default;
};

struct Tree
{
  std::vector<Node> nodes; // nodes[0] is the root

  template<typename Row>
  double predict_row(const Row& x) const
  {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }

  std::size_t n_leaves() const
  {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.is_leaf(); }));
  }

  int depth() const
  {
    std::function<int(int)> d = [&](int i) -> int {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      return n.is_leaf() ? 0 : 1 + std::max(d(n.left), d(n.right));
    };
    return nodes.empty() ? 0 : d(0);
  }

  bool operator==(const Tree&) const = default;
};

//! Go left when value <= threshold.
inline Vector predict_tree(const Tree& tree, const Matrix& X)
{
  Vector out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    out(i) = tree.predict_row(X.row(i));
  return out;
}

//! Chooses the candidate features for one split; must return ascending indices.
using FeatureSampler = std::function<std::vector<int>(int n_features)>;

namespace detail {

//! Per-feature sample orders (ascending value, ties by row) of the rows with positive weight.
inline std::vector<std::vector<int>> presort(const Matrix& X, const Vector& w)
{
  std::vector<int> active;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    if (w(i) > 0.0)
      active.push_back(static_cast<int>(i));
  std::vector<std::vector<int>> order(static_cast<std::size_t>(X.cols()), active);
  for (Eigen::Index f = 0; f < X.cols(); ++f)
    std::stable_sort(order[static_cast<std::size_t>(f)].begin(), order[static_cast<std::size_t>(f)].end(),
                     [&](int a, int b) { return X(a, f) < X(b, f); });
  return order;
}

inline double midpoint(double a, double b)
{
  const double t = a + 0.5 * (b - a);
  return t < b ? t : a;
}

class Builder
{
public:
  Builder(const Matrix& X, const Vector& y, const Vector& w, const TreeConfig& cfg, FeatureSampler sampler)
    : X_(X)
    , y_(y)
    , w_(w)
    , cfg_(cfg)
    , sampler_(std::move(sampler))
  {}

  Tree build(std::vector<std::vector<int>> root_order)
  {
    tree_ = Tree{};
    Pending root = make_pending(std::move(root_order), 0);
    if (root.count == 0)
      throw DataError("fit_tree: no samples with positive weight");
    if (cfg_.max_leaf_nodes)
      grow_best_first(std::move(root));
    else
      grow_depth_first(std::move(root));
    return std::move(tree_);
  }

private:
  struct Split
  {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  struct Pending
  {
    int id = -1;
    int depth = 0;
    std::vector<std::vector<int>> order;
    std::size_t count = 0;
    double weight = 0.0;
    double value = 0.0;
    std::optional<Split> split;
  };

  Pending make_pending(std::vector<std::vector<int>> order, int depth)
  {
    Pending p;
    p.id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(Node{});
    p.depth = depth;
    p.order = std::move(order);
    const auto& rows = p.order.front();
    p.count = rows.size();
    double s = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int r : rows) {
      p.weight += w_(r);
      s += w_(r) * y_(r);
      lo = std::min(lo, y_(r));
      hi = std::max(hi, y_(r));
    }
    p.value = p.count ? s / p.weight : 0.0;
    tree_.nodes[static_cast<std::size_t>(p.id)].value = p.value;
    const bool depth_ok = !cfg_.max_depth || depth < *cfg_.max_depth;
    if (p.count >= 2 * static_cast<std::size_t>(cfg_.min_samples_leaf) && depth_ok && lo < hi)
      p.split = best_split(p, s);
    return p;
  }

  std::optional<Split> best_split(const Pending& p, double total_s) const
  {
    std::vector<int> features;
    if (sampler_)
      features = sampler_(static_cast<int>(X_.cols()));
    else {
      features.resize(static_cast<std::size_t>(X_.cols()));
      std::iota(features.begin(), features.end(), 0);
    }
    const double parent_score = total_s * total_s / p.weight;
    const auto min_leaf = static_cast<std::size_t>(cfg_.min_samples_leaf);
    std::optional<Split> best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int f : features) {
      const auto& rows = p.order[static_cast<std::size_t>(f)];
      double wl = 0.0, sl = 0.0;
      for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        wl += w_(rows[i]);
        sl += w_(rows[i]) * y_(rows[i]);
        const std::size_t nl = i + 1;
        if (nl < min_leaf || rows.size() - nl < min_leaf)
          continue;
        const double a = X_(rows[i], f), b = X_(rows[i + 1], f);
        if (!(a < b))
          continue;
        const double wr = p.weight - wl, sr = total_s - sl;
        if (!(wl > 0.0) || !(wr > 0.0))
          continue;
        const double score = sl * sl / wl + sr * sr / wr;
        // ties keep the earlier (lower feature, lower threshold) candidate
        if (!best || score > best_score + 1e-12 * std::max(1.0, std::abs(best_score))) {
          best_score = score;
          best = Split{ f, midpoint(a, b), score - parent_score };
        }
      }
    }
    return best;
  }

  std::pair<Pending, Pending> split_node(Pending& p)
  {
    const auto& s = *p.split;
    std::vector<std::vector<int>> left(p.order.size()), right(p.order.size());
    for (std::size_t f = 0; f < p.order.size(); ++f)
      for (int r : p.order[f])
        (X_(r, s.feature) <= s.threshold ? left[f] : right[f]).push_back(r);
    p.order.clear();
    auto& node = tree_.nodes[static_cast<std::size_t>(p.id)];
    node.feature = s.feature;
    node.threshold = s.threshold;
    Pending l = make_pending(std::move(left), p.depth + 1);
    tree_.nodes[static_cast<std::size_t>(p.id)].left = l.id;
    Pending r = make_pending(std::move(right), p.depth + 1);
    tree_.nodes[static_cast<std::size_t>(p.id)].right = r.id;
    return { std::move(l), std::move(r) };
  }

  void grow_depth_first(Pending p)
  {
    if (!p.split)
      return;
    auto [l, r] = split_node(p);
    grow_depth_first(std::move(l));
    grow_depth_first(std::move(r));
  }

  void grow_best_first(Pending root)
  {
    std::vector<Pending> open;
    open.push_back(std::move(root));
    std::size_t leaves = 1;
    while (leaves < static_cast<std::size_t>(*cfg_.max_leaf_nodes)) {
      auto it = open.end();
      for (auto c = open.begin(); c != open.end(); ++c)
        if (c->split && (it == open.end() || c->split->gain > it->split->gain ||
                         (c->split->gain == it->split->gain && c->id < it->id)))
          it = c;
      if (it == open.end())
        break;
      Pending p = std::move(*it);
      open.erase(it);
      auto [l, r] = split_node(p);
      open.push_back(std::move(l));
      open.push_back(std::move(r));
      ++leaves;
    }
  }

  const Matrix& X_;
  const Vector& y_;
  const Vector& w_;
  TreeConfig cfg_;
  FeatureSampler sampler_;
  Tree tree_;
};

inline void check_fit_inputs(const Matrix& X, const Vector& y, const Vector& w)
{
  if (X.rows() == 0)
    throw DataError("fit_tree: empty data");
  if (y.size() != X.rows() || w.size() != X.rows())
    throw DataError("fit_tree: X, y and w have inconsistent lengths");
  if ((w.array() < 0.0).any() || !w.allFinite())
    throw DataError("fit_tree: weights must be finite and >= 0");
  if (!(w.sum() > 0.0))
    throw DataError("fit_tree: total weight must be positive");
}

} // namespace detail

//! Greedy CART minimizing the weighted squared error of the children. Rows with
//! zero weight are ignored entirely.
inline Tree fit_tree(const Matrix& X,
                     const Vector& y,
                     const Vector& w,
                     const TreeConfig& cfg = {},
                     FeatureSampler sampler = {})
{
  cfg.validate();
  detail::check_fit_inputs(X, y, w);
  detail::Builder b(X, y, w, cfg, std::move(sampler));
  return b.build(detail::presort(X, w));
}

// ---------------------------------------------------------------------------
// Ensembles

enum class Mode
{
  gbr,
  rf
};

struct EnsembleConfig
{
  int n_estimators = 100;
  double learning_rate = 0.1;
  Mode mode = Mode::gbr;
  std::uint64_t bootstrap_seed = 0;
  double feature_subsample = 1.0 / 3.0;
  //! Test hook: rf without resampling.
  bool bootstrap = true;
};

struct Ensemble
{
  Mode mode = Mode::gbr;
  double base_prediction = 0.0;
  double learning_rate = 1.0;
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;
};

//! gbr: base + lr * sum of tree outputs; rf: mean of tree outputs.
inline Vector predict_ensemble(const Ensemble& e, const Matrix& X)
{
  if (e.mode == Mode::rf) {
    if (e.trees.empty())
      return Vector::Constant(X.rows(), e.base_prediction);
    Vector out = Vector::Zero(X.rows());
    for (const auto& t : e.trees)
      out += predict_tree(t, X);
    return out / static_cast<double>(e.trees.size());
  }
  Vector out = Vector::Constant(X.rows(), e.base_prediction);
  for (const auto& t : e.trees)
    out += e.learning_rate * predict_tree(t, X);
  return out;
}

//! Squared-error gradient boosting: each round fits a tree to the current
//! residuals with the sample weights and adds learning_rate times its output.
//! `train_mse`, when given, receives the weighted training MSE after each round
//! (front() is the base prediction's).
inline Ensemble fit_gbr(const Matrix& X,
                        const Vector& y,
                        const Vector& w,
                        const EnsembleConfig& cfg,
                        const TreeConfig& tree_cfg,
                        std::vector<double>* train_mse = nullptr)
{
  if (cfg.mode != Mode::gbr)
    throw DataError("fit_gbr: mode must be gbr");
  if (cfg.n_estimators < 0 || !(cfg.learning_rate > 0.0))
    throw DataError("fit_gbr: need n_estimators >= 0 and learning_rate > 0");
  tree_cfg.validate();
  detail::check_fit_inputs(X, y, w);

  Ensemble e;
  e.mode = Mode::gbr;
  e.learning_rate = cfg.learning_rate;
  e.base_prediction = w.dot(y) / w.sum();
  Vector F = Vector::Constant(y.size(), e.base_prediction);
  auto mse = [&] { return w.dot((y - F).array().square().matrix()) / w.sum(); };
  if (train_mse)
    train_mse->push_back(mse());
  const auto order = detail::presort(X, w);
  for (int m = 0; m < cfg.n_estimators; ++m) {
    const Vector resid = y - F;
    detail::Builder b(X, resid, w, tree_cfg, {});
    Tree t = b.build(order);
    F += cfg.learning_rate * predict_tree(t, X);
    e.trees.push_back(std::move(t));
    if (train_mse)
      train_mse->push_back(mse());
  }
  return e;
}

//! Random forest: each tree sees a weighted bootstrap resample (draw
//! probability proportional to w) and a random feature subset at every split.
inline Ensemble fit_rf(const Matrix& X,
                       const Vector& y,
                       const Vector& w,
                       const EnsembleConfig& cfg,
                       const TreeConfig& tree_cfg)
{
  if (cfg.mode != Mode::rf)
    throw DataError("fit_rf: mode must be rf");
  if (cfg.n_estimators < 1)
    throw DataError("fit_rf: need n_estimators >= 1");
  if (!(cfg.feature_subsample > 0.0) || cfg.feature_subsample > 1.0)
    throw DataError("fit_rf: feature_subsample must lie in (0, 1]");
  tree_cfg.validate();
  detail::check_fit_inputs(X, y, w);

  Ensemble e;
  e.mode = Mode::rf;
  e.learning_rate = 1.0;
  e.base_prediction = w.dot(y) / w.sum();
  const auto p = static_cast<int>(X.cols());
  const int n_feat = std::clamp(static_cast<int>(std::lround(p * cfg.feature_subsample)), 1, p);
  for (int t = 0; t < cfg.n_estimators; ++t) {
    std::seed_seq seq{ static_cast<std::uint32_t>(cfg.bootstrap_seed & 0xffffffffu),
                       static_cast<std::uint32_t>(cfg.bootstrap_seed >> 32),
                       static_cast<std::uint32_t>(t) };
    std::mt19937_64 rng(seq);
    Vector tw = w;
    if (cfg.bootstrap) {
      std::discrete_distribution<Eigen::Index> draw(w.data(), w.data() + w.size());
      tw.setZero();
      for (Eigen::Index i = 0; i < y.size(); ++i)
        tw(draw(rng)) += 1.0;
    }
    FeatureSampler sampler;
    if (n_feat < p) {
      sampler = [&rng, n_feat](int n) {
        std::vector<int> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        for (int i = 0; i < n_feat; ++i) {
          std::uniform_int_distribution<int> pick(i, n - 1);
          std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(rng))]);
        }
        all.resize(static_cast<std::size_t>(n_feat));
        std::sort(all.begin(), all.end());
        return all;
      };
    }
    e.trees.push_back(fit_tree(X, y, tw, tree_cfg, sampler));
  }
  return e;
}

inline Ensemble fit_ensemble(const Matrix& X,
                             const Vector& y,
                             const Vector& w,
                             const EnsembleConfig& cfg,
                             const TreeConfig& tree_cfg)
{
  return cfg.mode == Mode::gbr ? fit_gbr(X, y, w, cfg, tree_cfg) : fit_rf(X, y, w, cfg, tree_cfg);
}

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::json to_json(const Tree& t)
{
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes)
    nodes.push_back({ n.feature, n.threshold, n.left, n.right, n.value });
  return nodes;
}

inline nlohmann::json to_json(const Ensemble& e)
{
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : e.trees)
    trees.push_back(to_json(t));
  return { { "format", "ldf-ensemble" },
           { "version", 1 },
           { "mode", e.mode == Mode::gbr ? "gbr" : "rf" },
           { "base_prediction", e.base_prediction },
           { "learning_rate", e.learning_rate },
           { "feature_names", e.feature_names },
           { "trees", trees } };
}

inline Ensemble ensemble_from_json(const nlohmann::json& j)
{
  if (j.value("format", "") != "ldf-ensemble" || j.value("version", 0) != 1)
    throw DataError("model: not an ldf-ensemble v1 document");
  Ensemble e;
  const auto mode = j.at("mode").get<std::string>();
  if (mode != "gbr" && mode != "rf")
    throw DataError("model: unknown mode '" + mode + "'");
  e.mode = mode == "gbr" ? Mode::gbr : Mode::rf;
  j.at("base_prediction").get_to(e.base_prediction);
  j.at("learning_rate").get_to(e.learning_rate);
  j.at("feature_names").get_to(e.feature_names);
  for (const auto& jt : j.at("trees")) {
    Tree t;
    for (const auto& jn : jt) {
      Node n{ jn.at(0).get<int>(), jn.at(1).get<double>(), jn.at(2).get<int>(), jn.at(3).get<int>(),
              jn.at(4).get<double>() };
      t.nodes.push_back(n);
    }
    const auto size = static_cast<int>(t.nodes.size());
    for (const auto& n : t.nodes)
      if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size))
        throw DataError("model: tree node has an invalid child index");
    if (t.nodes.empty())
      throw DataError("model: empty tree");
    e.trees.push_back(std::move(t));
  }
  return e;
}

} // namespace ldf::trees
