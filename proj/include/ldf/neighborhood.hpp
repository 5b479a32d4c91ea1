#pragma once

#include "ldf/core_data.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <ostream>

namespace ldf {

inline constexpr double kInverseDistanceEps = 1e-6;
inline constexpr std::size_t kDefaultNeighbors = 12;

//! Source and target samples stacked into one candidate pool; source rows come first.
struct Pool
{
  Matrix features;
  Vector labels;
  std::optional<Vector> aux_labels;
  std::vector<int> days;
  std::vector<int> sensor_ids;
  std::vector<Domain> domains;
  std::map<int, std::vector<std::size_t>> rows_by_day;
  std::size_t n_source = 0;

  static Pool from(const Dataset& source, const Dataset& target)
  {
    if (source.samples.cols() != target.samples.cols())
      throw DataError("pool: source and target feature counts differ");
    Pool p;
    p.n_source = source.size();
    const Dataset both = concat(source, target);
    p.features = both.samples;
    p.labels = both.labels;
    p.aux_labels = both.aux_labels;
    p.days = both.day_index;
    p.sensor_ids = both.sensor_ids;
    p.domains.assign(source.size(), Domain::source);
    p.domains.insert(p.domains.end(), target.size(), Domain::target);
    for (std::size_t i = 0; i < p.days.size(); ++i)
      p.rows_by_day[p.days[i]].push_back(i);
    return p;
  }

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
};

struct NeighborhoodCloud
{
  //! Row of the objective in the dataset it was drawn from.
  std::size_t objective_index = 0;
  //! Pool rows sorted by ascending distance, ties by lower row.
  std::vector<std::size_t> neighbor_indices;
  std::vector<double> distances;
};

//! Finds the k pool samples closest to `objective` (Euclidean over all
//! features) among those whose day lies within `day_window` of `day`.
//! `exclude` removes the objective itself when it is a pool member.
inline NeighborhoodCloud build_cloud(const Eigen::Ref<const Eigen::RowVectorXd>& objective,
                                     int day,
                                     const Pool& pool,
                                     std::size_t k,
                                     int day_window = 0,
                                     std::optional<std::size_t> exclude = std::nullopt,
                                     std::size_t objective_index = 0)
{
  if (k == 0)
    throw DataError("build_cloud: k must be positive");
  if (objective.size() != pool.features.cols())
    throw DataError("build_cloud: objective has wrong feature count");

  std::vector<std::pair<double, std::size_t>> cand;
  for (auto it = pool.rows_by_day.lower_bound(day - day_window);
       it != pool.rows_by_day.end() && it->first <= day + day_window;
       ++it) {
    for (std::size_t r : it->second) {
      if (exclude && r == *exclude)
        continue;
      const double d2 = (pool.features.row(static_cast<Eigen::Index>(r)) - objective).squaredNorm();
      cand.emplace_back(d2, r);
    }
  }
  if (cand.size() < k)
    throw DataError("build_cloud: day " + std::to_string(day) + " has " + std::to_string(cand.size()) +
                    " candidates, need k = " + std::to_string(k));
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());

  NeighborhoodCloud c;
  c.objective_index = objective_index;
  for (std::size_t i = 0; i < k; ++i) {
    c.neighbor_indices.push_back(cand[i].second);
    c.distances.push_back(std::sqrt(cand[i].first));
  }
  return c;
}

//! One cloud per row of `objectives`. When the objectives are themselves pool
//! members starting at `pool_offset`, each one is excluded from its own cloud.
inline std::vector<NeighborhoodCloud> build_clouds(const Dataset& objectives,
                                                   const Pool& pool,
                                                   std::size_t k,
                                                   int day_window = 0,
                                                   std::optional<std::size_t> pool_offset = std::nullopt)
{
  std::vector<NeighborhoodCloud> clouds;
  clouds.reserve(objectives.size());
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    std::optional<std::size_t> exclude;
    if (pool_offset)
      exclude = *pool_offset + i;
    clouds.push_back(
      build_cloud(objectives.samples.row(row), objectives.day_index[i], pool, k, day_window, exclude, i));
  }
  return clouds;
}

//! Inverse-distance weight of every neighbor feature relative to the
//! objective, each column rescaled so its largest entry is 1.
inline Matrix feature_weights(const Eigen::Ref<const Eigen::RowVectorXd>& objective, const Matrix& neighbors)
{
  if (neighbors.cols() != objective.size())
    throw DataError("feature_weights: dimension mismatch");
  Matrix w = (1.0 /((neighbors.rowwise() - objective).cwiseAbs().array() + kInverseDistanceEps)).matrix();
  for (Eigen::Index f = 0; f < w.cols(); ++f)
    w.col(f) /= w.col(f).maxCoeff();
  return w;
}

//! The (k+1) x (p+1) autoencoder input built from one neighborhood cloud.
struct LdfInput
{
  //! Row 0 is the objective with its label voided; rows 1..k are weighted
  //! neighbor features followed by the neighbor's label.
  Matrix tensor;
  double target_label = 0.0;
  std::optional<double> aux_label;
};

inline LdfInput assemble_ldf_input(const Eigen::Ref<const Eigen::RowVectorXd>& objective,
                                   double objective_label,
                                   std::optional<double> objective_aux,
                                   const NeighborhoodCloud& cloud,
                                   const Pool& pool,
                                   const Matrix& weights)
{
  const auto k = static_cast<Eigen::Index>(cloud.neighbor_indices.size());
  const auto p = objective.size();
  if (weights.rows() != k || weights.cols() != p)
    throw DataError("assemble_ldf_input: weight matrix must be k x p");
  LdfInput in;
  in.tensor.resize(k + 1, p + 1);
  in.tensor.row(0).head(p) = objective;
  in.tensor(0, p) = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto r = static_cast<Eigen::Index>(cloud.neighbor_indices[static_cast<std::size_t>(j)]);
    in.tensor.row(j + 1).head(p) = pool.features.row(r).cwiseProduct(weights.row(j));
    in.tensor(j + 1, p) = pool.labels(r);
  }
  in.target_label = objective_label;
  in.aux_label = objective_aux;
  return in;
}

//! Weights and assembles the input for every objective/cloud pair.
inline std::vector<LdfInput> assemble_inputs(const Dataset& objectives,
                                             const std::vector<NeighborhoodCloud>& clouds,
                                             const Pool& pool)
{
  if (clouds.size() != objectives.size())
    throw DataError("assemble_inputs: " + std::to_string(clouds.size()) + " clouds for " +
                    std::to_string(objectives.size()) + " samples");
  std::vector<LdfInput> out;
  out.reserve(clouds.size());
  Matrix neighbors;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    const auto& c = clouds[i];
    const auto row = static_cast<Eigen::Index>(c.objective_index);
    neighbors.resize(static_cast<Eigen::Index>(c.neighbor_indices.size()), pool.features.cols());
    for (std::size_t j = 0; j < c.neighbor_indices.size(); ++j)
      neighbors.row(static_cast<Eigen::Index>(j)) =
        pool.features.row(static_cast<Eigen::Index>(c.neighbor_indices[j]));
    const auto obj = objectives.samples.row(row);
    std::optional<double> aux;
    if (objectives.aux_labels)
      aux = (*objectives.aux_labels)(row);
    out.push_back(assemble_ldf_input(
      obj, objectives.labeled ? objectives.labels(row) : 0.0, aux, c, pool, feature_weights(obj, neighbors)));
  }
  return out;
}

//! CSV: objective_id,neighbor_ids,distances with ';'-separated lists.
inline void write_clouds(std::ostream& out, const std::vector<NeighborhoodCloud>& clouds)
{
  out << "objective_id,neighbor_ids,distances\n";
  for (const auto& c : clouds) {
    out << c.objective_index << ',';
    for (std::size_t j = 0; j < c.neighbor_indices.size(); ++j)
      out << (j ? ";" : "") << c.neighbor_indices[j];
    out << ',';
    for (std::size_t j = 0; j < c.distances.size(); ++j)
      out << (j ? ";" : "") << detail::format_double(c.distances[j]);
    out << '\n';
  }
}

} // namespace ldf
