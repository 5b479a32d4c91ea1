#pragma once

// Synthetic source/target/grid generator with spatially autocorrelated
// features and labels, and a controllable covariate shift between domains.

#include "ldf/core_data.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <random>

namespace ldf::synth {

struct Box
{
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  bool degenerate() const { return !(x1 > x0) || !(y1 > y0); }
};

struct SynthConfig
{
  int n_source_sensors = 80;
  int n_target_sensors = 40;
  int n_days = 20;
  Box source_box{ 0.0, 0.0, 10.0, 10.0 };
  Box target_box{ 13.0, 2.0, 19.0, 8.0 };
  //! Non-coordinate features; the two coordinates are always columns 0 and 1.
  int p_extra = 6;
  double spatial_length_scale = 3.0;
  //! Label noise.
  double noise_std = 0.5;
  //! Independent measurement noise on the observed extra features.
  double feature_noise_std = 0.3;
  //! Std of the per-day offset shared by every sensor on that day.
  double day_effect_std = 0.5;
  //! Mean offset of each extra feature in the target domain; empty = none.
  std::vector<double> shift_vector;
  std::uint64_t label_fn_seed = 7;
  double aux_coupling = 0.7;
  int grid_resolution = 50;

  // Label function. Empty linear_coefficients are drawn from label_fn_seed.
  std::vector<double> linear_coefficients;
  double intercept = 10.0;
  double interaction_strength = 1.0;
  double quadratic_strength = 1.0;
  double field_amplitude = 3.0;
  int n_fourier = 64;

  void validate() const
  {
    if (n_source_sensors <= 0 || n_target_sensors <= 0 || n_days <= 0 || p_extra <= 0 ||
        grid_resolution <= 0 || n_fourier <= 0)
      throw DataError("synth config: counts must be positive");
    if (source_box.degenerate() || target_box.degenerate())
      throw DataError("synth config: degenerate region box");
    if (!(spatial_length_scale > 0.0))
      throw DataError("synth config: spatial_length_scale must be > 0");
    if (noise_std < 0.0 || feature_noise_std < 0.0 || day_effect_std < 0.0)
      throw DataError("synth config: noise levels must be >= 0");
    if (!shift_vector.empty() && static_cast<int>(shift_vector.size()) != p_extra)
      throw DataError("synth config: shift_vector must have p_extra entries");
    if (!linear_coefficients.empty() && static_cast<int>(linear_coefficients.size()) != p_extra)
      throw DataError("synth config: linear_coefficients must have p_extra entries");
    if (aux_coupling < 0.0 || aux_coupling > 1.0)
      throw DataError("synth config: aux_coupling must lie in [0, 1]");
  }
};

//! Stationary Gaussian field with squared-exponential covariance, realized as
//! a sum of random Fourier features. Unit marginal variance.
struct FourierField
{
  Matrix omega; // n x 2
  Vector phase;
  Vector amplitude;

  static FourierField draw(int n, double length_scale, std::mt19937_64& rng)
  {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 2.0 * M_PI);
    FourierField f{ Matrix(n, 2), Vector(n), Vector(n) };
    for (int m = 0; m < n; ++m) {
      f.omega(m, 0) = normal(rng) / length_scale;
      f.omega(m, 1) = normal(rng) / length_scale;
      f.phase(m) = uniform(rng);
      f.amplitude(m) = normal(rng);
    }
    return f;
  }

  double operator()(double x, double y) const
  {
    double s = 0.0;
    for (Eigen::Index m = 0; m < omega.rows(); ++m)
      s += amplitude(m) * std::cos(omega(m, 0) * x + omega(m, 1) * y + phase(m));
    return s * std::sqrt(2.0 / static_cast<double>(omega.rows()));
  }

  nlohmann::json to_json() const
  {
    nlohmann::json j;
    for (Eigen::Index m = 0; m < omega.rows(); ++m) {
      j["omega"].push_back({ omega(m, 0), omega(m, 1) });
      j["phase"].push_back(phase(m));
      j["amplitude"].push_back(amplitude(m));
    }
    return j;
  }
};

//! The hidden generating process, reproducible from label_fn_seed.
struct GroundTruth
{
  std::vector<FourierField> feature_fields;
  FourierField label_field;
  FourierField aux_field;
  Vector coefficients;
  double intercept = 0.0;
  //! Indices into the extra features of the multiplicative pair.
  std::array<int, 2> interaction_pair{ 0, 1 };
  double interaction_strength = 0.0;
  double quadratic_strength = 0.0;
  double quadratic_center = 0.0;
  double quadratic_scale = 1.0;
  double field_amplitude = 0.0;

  //! Noiseless label given clean extra-feature values.
  double label(double lon, double lat, const Vector& clean_extra) const
  {
    double y = intercept + coefficients.dot(clean_extra);
    if (clean_extra.size() >= 2)
      y += interaction_strength * clean_extra(interaction_pair[0]) * clean_extra(interaction_pair[1]);
    const double u = (lon - quadratic_center) / quadratic_scale;
    y += quadratic_strength * u * u;
    y += field_amplitude * label_field(lon, lat);
    return y;
  }

  nlohmann::json to_json() const
  {
    nlohmann::json j;
    j["format"] = "ldf-synth-truth";
    j["version"] = 1;
    for (const auto& f : feature_fields)
      j["feature_fields"].push_back(f.to_json());
    j["label_field"] = label_field.to_json();
    j["aux_field"] = aux_field.to_json();
    j["coefficients"] = std::vector<double>(coefficients.data(), coefficients.data() + coefficients.size());
    j["intercept"] = intercept;
    j["field_amplitude"] = field_amplitude;
    j["nonlinear_terms"] = {
      { { "kind", "product" },
        { "features", { interaction_pair[0], interaction_pair[1] } },
        { "strength", interaction_strength } },
      { { "kind", "squared_coordinate" },
        { "coordinate", "lon" },
        { "center", quadratic_center },
        { "scale", quadratic_scale },
        { "strength", quadratic_strength } }
    };
    j["description"] =
      "label = intercept + coefficients . f + s_prod * f[a] * f[b] + s_sq * ((lon - center) / scale)^2 "
      "+ field_amplitude * label_field(lon, lat) + noise; f are noiseless extra features";
    return j;
  }
};

struct SynthData
{
  Dataset source;
  Dataset target;
  Dataset grid;
  //! Noiseless label at each grid cell.
  Vector grid_truth;
  GroundTruth truth;
};

inline GroundTruth draw_truth(const SynthConfig& cfg)
{
  std::mt19937_64 rng(cfg.label_fn_seed);
  GroundTruth t;
  for (int j = 0; j < cfg.p_extra; ++j)
    t.feature_fields.push_back(FourierField::draw(cfg.n_fourier, cfg.spatial_length_scale, rng));
  t.label_field = FourierField::draw(cfg.n_fourier, cfg.spatial_length_scale, rng);
  t.aux_field = FourierField::draw(cfg.n_fourier, cfg.spatial_length_scale, rng);
  t.coefficients = Vector(cfg.p_extra);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int j = 0; j < cfg.p_extra; ++j)
    t.coefficients(j) = cfg.linear_coefficients.empty() ? normal(rng)
                                                        : cfg.linear_coefficients[static_cast<std::size_t>(j)];
  t.intercept = cfg.intercept;
  t.interaction_strength = cfg.p_extra >= 2 ? cfg.interaction_strength : 0.0;
  t.quadratic_strength = cfg.quadratic_strength;
  const double lo = std::min(cfg.source_box.x0, cfg.target_box.x0);
  const double hi = std::max(cfg.source_box.x1, cfg.target_box.x1);
  t.quadratic_center = 0.5 * (lo + hi);
  t.quadratic_scale = 0.5 * (hi - lo);
  t.field_amplitude = cfg.field_amplitude;
  return t;
}

inline void to_json(nlohmann::json& j, const Box& b)
{
  j = { b.x0, b.y0, b.x1, b.y1 };
}

inline void from_json(const nlohmann::json& j, Box& b)
{
  b = { j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>() };
}

inline void to_json(nlohmann::json& j, const SynthConfig& c)
{
  j = { { "n_source_sensors", c.n_source_sensors },
        { "n_target_sensors", c.n_target_sensors },
        { "n_days", c.n_days },
        { "source_box", c.source_box },
        { "target_box", c.target_box },
        { "p_extra", c.p_extra },
        { "spatial_length_scale", c.spatial_length_scale },
        { "noise_std", c.noise_std },
        { "feature_noise_std", c.feature_noise_std },
        { "day_effect_std", c.day_effect_std },
        { "shift_vector", c.shift_vector },
        { "label_fn_seed", c.label_fn_seed },
        { "aux_coupling", c.aux_coupling },
        { "grid_resolution", c.grid_resolution },
        { "linear_coefficients", c.linear_coefficients },
        { "intercept", c.intercept },
        { "interaction_strength", c.interaction_strength },
        { "quadratic_strength", c.quadratic_strength },
        { "field_amplitude", c.field_amplitude },
        { "n_fourier", c.n_fourier } };
}

//! Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, SynthConfig& c)
{
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key))
      j.at(key).get_to(field);
  };
  get("n_source_sensors", c.n_source_sensors);
  get("n_target_sensors", c.n_target_sensors);
  get("n_days", c.n_days);
  get("source_box", c.source_box);
  get("target_box", c.target_box);
  get("p_extra", c.p_extra);
  get("spatial_length_scale", c.spatial_length_scale);
  get("noise_std", c.noise_std);
  get("feature_noise_std", c.feature_noise_std);
  get("day_effect_std", c.day_effect_std);
  get("shift_vector", c.shift_vector);
  get("label_fn_seed", c.label_fn_seed);
  get("aux_coupling", c.aux_coupling);
  get("grid_resolution", c.grid_resolution);
  get("linear_coefficients", c.linear_coefficients);
  get("intercept", c.intercept);
  get("interaction_strength", c.interaction_strength);
  get("quadratic_strength", c.quadratic_strength);
  get("field_amplitude", c.field_amplitude);
  get("n_fourier", c.n_fourier);
}

inline std::vector<std::string> feature_names(int p_extra)
{
  std::vector<std::string> names{ "lon", "lat" };
  for (int j = 0; j < p_extra; ++j)
    names.push_back("f" + std::to_string(j + 1));
  return names;
}

//! Generates source, target and grid datasets. Deterministic in (cfg, seed).
inline SynthData generate(const SynthConfig& cfg, std::uint64_t seed)
{
  cfg.validate();
  SynthData out;
  out.truth = draw_truth(cfg);
  const auto& truth = out.truth;
  const int p = 2 + cfg.p_extra;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix day_offset(cfg.n_days, cfg.p_extra);
  for (int t = 0; t < cfg.n_days; ++t)
    for (int j = 0; j < cfg.p_extra; ++j)
      day_offset(t, j) = cfg.day_effect_std * normal(rng);

  auto shift = [&](Domain d, int j) {
    return d == Domain::target && !cfg.shift_vector.empty() ? cfg.shift_vector[static_cast<std::size_t>(j)] : 0.0;
  };

  // Fills one row; returns the noiseless label.
  auto make_row = [&](Domain d, double lon, double lat, int day, auto row) {
    Vector clean(cfg.p_extra);
    row(0) = lon;
    row(1) = lat;
    for (int j = 0; j < cfg.p_extra; ++j) {
      clean(j) = truth.feature_fields[static_cast<std::size_t>(j)](lon, lat) + day_offset(day, j) + shift(d, j);
      row(2 + j) = clean(j) + cfg.feature_noise_std * normal(rng);
    }
    return truth.label(lon, lat, clean);
  };

  auto make_domain = [&](Domain d, const Box& box, int n_sensors, int id_offset) {
    Dataset ds;
    ds.feature_names = feature_names(cfg.p_extra);
    ds.domain = d;
    const int n = n_sensors * cfg.n_days;
    ds.samples.resize(n, p);
    ds.labels.resize(n);
    int row = 0;
    for (int s = 0; s < n_sensors; ++s) {
      const double lon = box.x0 + (box.x1 - box.x0) * unit(rng);
      const double lat = box.y0 + (box.y1 - box.y0) * unit(rng);
      for (int t = 0; t < cfg.n_days; ++t, ++row) {
        const double clean_label = make_row(d, lon, lat, t, ds.samples.row(row));
        ds.labels(row) = clean_label + cfg.noise_std * normal(rng);
        ds.sensor_ids.push_back(id_offset + s);
        ds.day_index.push_back(t);
      }
    }
    return ds;
  };

  out.source = make_domain(Domain::source, cfg.source_box, cfg.n_source_sensors, 0);
  out.target = make_domain(Domain::target, cfg.target_box, cfg.n_target_sensors, 10000);

  // aux = c * standardized label + (1 - c) * independent smooth field
  {
    Vector all(out.source.labels.size() + out.target.labels.size());
    all << out.source.labels, out.target.labels;
    const double mu = all.mean();
    double sd = std::sqrt((all.array() - mu).square().mean());
    if (!(sd > 0.0))
      sd = 1.0;
    for (Dataset* ds : { &out.source, &out.target }) {
      Vector aux(ds->labels.size());
      for (Eigen::Index i = 0; i < aux.size(); ++i)
        aux(i) = cfg.aux_coupling * (ds->labels(i) - mu) / sd +
                 (1.0 - cfg.aux_coupling) * truth.aux_field(ds->samples(i, 0), ds->samples(i, 1));
      ds->aux_labels = std::move(aux);
    }
  }

  const int g = cfg.grid_resolution;
  Dataset& grid = out.grid;
  grid.feature_names = feature_names(cfg.p_extra);
  grid.domain = Domain::target;
  grid.labeled = false;
  grid.samples.resize(g * g, p);
  grid.labels = Vector::Zero(g * g);
  out.grid_truth.resize(g * g);
  const auto& tb = cfg.target_box;
  for (int iy = 0, row = 0; iy < g; ++iy) {
    for (int ix = 0; ix < g; ++ix, ++row) {
      const double fx = g == 1 ? 0.5 : static_cast<double>(ix) / (g - 1);
      const double fy = g == 1 ? 0.5 : static_cast<double>(iy) / (g - 1);
      const double lon = tb.x0 + (tb.x1 - tb.x0) * fx;
      const double lat = tb.y0 + (tb.y1 - tb.y0) * fy;
      out.grid_truth(row) = make_row(Domain::target, lon, lat, 0, grid.samples.row(row));
      grid.sensor_ids.push_back(100000 + row);
      grid.day_index.push_back(0);
    }
  }
  return out;
}

//! Moran's I with inverse-distance weights and a zero diagonal. Pairs of
//! coincident points get weight 0.
inline double morans_i(const Matrix& coords, const Vector& values)
{
  const auto n = values.size();
  if (coords.rows() != n || coords.cols() != 2)
    throw DataError("morans_i: coords must be n x 2 with n = values.size()");
  if (n < 3)
    throw DataError("morans_i: need at least 3 points");
  const Eigen::ArrayXd z = values.array() - values.mean();
  const double denom = z.square().sum();
  if (!(denom > 0.0))
    throw DataError("morans_i: constant values");
  double num = 0.0, w_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j)
        continue;
      const double d = (coords.row(i) - coords.row(j)).norm();
      if (!(d > 0.0))
        continue;
      const double w = 1.0 / d;
      num += w * z(i) * z(j);
      w_sum += w;
    }
  }
  if (!(w_sum > 0.0))
    throw DataError("morans_i: all points coincide");
  return static_cast<double>(n) / w_sum * num / denom;
}

//! Per-sensor mean of `values` with that sensor's coordinates, in sensor-id order.
inline std::pair<Matrix, Vector> sensor_means(const Dataset& ds, const Vector& values)
{
  std::map<int, std::pair<Eigen::Vector2d, std::pair<double, int>>> acc;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& a = acc[ds.sensor_ids[i]];
    a.first = { ds.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ds.coordinate_indices[0])),
                ds.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ds.coordinate_indices[1])) };
    a.second.first += values(static_cast<Eigen::Index>(i));
    a.second.second += 1;
  }
  Matrix coords(static_cast<Eigen::Index>(acc.size()), 2);
  Vector means(static_cast<Eigen::Index>(acc.size()));
  Eigen::Index r = 0;
  for (const auto& [id, a] : acc) {
    coords.row(r) = a.first.transpose();
    means(r) = a.second.first / a.second.second;
    ++r;
  }
  return { coords, means };
}

} // namespace ldf::synth
