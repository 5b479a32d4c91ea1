#pragma once

#include "ldf/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace ldf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr const char* kSensorColumn = "sensor_id";
inline constexpr const char* kDayColumn = "doy";

enum class Domain
{
  source,
  target
};

inline const char* to_string(Domain d)
{
  return d == Domain::source ? "source" : "target";
}

//! Column layout of a dataset file.
struct FeatureSchema
{
  std::vector<std::string> feature_names;
  //! (longitude-like, latitude-like) positions inside feature_names.
  std::array<std::size_t, 2> coordinate_indices{ 0, 1 };
  std::string label_name = "label";
  std::optional<std::string> aux_label_name;

  void validate() const
  {
    std::set<std::string> seen;
    for (const auto& n : feature_names) {
      if (n.empty())
        throw DataError("schema: empty feature name");
      if (!seen.insert(n).second)
        throw DataError("schema: duplicate feature name '" + n + "'");
      if (n == kSensorColumn || n == kDayColumn)
        throw DataError("schema: feature name '" + n + "' is reserved");
    }
    const auto p = feature_names.size();
    if (coordinate_indices[0] >= p || coordinate_indices[1] >= p ||
        coordinate_indices[0] == coordinate_indices[1])
      throw DataError("schema: coordinate indices must be distinct and in range");
    if (seen.count(label_name))
      throw DataError("schema: label '" + label_name + "' is also a feature");
    if (aux_label_name && (seen.count(*aux_label_name) || *aux_label_name == label_name))
      throw DataError("schema: aux label collides with another column");
  }
};

//! Samples of one domain: features, labels and per-row sensor/day metadata.
struct Dataset
{
  std::vector<std::string> feature_names;
  std::array<std::size_t, 2> coordinate_indices{ 0, 1 };
  Matrix samples;
  Vector labels;
  std::optional<Vector> aux_labels;
  std::vector<int> sensor_ids;
  std::vector<int> day_index;
  Domain domain = Domain::target;
  //! False for prediction grids; labels are then zero and never read.
  bool labeled = true;

  std::size_t size() const { return static_cast<std::size_t>(samples.rows()); }
  std::size_t n_features() const { return static_cast<std::size_t>(samples.cols()); }

  void validate() const
  {
    const auto n = samples.rows();
    if (static_cast<std::size_t>(samples.cols()) != feature_names.size())
      throw DataError("dataset: feature name count does not match column count");
    if (labels.size() != n || static_cast<Eigen::Index>(sensor_ids.size()) != n ||
        static_cast<Eigen::Index>(day_index.size()) != n)
      throw DataError("dataset: row counts of samples, labels, sensor_ids, day_index differ");
    if (aux_labels && aux_labels->size() != n)
      throw DataError("dataset: aux label count differs from sample count");
    if (!samples.allFinite() || !labels.allFinite() || (aux_labels && !aux_labels->allFinite()))
      throw DataError("dataset: non-finite value");
  }

  FeatureSchema schema() const
  {
    FeatureSchema s;
    s.feature_names = feature_names;
    s.coordinate_indices = coordinate_indices;
    return s;
  }

  Vector coordinate(std::size_t axis) const
  {
    return samples.col(static_cast<Eigen::Index>(coordinate_indices.at(axis)));
  }

  //! Rows in the given order.
  Dataset subset(const std::vector<std::size_t>& rows) const
  {
    Dataset out;
    out.feature_names = feature_names;
    out.coordinate_indices = coordinate_indices;
    out.domain = domain;
    out.labeled = labeled;
    const auto m = static_cast<Eigen::Index>(rows.size());
    out.samples.resize(m, samples.cols());
    out.labels.resize(m);
    if (aux_labels)
      out.aux_labels = Vector(m);
    out.sensor_ids.reserve(rows.size());
    out.day_index.reserve(rows.size());
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
      out.samples.row(i) = samples.row(r);
      out.labels(i) = labels(r);
      if (aux_labels)
        (*out.aux_labels)(i) = (*aux_labels)(r);
      out.sensor_ids.push_back(sensor_ids[static_cast<std::size_t>(r)]);
      out.day_index.push_back(day_index[static_cast<std::size_t>(r)]);
    }
    return out;
  }

  //! Copy with one extra feature column appended at the end.
  Dataset with_column(const std::string& name, const Vector& column) const
  {
    if (column.size() != samples.rows())
      throw DataError("with_column: length mismatch for '" + name + "'");
    if (std::find(feature_names.begin(), feature_names.end(), name) != feature_names.end())
      throw DataError("with_column: column '" + name + "' already exists");
    Dataset out = *this;
    out.feature_names.push_back(name);
    out.samples.conservativeResize(Eigen::NoChange, samples.cols() + 1);
    out.samples.col(samples.cols()) = column;
    return out;
  }
};

//! Row-wise concatenation; metadata (names, domain) taken from `a`.
inline Dataset concat(const Dataset& a, const Dataset& b)
{
  if (a.feature_names != b.feature_names)
    throw DataError("concat: feature names differ");
  Dataset out = a;
  const auto na = a.samples.rows();
  const auto nb = b.samples.rows();
  out.samples.resize(na + nb, a.samples.cols());
  out.samples << a.samples, b.samples;
  out.labels.resize(na + nb);
  out.labels << a.labels, b.labels;
  if (a.aux_labels && b.aux_labels) {
    out.aux_labels = Vector(na + nb);
    *out.aux_labels << *a.aux_labels, *b.aux_labels;
  } else {
    out.aux_labels.reset();
  }
  out.sensor_ids.insert(out.sensor_ids.end(), b.sensor_ids.begin(), b.sensor_ids.end());
  out.day_index.insert(out.day_index.end(), b.day_index.begin(), b.day_index.end());
  out.labeled = a.labeled && b.labeled;
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line)
{
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return cells;
}

inline double parse_double(std::string_view cell, const std::string& column, std::size_t line)
{
  if (cell.empty())
    throw ParseError("empty cell in column '" + column + "'", line);
  double v = 0.0;
  const auto* first = cell.data();
  if (*first == '+')
    ++first;
  const auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw ParseError("non-numeric cell '" + std::string(cell) + "' in column '" + column + "'", line);
  if (!std::isfinite(v))
    throw ParseError("non-finite value in column '" + column + "'", line);
  return v;
}

inline int parse_int(std::string_view cell, const std::string& column, std::size_t line)
{
  const double v = parse_double(cell, column, line);
  if (v != std::floor(v) || std::abs(v) > std::numeric_limits<int>::max())
    throw ParseError("expected an integer in column '" + column + "'", line);
  return static_cast<int>(v);
}

inline std::string format_double(double v)
{
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

} // namespace detail

//! Reads a dataset in the `sensor_id,doy,<features...>,<label>[,<aux>]` layout.
//! Column order in the file is free; every column must be known to the schema.
inline Dataset read_csv(std::istream& in,
                        const FeatureSchema& schema,
                        Domain domain = Domain::target,
                        bool require_label = true)
{
  schema.validate();
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line))
    throw DataError("csv: missing header row");
  ++line_no;
  const auto header = detail::split_commas(line);

  enum class Role { feature, label, aux, sensor, day };
  struct Slot { Role role; std::size_t feature = 0; std::string name; };
  std::vector<Slot> slots;
  std::map<std::string, std::size_t> feature_pos;
  for (std::size_t i = 0; i < schema.feature_names.size(); ++i)
    feature_pos[schema.feature_names[i]] = i;

  std::set<std::string> present;
  for (auto h : header) {
    std::string name(h);
    if (!present.insert(name).second)
      throw DataError("csv: duplicate column '" + name + "'");
    if (name == kSensorColumn)
      slots.push_back({ Role::sensor, 0, name });
    else if (name == kDayColumn)
      slots.push_back({ Role::day, 0, name });
    else if (name == schema.label_name)
      slots.push_back({ Role::label, 0, name });
    else if (schema.aux_label_name && name == *schema.aux_label_name)
      slots.push_back({ Role::aux, 0, name });
    else if (auto it = feature_pos.find(name); it != feature_pos.end())
      slots.push_back({ Role::feature, it->second, name });
    else
      throw DataError("csv: schema mismatch, unknown column '" + name + "'");
  }
  auto require = [&](const std::string& name) {
    if (!present.count(name))
      throw DataError("csv: schema mismatch, missing column '" + name + "'");
  };
  require(kSensorColumn);
  require(kDayColumn);
  for (const auto& f : schema.feature_names)
    require(f);
  const bool has_label = present.count(schema.label_name) > 0;
  if (require_label)
    require(schema.label_name);
  const bool has_aux = schema.aux_label_name && present.count(*schema.aux_label_name);

  std::vector<std::vector<double>> rows;
  std::vector<double> labels, aux;
  std::vector<int> sensors, days;
  const auto p = schema.feature_names.size();
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty())
      continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != slots.size())
      throw ParseError("expected " + std::to_string(slots.size()) + " cells, found " +
                         std::to_string(cells.size()),
                       line_no);
    std::vector<double> row(p);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& s = slots[c];
      switch (s.role) {
        case Role::feature: row[s.feature] = detail::parse_double(cells[c], s.name, line_no); break;
        case Role::label: labels.push_back(detail::parse_double(cells[c], s.name, line_no)); break;
        case Role::aux: aux.push_back(detail::parse_double(cells[c], s.name, line_no)); break;
        case Role::sensor: sensors.push_back(detail::parse_int(cells[c], s.name, line_no)); break;
        case Role::day: days.push_back(detail::parse_int(cells[c], s.name, line_no)); break;
      }
    }
    rows.push_back(std::move(row));
  }

  Dataset ds;
  ds.feature_names = schema.feature_names;
  ds.coordinate_indices = schema.coordinate_indices;
  ds.domain = domain;
  ds.labeled = has_label;
  const auto n = static_cast<Eigen::Index>(rows.size());
  ds.samples.resize(n, static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j)
      ds.samples(i, static_cast<Eigen::Index>(j)) = rows[static_cast<std::size_t>(i)][j];
  ds.labels = has_label ? Eigen::Map<Vector>(labels.data(), n) : Vector(Vector::Zero(n));
  if (has_aux)
    ds.aux_labels = Eigen::Map<Vector>(aux.data(), n);
  ds.sensor_ids = std::move(sensors);
  ds.day_index = std::move(days);
  ds.validate();
  return ds;
}

inline Dataset load_csv(const std::string& path,
                        const FeatureSchema& schema,
                        Domain domain = Domain::target,
                        bool require_label = true)
{
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open '" + path + "'");
  try {
    return read_csv(in, schema, domain, require_label);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

//! Builds a schema from a file header: every column other than sensor_id, doy,
//! the label and the aux label is a feature. Coordinates are the columns named
//! `lon`/`lat` when present, otherwise the first two features.
inline FeatureSchema infer_schema(const std::string& path,
                                  const std::string& label_name = "label",
                                  const std::string& aux_name = "aux_label")
{
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw DataError(path + ": missing header row");
  FeatureSchema s;
  s.label_name = label_name;
  for (auto h : detail::split_commas(line)) {
    std::string name(h);
    if (name == kSensorColumn || name == kDayColumn || name == label_name)
      continue;
    if (name == aux_name) {
      s.aux_label_name = aux_name;
      continue;
    }
    s.feature_names.push_back(name);
  }
  auto find = [&](const char* n) -> std::optional<std::size_t> {
    auto it = std::find(s.feature_names.begin(), s.feature_names.end(), n);
    if (it == s.feature_names.end())
      return std::nullopt;
    return static_cast<std::size_t>(it - s.feature_names.begin());
  };
  if (auto lon = find("lon"), lat = find("lat"); lon && lat)
    s.coordinate_indices = { *lon, *lat };
  if (s.feature_names.size() < 2)
    throw DataError(path + ": need at least two feature columns");
  s.validate();
  return s;
}

inline void write_csv(std::ostream& out,
                      const Dataset& ds,
                      const std::string& label_name = "label",
                      const std::string& aux_name = "aux_label")
{
  out << kSensorColumn << ',' << kDayColumn;
  for (const auto& f : ds.feature_names)
    out << ',' << f;
  if (ds.labeled)
    out << ',' << label_name;
  if (ds.aux_labels)
    out << ',' << aux_name;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.samples.rows(); ++i) {
    out << ds.sensor_ids[static_cast<std::size_t>(i)] << ','
        << ds.day_index[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < ds.samples.cols(); ++j)
      out << ',' << detail::format_double(ds.samples(i, j));
    if (ds.labeled)
      out << ',' << detail::format_double(ds.labels(i));
    if (ds.aux_labels)
      out << ',' << detail::format_double((*ds.aux_labels)(i));
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const Dataset& ds)
{
  std::ofstream out(path);
  if (!out)
    throw DataError("cannot write '" + path + "'");
  write_csv(out, ds);
}

// ---------------------------------------------------------------------------
// Normalization

struct NormStats
{
  Vector mean;
  Vector std;
};

//! Per-feature mean and population standard deviation over the concatenation
//! of all datasets. Zero-variance features get a deviation of 1.
inline NormStats fit_normalizer(const std::vector<std::reference_wrapper<const Dataset>>& datasets)
{
  Eigen::Index p = -1;
  Eigen::Index total = 0;
  for (const Dataset& d : datasets) {
    if (p < 0)
      p = d.samples.cols();
    else if (d.samples.cols() != p)
      throw DataError("fit_normalizer: feature counts differ");
    total += d.samples.rows();
  }
  if (total == 0)
    throw DataError("fit_normalizer: no samples");

  NormStats s{ Vector::Zero(p), Vector::Zero(p) };
  for (const Dataset& d : datasets)
    s.mean += d.samples.colwise().sum().transpose();
  s.mean /= static_cast<double>(total);
  for (const Dataset& d : datasets)
    s.std += (d.samples.rowwise() - s.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  s.std = (s.std / static_cast<double>(total)).cwiseSqrt();
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(s.std(j) > 0.0))
      s.std(j) = 1.0;
  return s;
}

inline Dataset apply_normalizer(const Dataset& ds, const NormStats& stats)
{
  if (stats.mean.size() != ds.samples.cols() || stats.std.size() != ds.samples.cols())
    throw DataError("apply_normalizer: stats have " + std::to_string(stats.mean.size()) +
                    " features, dataset has " + std::to_string(ds.samples.cols()));
  Dataset out = ds;
  out.samples = ((ds.samples.rowwise() - stats.mean.transpose()).array().rowwise() /
                 stats.std.transpose().array())
                  .matrix();
  return out;
}

// ---------------------------------------------------------------------------
// Sensor-level splitting

struct SensorSplit
{
  Dataset train;
  Dataset test;
  std::vector<int> train_sensors; // sorted
};

//! Draws `n_train_sensors` sensors without replacement; the training part keeps
//! up to `samples_per_sensor` random rows of each drawn sensor, the test part
//! every row of the remaining sensors. Row order inside each part follows the
//! input order.
inline SensorSplit split_by_sensor(const Dataset& ds,
                                   std::size_t n_train_sensors,
                                   std::size_t samples_per_sensor,
                                   std::uint64_t seed)
{
  std::map<int, std::vector<std::size_t>> rows_of;
  for (std::size_t i = 0; i < ds.sensor_ids.size(); ++i)
    rows_of[ds.sensor_ids[i]].push_back(i);
  if (rows_of.size() < n_train_sensors)
    throw DataError("split_by_sensor: " + std::to_string(rows_of.size()) +
                    " sensors available, " + std::to_string(n_train_sensors) + " requested");

  std::vector<int> sensors;
  for (const auto& kv : rows_of)
    sensors.push_back(kv.first);
  std::mt19937_64 rng(seed);
  std::shuffle(sensors.begin(), sensors.end(), rng);
  std::vector<int> chosen(sensors.begin(), sensors.begin() + static_cast<std::ptrdiff_t>(n_train_sensors));
  std::sort(chosen.begin(), chosen.end());

  std::vector<std::size_t> train_rows, test_rows;
  for (int s : chosen) {
    auto rows = rows_of[s];
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(std::min(rows.size(), samples_per_sensor));
    train_rows.insert(train_rows.end(), rows.begin(), rows.end());
  }
  const std::set<int> chosen_set(chosen.begin(), chosen.end());
  for (std::size_t i = 0; i < ds.sensor_ids.size(); ++i)
    if (!chosen_set.count(ds.sensor_ids[i]))
      test_rows.push_back(i);
  std::sort(train_rows.begin(), train_rows.end());
  return { ds.subset(train_rows), ds.subset(test_rows), std::move(chosen) };
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics
{
  double r_squared = 0.0;
  double rmse = 0.0;
};

namespace detail {
inline void check_pair(const Vector& y, const Vector& yhat, const char* who)
{
  if (y.size() != yhat.size())
    throw DataError(std::string(who) + ": length mismatch");
  if (y.size() == 0)
    throw DataError(std::string(who) + ": empty input");
}
} // namespace detail

inline double r_squared(const Vector& y, const Vector& yhat)
{
  detail::check_pair(y, yhat, "r_squared");
  const double total = (y.array() - y.mean()).square().sum();
  if (!(total > 0.0))
    throw DataError("r_squared: constant target, R^2 undefined");
  return 1.0 - (y - yhat).squaredNorm() / total;
}

inline double rmse(const Vector& y, const Vector& yhat)
{
  detail::check_pair(y, yhat, "rmse");
  return std::sqrt((y - yhat).squaredNorm() / static_cast<double>(y.size()));
}

inline Metrics evaluate(const Vector& y, const Vector& yhat)
{
  return { r_squared(y, yhat), rmse(y, yhat) };
}

//! Pearson correlation; 0 when either side is constant.
inline double pearson(const Vector& a, const Vector& b)
{
  detail::check_pair(a, b, "pearson");
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double den = std::sqrt(da.square().sum() * db.square().sum());
  if (!(den > 0.0))
    return 0.0;
  return (da * db).sum() / den;
}

} // namespace ldf
