#pragma once

// Experiment orchestration: sensor splits, normalization, LDF imputation,
// reweighting, regression with grid search, and aggregation over repeats.

#include "ldf/autoencoder.hpp"
#include "ldf/core_data.hpp"
#include "ldf/neighborhood.hpp"
#include "ldf/reweight.hpp"
#include "ldf/synthgen.hpp"
#include "ldf/trees.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace ldf::pipeline {

enum class ModelKind
{
  RF,
  GBR,
  NNW,
  KLIEP,
  KMM,
  FNN
};

enum class Variant
{
  plain,
  ldf,
  ldf_a
};

inline const char* to_string(ModelKind m)
{
  switch (m) {
    case ModelKind::RF: return "RF";
    case ModelKind::GBR: return "GBR";
    case ModelKind::NNW: return "NNW";
    case ModelKind::KLIEP: return "KLIEP";
    case ModelKind::KMM: return "KMM";
    default: return "FNN";
  }
}

inline const char* to_string(Variant v)
{
  switch (v) {
    case Variant::ldf: return "LDF";
    case Variant::ldf_a: return "LDF-A";
    default: return "plain";
  }
}

struct RosterEntry
{
  ModelKind model = ModelKind::GBR;
  Variant variant = Variant::plain;

  std::string name() const
  {
    return variant == Variant::plain ? to_string(model) : std::string(to_string(model)) + " [" + to_string(variant) + "]";
  }
  auto operator<=>(const RosterEntry&) const = default;
};

inline Variant parse_variant(const std::string& v)
{
  if (v.empty() || v == "plain")
    return Variant::plain;
  if (v == "LDF")
    return Variant::ldf;
  if (v == "LDF-A")
    return Variant::ldf_a;
  throw DataError("unknown variant '" + v + "'");
}

//! Parses "NNW", "NNW[LDF]", "KMM [LDF-A]".
inline RosterEntry parse_roster_entry(std::string s)
{
  s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
  RosterEntry e;
  std::string model = s, variant;
  if (auto lb = s.find('['); lb != std::string::npos) {
    if (s.back() != ']')
      throw DataError("roster entry '" + s + "': missing ']'");
    model = s.substr(0, lb);
    variant = s.substr(lb + 1, s.size() - lb - 2);
  }
  static const std::map<std::string, ModelKind> models{ { "RF", ModelKind::RF },       { "GBR", ModelKind::GBR },
                                                        { "NNW", ModelKind::NNW },     { "KLIEP", ModelKind::KLIEP },
                                                        { "KMM", ModelKind::KMM },     { "FNN", ModelKind::FNN } };
  auto it = models.find(model);
  if (it == models.end())
    throw DataError("roster entry: unknown model '" + model + "'");
  e.model = it->second;
  e.variant = parse_variant(variant);
  return e;
}

inline bool is_reweighting(ModelKind m)
{
  return m == ModelKind::NNW || m == ModelKind::KLIEP || m == ModelKind::KMM;
}

//! Hyperparameter grid of a tree ensemble; empty optionals mean unbounded.
struct EnsembleGrid
{
  std::vector<int> n_estimators{ 100 };
  std::vector<std::optional<int>> max_depth{ 4 };
  std::vector<std::optional<int>> max_leaf_nodes{ std::nullopt };
  std::vector<double> learning_rate{ 0.1 };
};

struct Grids
{
  EnsembleGrid gbr;      // GBR baseline on target data only
  EnsembleGrid rf{ { 100 }, { std::nullopt }, { std::nullopt }, { 1.0 } };
  EnsembleGrid transfer; // regressor fitted on reweighted combined data
  std::vector<int> nnw_neighbors{ 6, 8, 10 };
  std::vector<std::string> kernels{ "rbf", "poly" };
  std::vector<double> gamma{ 0.1, 0.5, 1.0 };
};

struct ExperimentConfig
{
  // Data: either a synthetic configuration or a pair of CSV files.
  std::optional<synth::SynthConfig> synth;
  std::uint64_t synth_seed = 1;
  std::string source_path, target_path;
  std::string label_name = "label";
  std::string aux_label_name = "aux_label";

  std::vector<RosterEntry> roster{ { ModelKind::NNW, Variant::plain }, { ModelKind::NNW, Variant::ldf } };
  std::vector<int> sensor_counts{ 5, 7, 9, 11 };
  int cv_repeats = 20;
  int samples_per_sensor = 20;
  int k_neighbors = static_cast<int>(kDefaultNeighbors);
  int day_window = 0;
  double validation_fraction = 0.2;

  Grids grids;
  ae::ArchConfig arch;
  ae::TrainConfig ae_train;
  ae::TrainConfig fnn_train{ 100, 32, 1e-3, 0, "E" };
  std::size_t kliep_centers = 100;
  int kliep_max_iter = 500;
  double kmm_B = 1000.0;
  int kmm_max_iter = 500;
  std::uint64_t master_seed = 42;

  void validate() const
  {
    if (cv_repeats < 1)
      throw DataError("experiment: cv_repeats must be >= 1");
    if (sensor_counts.empty())
      throw DataError("experiment: sensor_counts must be non-empty");
    if (roster.empty())
      throw DataError("experiment: roster must be non-empty");
    if (k_neighbors < 1 || samples_per_sensor < 1 || day_window < 0)
      throw DataError("experiment: k_neighbors, samples_per_sensor must be >= 1, day_window >= 0");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw DataError("experiment: validation_fraction must lie in (0, 1)");
    if (!synth && (source_path.empty() || target_path.empty()))
      throw DataError("experiment: need a synth config or source/target paths");
  }
};

// ---------------------------------------------------------------------------
// JSON config

namespace detail {

inline std::optional<int> opt_int(const nlohmann::json& j)
{
  if (j.is_null() || (j.is_string() && (j == "inf" || j == "none")))
    return std::nullopt;
  return j.get<int>();
}

inline nlohmann::json opt_int_json(const std::optional<int>& v)
{
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline void read_grid(const nlohmann::json& j, EnsembleGrid& g)
{
  if (j.contains("n_estimators"))
    j.at("n_estimators").get_to(g.n_estimators);
  if (j.contains("max_depth")) {
    g.max_depth.clear();
    for (const auto& v : j.at("max_depth"))
      g.max_depth.push_back(opt_int(v));
  }
  if (j.contains("max_leaf_nodes")) {
    g.max_leaf_nodes.clear();
    for (const auto& v : j.at("max_leaf_nodes"))
      g.max_leaf_nodes.push_back(opt_int(v));
  }
  if (j.contains("learning_rate"))
    j.at("learning_rate").get_to(g.learning_rate);
}

inline nlohmann::json grid_json(const EnsembleGrid& g)
{
  nlohmann::json d = nlohmann::json::array(), l = nlohmann::json::array();
  for (auto v : g.max_depth)
    d.push_back(opt_int_json(v));
  for (auto v : g.max_leaf_nodes)
    l.push_back(opt_int_json(v));
  return { { "n_estimators", g.n_estimators }, { "max_depth", d }, { "max_leaf_nodes", l }, { "learning_rate", g.learning_rate } };
}

inline void read_train(const nlohmann::json& j, ae::TrainConfig& t)
{
  if (j.contains("epochs"))
    j.at("epochs").get_to(t.epochs);
  if (j.contains("batch_size"))
    j.at("batch_size").get_to(t.batch_size);
  if (j.contains("learning_rate"))
    j.at("learning_rate").get_to(t.learning_rate);
  if (j.contains("schedule"))
    j.at("schedule").get_to(t.schedule);
}

inline nlohmann::json train_json(const ae::TrainConfig& t)
{
  return { { "epochs", t.epochs }, { "batch_size", t.batch_size }, { "learning_rate", t.learning_rate }, { "schedule", t.schedule } };
}

} // namespace detail

//! Reads a declarative experiment document; absent keys keep their defaults.
inline ExperimentConfig config_from_json(const nlohmann::json& j)
{
  ExperimentConfig c;
  if (j.contains("synth")) {
    c.synth = synth::SynthConfig{};
    j.at("synth").get_to(*c.synth);
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key))
      j.at(key).get_to(field);
  };
  get("synth_seed", c.synth_seed);
  get("source_path", c.source_path);
  get("target_path", c.target_path);
  get("label_name", c.label_name);
  get("aux_label_name", c.aux_label_name);
  if (j.contains("roster")) {
    c.roster.clear();
    for (const auto& r : j.at("roster"))
      c.roster.push_back(parse_roster_entry(r.get<std::string>()));
  }
  get("sensor_counts", c.sensor_counts);
  get("cv_repeats", c.cv_repeats);
  get("samples_per_sensor", c.samples_per_sensor);
  get("k_neighbors", c.k_neighbors);
  get("day_window", c.day_window);
  get("validation_fraction", c.validation_fraction);
  get("kliep_centers", c.kliep_centers);
  get("kliep_max_iter", c.kliep_max_iter);
  get("kmm_B", c.kmm_B);
  get("kmm_max_iter", c.kmm_max_iter);
  get("master_seed", c.master_seed);
  if (j.contains("grids")) {
    const auto& g = j.at("grids");
    if (g.contains("gbr"))
      detail::read_grid(g.at("gbr"), c.grids.gbr);
    if (g.contains("rf"))
      detail::read_grid(g.at("rf"), c.grids.rf);
    if (g.contains("transfer"))
      detail::read_grid(g.at("transfer"), c.grids.transfer);
    if (g.contains("nnw_neighbors"))
      g.at("nnw_neighbors").get_to(c.grids.nnw_neighbors);
    if (g.contains("kernels"))
      g.at("kernels").get_to(c.grids.kernels);
    if (g.contains("gamma"))
      g.at("gamma").get_to(c.grids.gamma);
  }
  if (j.contains("autoencoder")) {
    const auto& a = j.at("autoencoder");
    if (a.contains("conv_channels"))
      a.at("conv_channels").get_to(c.arch.conv_channels);
    if (a.contains("leaky_slope"))
      a.at("leaky_slope").get_to(c.arch.leaky_slope);
    detail::read_train(a, c.ae_train);
  }
  if (j.contains("fnn"))
    detail::read_train(j.at("fnn"), c.fnn_train);
  c.validate();
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c)
{
  nlohmann::json j;
  if (c.synth)
    j["synth"] = *c.synth;
  j["synth_seed"] = c.synth_seed;
  if (!c.source_path.empty()) {
    j["source_path"] = c.source_path;
    j["target_path"] = c.target_path;
  }
  j["label_name"] = c.label_name;
  j["aux_label_name"] = c.aux_label_name;
  for (const auto& r : c.roster)
    j["roster"].push_back(r.name());
  j["sensor_counts"] = c.sensor_counts;
  j["cv_repeats"] = c.cv_repeats;
  j["samples_per_sensor"] = c.samples_per_sensor;
  j["k_neighbors"] = c.k_neighbors;
  j["day_window"] = c.day_window;
  j["validation_fraction"] = c.validation_fraction;
  j["kliep_centers"] = c.kliep_centers;
  j["kliep_max_iter"] = c.kliep_max_iter;
  j["kmm_B"] = c.kmm_B;
  j["kmm_max_iter"] = c.kmm_max_iter;
  j["master_seed"] = c.master_seed;
  j["grids"] = { { "gbr", detail::grid_json(c.grids.gbr) },
                 { "rf", detail::grid_json(c.grids.rf) },
                 { "transfer", detail::grid_json(c.grids.transfer) },
                 { "nnw_neighbors", c.grids.nnw_neighbors },
                 { "kernels", c.grids.kernels },
                 { "gamma", c.grids.gamma } };
  j["autoencoder"] = detail::train_json(c.ae_train);
  j["autoencoder"]["conv_channels"] = c.arch.conv_channels;
  j["autoencoder"]["leaky_slope"] = c.arch.leaky_slope;
  j["fnn"] = detail::train_json(c.fnn_train);
  return j;
}

inline ExperimentConfig load_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("config '" + path + "': " + e.what());
  }
  auto c = config_from_json(j);
  // relative data paths are taken relative to the config file
  const auto base = std::filesystem::path(path).parent_path();
  for (auto* p : { &c.source_path, &c.target_path })
    if (!p->empty() && std::filesystem::path(*p).is_relative())
      *p = (base / *p).string();
  return c;
}

// ---------------------------------------------------------------------------
// Seeds

//! splitmix64 finalizer.
inline std::uint64_t mix(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0)
{
  return mix(mix(mix(master ^ mix(a)) ^ b) ^ c);
}

enum SeedPurpose : std::uint64_t
{
  kSplitSeed = 1,
  kAutoencoderSeed = 2,
  kValidationSeed = 3,
  kRegressorSeed = 4,
  kDeploySeed = 5,
};

// ---------------------------------------------------------------------------
// Data

struct DomainData
{
  Dataset source;
  Dataset target;
};

inline DomainData load_domains(const ExperimentConfig& cfg)
{
  if (cfg.synth) {
    auto d = synth::generate(*cfg.synth, cfg.synth_seed);
    return { std::move(d.source), std::move(d.target) };
  }
  auto schema = infer_schema(cfg.target_path, cfg.label_name, cfg.aux_label_name);
  auto src = load_csv(cfg.source_path, schema, Domain::source);
  auto tgt = load_csv(cfg.target_path, schema, Domain::target);
  return { std::move(src), std::move(tgt) };
}

//! Throws LeakageError when any (domain, sensor) of `held_out` appears in a partition.
inline void check_no_leakage(const Dataset& held_out,
                             const std::vector<std::pair<std::string, const Dataset*>>& partitions)
{
  std::set<std::pair<Domain, int>> test_ids;
  for (int s : held_out.sensor_ids)
    test_ids.insert({ held_out.domain, s });
  for (const auto& [name, ds] : partitions)
    for (int s : ds->sensor_ids)
      if (test_ids.count({ ds->domain, s }))
        throw LeakageError("held-out sensor " + std::to_string(s) + " found in " + name);
}

//! Normalized (and optionally LDF-augmented) partitions of one cell.
struct CellData
{
  Dataset source;
  Dataset train;
  Dataset test;
  std::vector<ae::EpochLoss> ae_history;
  std::optional<ae::AutoencoderModel> autoencoder;
  //! Normalizer refitted after the LDF column was appended.
  std::optional<NormStats> ldf_stats;
};

inline CellData normalize_cell(const Dataset& source, const Dataset& train, const Dataset& test)
{
  const auto stats = fit_normalizer({ source, train });
  return { apply_normalizer(source, stats), apply_normalizer(train, stats), apply_normalizer(test, stats), {}, {}, {} };
}

//! Builds clouds against source + train, trains the autoencoder on those pool
//! objectives, imputes the latent into all three partitions and renormalizes.
//! Test samples are objectives only: they never enter the pool.
inline CellData add_ldf(const CellData& plain,
                        Variant variant,
                        const ExperimentConfig& cfg,
                        std::uint64_t seed)
{
  const auto k = static_cast<std::size_t>(cfg.k_neighbors);
  const Pool pool = Pool::from(plain.source, plain.train);
  const auto src_clouds = build_clouds(plain.source, pool, k, cfg.day_window, std::size_t{ 0 });
  const auto trn_clouds = build_clouds(plain.train, pool, k, cfg.day_window, pool.n_source);
  const auto tst_clouds = build_clouds(plain.test, pool, k, cfg.day_window);

  std::vector<LdfInput> inputs = assemble_inputs(plain.source, src_clouds, pool);
  const auto trn_inputs = assemble_inputs(plain.train, trn_clouds, pool);
  inputs.insert(inputs.end(), trn_inputs.begin(), trn_inputs.end());

  ae::ArchConfig arch = cfg.arch;
  arch.estimator_outputs = variant == Variant::ldf_a ? 2 : 1;
  if (variant == Variant::ldf_a && (!plain.source.aux_labels || !plain.train.aux_labels))
    throw DataError("LDF-A needs aux labels in source and target data");
  ae::TrainConfig tc = cfg.ae_train;
  tc.seed = seed;
  auto model = ae::init_model(arch, cfg.k_neighbors, static_cast<int>(plain.source.n_features()), seed);
  auto trained = ae::train(std::move(model), inputs, tc);

  CellData out;
  out.source = ae::impute_ldf(trained.model, plain.source, src_clouds, pool);
  out.train = ae::impute_ldf(trained.model, plain.train, trn_clouds, pool);
  out.test = ae::impute_ldf(trained.model, plain.test, tst_clouds, pool);
  const auto stats = fit_normalizer({ out.source, out.train });
  out.source = apply_normalizer(out.source, stats);
  out.train = apply_normalizer(out.train, stats);
  out.test = apply_normalizer(out.test, stats);
  out.ae_history = std::move(trained.history);
  out.autoencoder = std::move(trained.model);
  out.ldf_stats = stats;
  return out;
}

// ---------------------------------------------------------------------------
// Model fitting with hyperparameter selection

//! A fitted predictor for one roster entry.
struct FittedModel
{
  std::optional<trees::Ensemble> ensemble;
  std::optional<ae::FnnModel> fnn;
  std::string description;

  Vector predict(const Matrix& X) const
  {
    return ensemble ? trees::predict_ensemble(*ensemble, X) : ae::predict_fnn(*fnn, X);
  }
};

namespace detail {

inline std::vector<std::pair<trees::EnsembleConfig, trees::TreeConfig>> expand(const EnsembleGrid& g,
                                                                              trees::Mode mode,
                                                                              std::uint64_t seed)
{
  std::vector<std::pair<trees::EnsembleConfig, trees::TreeConfig>> out;
  for (int n : g.n_estimators)
    for (auto d : g.max_depth)
      for (auto l : g.max_leaf_nodes)
        for (double lr : mode == trees::Mode::gbr ? g.learning_rate : std::vector<double>{ 1.0 }) {
          trees::EnsembleConfig e;
          e.mode = mode;
          e.n_estimators = n;
          e.learning_rate = lr;
          e.bootstrap_seed = seed;
          out.push_back({ e, trees::TreeConfig{ d, l, 1 } });
        }
  return out;
}

inline std::string describe(const trees::EnsembleConfig& e, const trees::TreeConfig& t)
{
  auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string("inf"); };
  std::ostringstream os;
  os << (e.mode == trees::Mode::gbr ? "gbr" : "rf") << " n=" << e.n_estimators << " depth=" << opt(t.max_depth)
     << " leaves=" << opt(t.max_leaf_nodes);
  if (e.mode == trees::Mode::gbr)
    os << " lr=" << e.learning_rate;
  return os.str();
}

//! Source-weighting candidates of a reweighting model.
struct WeightSpec
{
  std::size_t neighbors = 0;
  rw::KernelConfig kernel;
  std::string describe() const
  {
    if (neighbors)
      return "neighbors=" + std::to_string(neighbors);
    std::ostringstream os;
    os << "kernel=" << rw::to_string(kernel.kind) << " gamma=" << kernel.gamma;
    return os.str();
  }
};

inline std::vector<WeightSpec> weight_specs(ModelKind m, const ExperimentConfig& cfg)
{
  std::vector<WeightSpec> out;
  if (m == ModelKind::NNW) {
    for (int n : cfg.grids.nnw_neighbors)
      out.push_back({ static_cast<std::size_t>(n), {} });
  } else if (m == ModelKind::KLIEP || m == ModelKind::KMM) {
    for (const auto& k : cfg.grids.kernels)
      for (double g : cfg.grids.gamma)
        out.push_back({ 0, rw::KernelConfig{ rw::parse_kernel(k), g, 2 } });
  }
  return out;
}

inline Vector compute_weights(ModelKind m, const WeightSpec& spec, const Matrix& source, const Matrix& target,
                              const ExperimentConfig& cfg)
{
  switch (m) {
    case ModelKind::NNW:
      return rw::nnw_weights(source, target, std::min<std::size_t>(spec.neighbors, static_cast<std::size_t>(source.rows())))
        .weights;
    case ModelKind::KLIEP:
      return rw::kliep(source, target, spec.kernel, cfg.kliep_centers, cfg.kliep_max_iter).weights.weights;
    case ModelKind::KMM:
      return rw::kmm(source, target, spec.kernel, cfg.kmm_B, -1.0, cfg.kmm_max_iter).weights.weights;
    default: return Vector::Ones(source.rows());
  }
}

inline Matrix stack(const Matrix& a, const Matrix& b)
{
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

inline Vector stack(const Vector& a, const Vector& b)
{
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

inline double mse(const Vector& y, const Vector& yhat)
{
  return (y - yhat).squaredNorm() / static_cast<double>(y.size());
}

} // namespace detail

//! Fits one roster model on (source, train); hyperparameters are chosen by the
//! lowest validation MSE on a seeded hold-out of `validation_fraction` of the
//! training rows, then the winner is refitted on all training rows.
inline FittedModel fit_model(ModelKind kind,
                             const Dataset& source,
                             const Dataset& train,
                             const ExperimentConfig& cfg,
                             std::uint64_t seed,
                             std::size_t* combined_rows = nullptr)
{
  // inner split of the training rows
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, kValidationSeed));
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = std::clamp<std::size_t>(
    static_cast<std::size_t>(std::lround(cfg.validation_fraction * static_cast<double>(train.size()))), 1,
    train.size() > 1 ? train.size() - 1 : 1);
  std::vector<std::size_t> val_rows(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit_rows(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val_rows.begin(), val_rows.end());
  std::sort(fit_rows.begin(), fit_rows.end());
  const Dataset inner_fit = train.subset(fit_rows);
  const Dataset inner_val = train.subset(val_rows);
  const std::uint64_t reg_seed = derive_seed(seed, kRegressorSeed);

  FittedModel out;
  if (kind == ModelKind::FNN) {
    ae::TrainConfig tc = cfg.fnn_train;
    tc.seed = reg_seed;
    const Matrix X = detail::stack(source.samples, train.samples);
    const Vector y = detail::stack(source.labels, train.labels);
    if (combined_rows)
      *combined_rows = static_cast<std::size_t>(X.rows());
    out.fnn = ae::train_fnn(X, y, Vector(), tc).model;
    out.description = "fnn";
    return out;
  }

  if (kind == ModelKind::RF || kind == ModelKind::GBR) {
    const auto mode = kind == ModelKind::RF ? trees::Mode::rf : trees::Mode::gbr;
    const auto cands = detail::expand(kind == ModelKind::RF ? cfg.grids.rf : cfg.grids.gbr, mode, reg_seed);
    std::size_t best = 0;
    if (cands.size() > 1 && !fit_rows.empty()) {
      double best_err = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < cands.size(); ++c) {
        const auto e = trees::fit_ensemble(inner_fit.samples, inner_fit.labels, Vector::Ones(inner_fit.labels.size()),
                                           cands[c].first, cands[c].second);
        const double err = detail::mse(inner_val.labels, trees::predict_ensemble(e, inner_val.samples));
        if (err < best_err) {
          best_err = err;
          best = c;
        }
      }
    }
    out.ensemble = trees::fit_ensemble(train.samples, train.labels, Vector::Ones(train.labels.size()),
                                       cands[best].first, cands[best].second);
    out.ensemble->feature_names = train.feature_names;
    out.description = detail::describe(cands[best].first, cands[best].second);
    if (combined_rows)
      *combined_rows = train.size();
    return out;
  }

  // reweighting transfer models
  const auto specs = detail::weight_specs(kind, cfg);
  const auto cands = detail::expand(cfg.grids.transfer, trees::Mode::gbr, reg_seed);
  std::size_t best_spec = 0, best_cand = 0;
  if ((specs.size() > 1 || cands.size() > 1) && !fit_rows.empty()) {
    double best_err = std::numeric_limits<double>::infinity();
    const Matrix X = detail::stack(source.samples, inner_fit.samples);
    const Vector y = detail::stack(source.labels, inner_fit.labels);
    for (std::size_t s = 0; s < specs.size(); ++s) {
      const Vector w = detail::stack(compute_weights(kind, specs[s], source.samples, inner_fit.samples, cfg),
                                     Vector::Ones(inner_fit.labels.size()));
      for (std::size_t c = 0; c < cands.size(); ++c) {
        const auto e = trees::fit_ensemble(X, y, w, cands[c].first, cands[c].second);
        const double err = detail::mse(inner_val.labels, trees::predict_ensemble(e, inner_val.samples));
        if (err < best_err) {
          best_err = err;
          best_spec = s;
          best_cand = c;
        }
      }
    }
  }
  const Matrix X = detail::stack(source.samples, train.samples);
  const Vector y = detail::stack(source.labels, train.labels);
  const Vector w = detail::stack(compute_weights(kind, specs[best_spec], source.samples, train.samples, cfg),
                                 Vector::Ones(train.labels.size()));
  if (combined_rows)
    *combined_rows = static_cast<std::size_t>(X.rows());
  out.ensemble = trees::fit_ensemble(X, y, w, cands[best_cand].first, cands[best_cand].second);
  out.ensemble->feature_names = train.feature_names;
  out.description = specs[best_spec].describe() + " " + detail::describe(cands[best_cand].first, cands[best_cand].second);
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

struct CellResult
{
  RosterEntry entry;
  int sensor_count = 0;
  int repeat = 0;
  Metrics metrics;
  std::string chosen;
  std::size_t combined_rows = 0;
};

struct ResultRow
{
  RosterEntry entry;
  int sensor_count = 0;
  double mean_r2 = 0.0, std_r2 = 0.0, mean_rmse = 0.0, std_rmse = 0.0;
  int rank = 0; // 1 = best mean R^2 within the sensor count
  std::vector<double> r2, rmse;
};

struct ResultTable
{
  std::vector<ResultRow> rows;
  std::vector<CellResult> cells;
  //! |Pearson(LDF, label)| on the held-out target rows, one entry per (variant, sensor_count, repeat).
  std::vector<double> ldf_test_correlation;
  std::size_t leakage_checks = 0;

  const ResultRow& at(const RosterEntry& e, int sensor_count) const
  {
    for (const auto& r : rows)
      if (r.entry == e && r.sensor_count == sensor_count)
        return r;
    throw DataError("result table: no row for " + e.name() + " at " + std::to_string(sensor_count) + " sensors");
  }

  bool operator==(const ResultTable& o) const
  {
    if (rows.size() != o.rows.size() || ldf_test_correlation != o.ldf_test_correlation)
      return false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& a = rows[i];
      const auto& b = o.rows[i];
      if (!(a.entry == b.entry) || a.sensor_count != b.sensor_count || a.r2 != b.r2 || a.rmse != b.rmse ||
          a.rank != b.rank)
        return false;
    }
    return true;
  }
};

inline double sample_std(const std::vector<double>& v)
{
  if (v.size() < 2)
    return 0.0;
  const double mu = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v)
    s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline void write_table(std::ostream& out, const ResultTable& t)
{
  out << "model,variant,sensors,mean_r2,std_r2,mean_rmse,std_rmse,rank\n";
  for (const auto& r : t.rows)
    out << to_string(r.entry.model) << ',' << to_string(r.entry.variant) << ',' << r.sensor_count << ','
        << ldf::detail::format_double(r.mean_r2) << ',' << ldf::detail::format_double(r.std_r2) << ','
        << ldf::detail::format_double(r.mean_rmse) << ',' << ldf::detail::format_double(r.std_rmse) << ',' << r.rank << '\n';
}

using ProgressFn = std::function<void(const std::string&)>;

namespace detail {

//! Runs `fn`, prefixing any data or divergence error with `context`.
template<typename F>
void with_context(const std::string& context, F&& fn)
{
  try {
    fn();
  } catch (const DivergenceError& e) {
    throw DivergenceError(context + ": " + e.what());
  } catch (const LeakageError&) {
    throw;
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  }
}

} // namespace detail

//! Data and seeds of one (repeat, sensor_count) cell before any variant is built.
struct PreparedCell
{
  SensorSplit split;
  CellData plain;
  std::uint64_t seed = 0;
};

inline PreparedCell prepare_cell(const DomainData& data, const ExperimentConfig& cfg, int repeat, int sensor_count)
{
  PreparedCell pc;
  pc.seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(repeat), static_cast<std::uint64_t>(sensor_count));
  pc.split = split_by_sensor(data.target, static_cast<std::size_t>(sensor_count),
                             static_cast<std::size_t>(cfg.samples_per_sensor), derive_seed(pc.seed, kSplitSeed));
  pc.plain = normalize_cell(data.source, pc.split.train, pc.split.test);
  return pc;
}

//! Runs every roster entry on every (repeat, sensor_count) cell and aggregates.
inline ResultTable run_experiment(const ExperimentConfig& cfg, const DomainData& data, ProgressFn progress = {})
{
  cfg.validate();
  ResultTable table;
  std::set<Variant> variants;
  for (const auto& r : cfg.roster)
    variants.insert(r.variant);

  for (int sc : cfg.sensor_counts) {
    for (int rep = 0; rep < cfg.cv_repeats; ++rep) {
      const PreparedCell pc = prepare_cell(data, cfg, rep, sc);
      std::map<Variant, CellData> by_variant;
      for (Variant v : variants) {
        if (v == Variant::plain) {
          by_variant[v] = pc.plain;
          continue;
        }
        detail::with_context(std::string("LDF variant ") + to_string(v) + ", repeat " + std::to_string(rep) + ", " +
                               std::to_string(sc) + " sensors",
                             [&] {
                               by_variant[v] = add_ldf(pc.plain, v, cfg,
                                                       derive_seed(pc.seed, kAutoencoderSeed, static_cast<std::uint64_t>(v)));
                             });
        const auto& cd = by_variant[v];
        const double corr = std::abs(pearson(cd.test.samples.col(cd.test.samples.cols() - 1), cd.test.labels));
        table.ldf_test_correlation.push_back(corr);
      }
      // the pool, normalizer and autoencoder all see source + train only
      check_no_leakage(pc.split.test, { { "training partition", &pc.split.train } });
      for (const auto& [v, cd] : by_variant)
        check_no_leakage(pc.split.test, { { "normalization/pool partition", &cd.train } });
      ++table.leakage_checks;

      for (const auto& entry : cfg.roster) {
        const auto& cd = by_variant.at(entry.variant);
        CellResult cell;
        cell.entry = entry;
        cell.sensor_count = sc;
        cell.repeat = rep;
        detail::with_context(entry.name() + ", repeat " + std::to_string(rep) + ", " + std::to_string(sc) + " sensors", [&] {
          std::size_t rows = 0;
          const auto fitted = fit_model(entry.model, cd.source, cd.train, cfg,
                                        derive_seed(pc.seed, static_cast<std::uint64_t>(entry.model) + 16), &rows);
          const bool uses_source = entry.model != ModelKind::RF && entry.model != ModelKind::GBR;
          const std::size_t expect = cd.train.size() + (uses_source ? cd.source.size() : 0);
          if (rows != expect)
            throw DataError("combined training set has " + std::to_string(rows) + " rows, expected " +
                            std::to_string(expect));
          cell.combined_rows = rows;
          cell.chosen = fitted.description;
          cell.metrics = evaluate(cd.test.labels, fitted.predict(cd.test.samples));
        });
        if (progress) {
          std::ostringstream os;
          os << entry.name() << " sensors=" << sc << " repeat=" << rep << " R2=" << cell.metrics.r_squared
             << " RMSE=" << cell.metrics.rmse << " [" << cell.chosen << "]";
          progress(os.str());
        }
        table.cells.push_back(std::move(cell));
      }
    }
  }

  for (int sc : cfg.sensor_counts) {
    const std::size_t first = table.rows.size();
    for (const auto& entry : cfg.roster) {
      ResultRow row;
      row.entry = entry;
      row.sensor_count = sc;
      for (const auto& c : table.cells)
        if (c.entry == entry && c.sensor_count == sc) {
          row.r2.push_back(c.metrics.r_squared);
          row.rmse.push_back(c.metrics.rmse);
        }
      const auto n = static_cast<double>(row.r2.size());
      row.mean_r2 = std::accumulate(row.r2.begin(), row.r2.end(), 0.0) / n;
      row.mean_rmse = std::accumulate(row.rmse.begin(), row.rmse.end(), 0.0) / n;
      row.std_r2 = sample_std(row.r2);
      row.std_rmse = sample_std(row.rmse);
      table.rows.push_back(std::move(row));
    }
    for (std::size_t i = first; i < table.rows.size(); ++i) {
      int rank = 1;
      for (std::size_t j = first; j < table.rows.size(); ++j)
        if (table.rows[j].mean_r2 > table.rows[i].mean_r2)
          ++rank;
      table.rows[i].rank = rank;
    }
  }
  return table;
}

inline ResultTable run_experiment(const ExperimentConfig& cfg, ProgressFn progress = {})
{
  return run_experiment(cfg, load_domains(cfg), std::move(progress));
}

//! NNW[LDF] at each neighborhood size.
inline std::vector<std::pair<int, ResultTable>> ablate_k(ExperimentConfig cfg,
                                                         const std::vector<int>& k_values,
                                                         const DomainData& data,
                                                         ProgressFn progress = {})
{
  cfg.roster = { { ModelKind::NNW, Variant::ldf } };
  std::vector<std::pair<int, ResultTable>> out;
  for (int k : k_values) {
    cfg.k_neighbors = k;
    out.emplace_back(k, run_experiment(cfg, data, progress));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

//! Pearson correlation of every feature with the label, by descending magnitude.
inline std::vector<std::pair<std::string, double>> correlation_report(const Dataset& ds)
{
  if (!ds.labeled)
    throw DataError("correlation_report: dataset has no labels");
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t j = 0; j < ds.n_features(); ++j)
    out.emplace_back(ds.feature_names[j], pearson(ds.samples.col(static_cast<Eigen::Index>(j)), ds.labels));
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return std::abs(a.second) > std::abs(b.second); });
  return out;
}

//! Writes x,y,prediction for every row of `coords` (raw coordinates).
inline void write_predictions(std::ostream& out, const Dataset& coords, const Vector& yhat)
{
  if (static_cast<std::size_t>(yhat.size()) != coords.size())
    throw DataError("write_predictions: prediction count differs from row count");
  const Vector x = coords.coordinate(0), y = coords.coordinate(1);
  out << "x,y,prediction\n";
  for (Eigen::Index i = 0; i < yhat.size(); ++i)
    out << ldf::detail::format_double(x(i)) << ',' << ldf::detail::format_double(y(i)) << ','
        << ldf::detail::format_double(yhat(i)) << '\n';
}

//! Predicts an ensemble on grid rows that already carry the model's features, in order.
inline void grid_predict(const trees::Ensemble& model, const Dataset& grid, std::ostream& out)
{
  if (!model.feature_names.empty() && model.feature_names != grid.feature_names)
    throw DataError("grid_predict: grid features do not match the model's training schema");
  if (grid.n_features() < 2)
    throw DataError("grid_predict: grid needs coordinate columns");
  write_predictions(out, grid, trees::predict_ensemble(model, grid.samples));
}

// ---------------------------------------------------------------------------
// Deployment: one roster entry fitted on every labeled row

//! Everything needed to score raw (unnormalized, LDF-free) rows.
struct Deployment
{
  RosterEntry entry;
  std::vector<std::string> feature_names;
  NormStats plain_stats;
  int k_neighbors = static_cast<int>(kDefaultNeighbors);
  int day_window = 0;
  //! Normalized plain pool the clouds of new rows are drawn from (LDF variants).
  Dataset pool_source, pool_target;
  std::optional<ae::AutoencoderModel> autoencoder;
  std::optional<NormStats> ldf_stats;
  FittedModel fitted;
};

inline Deployment deploy(const ExperimentConfig& cfg, const DomainData& data, const RosterEntry& entry)
{
  Deployment d;
  d.entry = entry;
  d.feature_names = data.target.feature_names;
  d.k_neighbors = cfg.k_neighbors;
  d.day_window = cfg.day_window;
  d.plain_stats = fit_normalizer({ data.source, data.target });
  CellData cd{ apply_normalizer(data.source, d.plain_stats), apply_normalizer(data.target, d.plain_stats),
               data.target.subset({}), {}, {}, {} };
  cd.test = apply_normalizer(cd.test, d.plain_stats);
  const std::uint64_t seed = derive_seed(cfg.master_seed, kDeploySeed);
  if (entry.variant != Variant::plain) {
    d.pool_source = cd.source;
    d.pool_target = cd.train;
    cd = add_ldf(cd, entry.variant, cfg, derive_seed(seed, kAutoencoderSeed, static_cast<std::uint64_t>(entry.variant)));
    d.autoencoder = cd.autoencoder;
    d.ldf_stats = cd.ldf_stats;
  }
  d.fitted = fit_model(entry.model, cd.source, cd.train, cfg, derive_seed(seed, static_cast<std::uint64_t>(entry.model) + 16));
  return d;
}

//! Normalized (and LDF-augmented) features of raw rows, in the model's schema.
inline Dataset deployment_features(const Deployment& d, const Dataset& raw)
{
  if (raw.feature_names != d.feature_names)
    throw DataError("deployment: input features do not match the model's training schema");
  Dataset x = apply_normalizer(raw, d.plain_stats);
  if (d.autoencoder) {
    const Pool pool = Pool::from(d.pool_source, d.pool_target);
    const auto clouds = build_clouds(x, pool, static_cast<std::size_t>(d.k_neighbors), d.day_window);
    x = apply_normalizer(ae::impute_ldf(*d.autoencoder, x, clouds, pool), *d.ldf_stats);
  }
  return x;
}

inline Vector predict(const Deployment& d, const Dataset& raw)
{
  return d.fitted.predict(deployment_features(d, raw).samples);
}

inline void grid_predict(const Deployment& d, const Dataset& grid, std::ostream& out)
{
  write_predictions(out, grid, predict(d, grid));
}

namespace detail {

inline nlohmann::json matrix_json(const Matrix& m)
{
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index cols)
{
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto row = j.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw DataError("deployment: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(i, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

inline nlohmann::json vector_json(const Vector& v)
{
  return std::vector<double>(v.begin(), v.end());
}

inline Vector vector_from_json(const nlohmann::json& j)
{
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json dataset_json(const Dataset& d)
{
  nlohmann::json j{ { "features", d.feature_names },   { "samples", matrix_json(d.samples) },
                    { "labels", vector_json(d.labels) }, { "sensor_ids", d.sensor_ids },
                    { "day_index", d.day_index },        { "domain", to_string(d.domain) } };
  if (d.aux_labels)
    j["aux_labels"] = vector_json(*d.aux_labels);
  return j;
}

inline Dataset dataset_from_json(const nlohmann::json& j)
{
  Dataset d;
  j.at("features").get_to(d.feature_names);
  d.samples = matrix_from_json(j.at("samples"), static_cast<Eigen::Index>(d.feature_names.size()));
  d.labels = vector_from_json(j.at("labels"));
  j.at("sensor_ids").get_to(d.sensor_ids);
  j.at("day_index").get_to(d.day_index);
  d.domain = j.at("domain") == "source" ? Domain::source : Domain::target;
  if (j.contains("aux_labels"))
    d.aux_labels = vector_from_json(j.at("aux_labels"));
  d.validate();
  return d;
}

inline nlohmann::json stats_json(const NormStats& s)
{
  return { { "mean", vector_json(s.mean) }, { "std", vector_json(s.std) } };
}

inline NormStats stats_from_json(const nlohmann::json& j)
{
  return { vector_from_json(j.at("mean")), vector_from_json(j.at("std")) };
}

} // namespace detail

inline nlohmann::json to_json(const Deployment& d)
{
  nlohmann::json j{ { "format", "ldf-deployment" },
                    { "version", 1 },
                    { "model", d.entry.name() },
                    { "features", d.feature_names },
                    { "plain_stats", detail::stats_json(d.plain_stats) },
                    { "k_neighbors", d.k_neighbors },
                    { "day_window", d.day_window },
                    { "description", d.fitted.description } };
  if (d.fitted.ensemble)
    j["ensemble"] = trees::to_json(*d.fitted.ensemble);
  if (d.fitted.fnn)
    j["fnn"] = { { "n_inputs", d.fitted.fnn->n_inputs }, { "params", d.fitted.fnn->params } };
  if (d.autoencoder) {
    j["autoencoder"] = ae::to_json(*d.autoencoder);
    j["ldf_stats"] = detail::stats_json(*d.ldf_stats);
    j["pool_source"] = detail::dataset_json(d.pool_source);
    j["pool_target"] = detail::dataset_json(d.pool_target);
  }
  return j;
}

inline Deployment deployment_from_json(const nlohmann::json& j)
{
  if (j.value("format", "") != "ldf-deployment" || j.value("version", 0) != 1)
    throw DataError("model: not an ldf-deployment v1 document");
  Deployment d;
  d.entry = parse_roster_entry(j.at("model").get<std::string>());
  j.at("features").get_to(d.feature_names);
  d.plain_stats = detail::stats_from_json(j.at("plain_stats"));
  j.at("k_neighbors").get_to(d.k_neighbors);
  j.at("day_window").get_to(d.day_window);
  d.fitted.description = j.value("description", "");
  if (j.contains("ensemble"))
    d.fitted.ensemble = trees::ensemble_from_json(j.at("ensemble"));
  else if (j.contains("fnn"))
    d.fitted.fnn = ae::FnnModel{ j.at("fnn").at("n_inputs").get<int>(), j.at("fnn").at("params").get<std::vector<double>>() };
  else
    throw DataError("model: no regressor in deployment document");
  if (j.contains("autoencoder")) {
    d.autoencoder = ae::autoencoder_from_json(j.at("autoencoder"));
    d.ldf_stats = detail::stats_from_json(j.at("ldf_stats"));
    d.pool_source = detail::dataset_from_json(j.at("pool_source"));
    d.pool_target = detail::dataset_from_json(j.at("pool_target"));
  }
  if (static_cast<std::size_t>(d.plain_stats.mean.size()) != d.feature_names.size())
    throw DataError("model: normalizer width does not match the feature list");
  return d;
}


// ---------------------------------------------------------------------------
// Standalone LDF imputer

//! Normalizer, pool and autoencoder fitted on every source and target row.
struct Imputer
{
  Variant variant = Variant::ldf;
  std::vector<std::string> feature_names;
  NormStats plain_stats;
  int k_neighbors = static_cast<int>(kDefaultNeighbors);
  int day_window = 0;
  Dataset pool_source, pool_target;
  ae::AutoencoderModel autoencoder;
  std::vector<ae::EpochLoss> history;
};

//! Uses the same seed as deploy(), so both produce the same autoencoder.
inline Imputer fit_imputer(const ExperimentConfig& cfg, const DomainData& data, Variant variant)
{
  if (variant == Variant::plain)
    throw DataError("imputer: variant must be LDF or LDF-A");
  Imputer im;
  im.variant = variant;
  im.feature_names = data.target.feature_names;
  im.k_neighbors = cfg.k_neighbors;
  im.day_window = cfg.day_window;
  im.plain_stats = fit_normalizer({ data.source, data.target });
  CellData cd{ apply_normalizer(data.source, im.plain_stats), apply_normalizer(data.target, im.plain_stats),
               data.target.subset({}), {}, {}, {} };
  cd.test = apply_normalizer(cd.test, im.plain_stats);
  im.pool_source = cd.source;
  im.pool_target = cd.train;
  const std::uint64_t seed = derive_seed(cfg.master_seed, kDeploySeed);
  auto out = add_ldf(cd, variant, cfg, derive_seed(seed, kAutoencoderSeed, static_cast<std::uint64_t>(variant)));
  im.autoencoder = std::move(*out.autoencoder);
  im.history = std::move(out.ae_history);
  return im;
}

//! Raw (unnormalized) LDF value of every row.
inline Vector impute(const Imputer& im, const Dataset& raw)
{
  if (raw.feature_names != im.feature_names)
    throw DataError("imputer: input features do not match the training schema");
  const Dataset x = apply_normalizer(raw, im.plain_stats);
  const Pool pool = Pool::from(im.pool_source, im.pool_target);
  const auto clouds = build_clouds(x, pool, static_cast<std::size_t>(im.k_neighbors), im.day_window);
  const Dataset with = ae::impute_ldf(im.autoencoder, x, clouds, pool);
  return with.samples.col(with.samples.cols() - 1);
}

inline nlohmann::json to_json(const Imputer& im)
{
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : im.history)
    hist.push_back({ { "stage", ae::to_string(h.stage) }, { "loss", h.loss } });
  return { { "format", "ldf-imputer" },
           { "version", 1 },
           { "variant", to_string(im.variant) },
           { "features", im.feature_names },
           { "plain_stats", detail::stats_json(im.plain_stats) },
           { "k_neighbors", im.k_neighbors },
           { "day_window", im.day_window },
           { "pool_source", detail::dataset_json(im.pool_source) },
           { "pool_target", detail::dataset_json(im.pool_target) },
           { "autoencoder", ae::to_json(im.autoencoder) },
           { "history", hist } };
}

inline Imputer imputer_from_json(const nlohmann::json& j)
{
  if (j.value("format", "") != "ldf-imputer" || j.value("version", 0) != 1)
    throw DataError("imputer: not an ldf-imputer v1 document");
  Imputer im;
  im.variant = parse_variant(j.at("variant").get<std::string>());
  j.at("features").get_to(im.feature_names);
  im.plain_stats = detail::stats_from_json(j.at("plain_stats"));
  j.at("k_neighbors").get_to(im.k_neighbors);
  j.at("day_window").get_to(im.day_window);
  im.pool_source = detail::dataset_from_json(j.at("pool_source"));
  im.pool_target = detail::dataset_from_json(j.at("pool_target"));
  im.autoencoder = ae::autoencoder_from_json(j.at("autoencoder"));
  for (const auto& h : j.value("history", nlohmann::json::array()))
    im.history.push_back({ h.at("stage").get<std::string>() == ae::to_string(ae::Stage::reconstruction)
                             ? ae::Stage::reconstruction
                             : ae::Stage::estimation,
                           h.at("loss").get<double>() });
  if (static_cast<std::size_t>(im.plain_stats.mean.size()) != im.feature_names.size())
    throw DataError("imputer: normalizer width does not match the feature list");
  return im;
}

} // namespace ldf::pipeline
