#include <ldf/pipeline.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef LDF_VERSION
#define LDF_VERSION "0.0.0"
#endif

namespace {

using namespace ldf;
using namespace ldf::pipeline;
using nlohmann::json;

enum ExitCode
{
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kDivergence = 3,
};

//! Collects what a run did; written next to its primary output.
struct Manifest
{
  std::string command;
  json doc = json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::chrono::steady_clock::time_point lap = start;

  void timing(const std::string& stage)
  {
    const auto now = std::chrono::steady_clock::now();
    doc["timings_s"][stage] = std::chrono::duration<double>(now - lap).count();
    lap = now;
  }

  void config(const ExperimentConfig& cfg)
  {
    doc["config"] = config_to_json(cfg);
    doc["seeds"] = { { "master_seed", cfg.master_seed }, { "synth_seed", cfg.synth_seed } };
  }

  void output(const std::string& path) { doc["outputs"].push_back(path); }

  void write(const std::string& path)
  {
    doc["tool"] = "ldftool";
    doc["version"] = LDF_VERSION;
    doc["command"] = command;
    doc["timings_s"]["total"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream out(path);
    if (!out)
      throw DataError("cannot write '" + path + "'");
    out << doc.dump(2) << '\n';
  }
};

std::ofstream open_out(const std::string& path)
{
  std::ofstream out(path);
  if (!out)
    throw DataError("cannot write '" + path + "'");
  out.precision(17);
  return out;
}

json load_json(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

Dataset load_input(const std::string& path)
{
  return load_csv(path, infer_schema(path), Domain::target, false);
}

std::vector<std::string> csv_list(const std::string& s)
{
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty())
      out.push_back(item);
  return out;
}

std::vector<int> int_list(const std::string& s)
{
  std::vector<int> out;
  for (const auto& item : csv_list(s)) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw DataError("'" + item + "' is not an integer");
    }
  }
  return out;
}

ProgressFn progress_printer(bool verbose)
{
  if (!verbose)
    return {};
  return [](const std::string& line) { std::cerr << line << '\n'; };
}

void write_cells(std::ostream& out, const ResultTable& t)
{
  out << "model,variant,sensors,repeat,r2,rmse,chosen\n";
  for (const auto& c : t.cells)
    out << to_string(c.entry.model) << ',' << to_string(c.entry.variant) << ',' << c.sensor_count << ','
        << c.repeat << ',' << ldf::detail::format_double(c.metrics.r_squared) << ','
        << ldf::detail::format_double(c.metrics.rmse) << ",\"" << c.chosen << "\"\n";
}

// ---------------------------------------------------------------------------

struct Options
{
  std::string config, out, manifest, input, model, out_dir = ".", synth, variant = "LDF", method = "nnw";
  std::string kernel = "rbf", k_values = "4,8,12,16", sensors, cells, history, grid;
  std::optional<std::uint64_t> seed;
  std::optional<int> k, day_window, neighbors, degree, centers, repeat;
  std::optional<double> gamma, kmm_b;
  bool verbose = false;
};

ExperimentConfig read_config(const Options& o, Manifest& m)
{
  auto cfg = load_config(o.config);
  if (o.seed)
    cfg.master_seed = *o.seed;
  if (o.k)
    cfg.k_neighbors = *o.k;
  if (o.day_window)
    cfg.day_window = *o.day_window;
  if (!o.sensors.empty())
    cfg.sensor_counts = int_list(o.sensors);
  cfg.validate();
  m.config(cfg);
  return cfg;
}

std::string manifest_path(const Options& o, const std::string& primary)
{
  return o.manifest.empty() ? primary + ".manifest.json" : o.manifest;
}

void cmd_gen(const Options& o, Manifest& m)
{
  synth::SynthConfig sc;
  std::uint64_t seed = 1;
  if (!o.config.empty()) {
    const auto cfg = load_config(o.config);
    if (!cfg.synth)
      throw DataError("gen: config has no synth section");
    sc = *cfg.synth;
    seed = cfg.synth_seed;
  } else if (!o.synth.empty()) {
    try {
      sc = load_json(o.synth).get<synth::SynthConfig>();
    } catch (const json::exception& e) {
      throw DataError(o.synth + ": " + e.what());
    }
  }
  if (o.seed)
    seed = *o.seed;
  const auto data = synth::generate(sc, seed);
  m.timing("generate");
  m.doc["synth"] = sc;
  m.doc["seeds"] = { { "synth_seed", seed } };

  namespace fs = std::filesystem;
  fs::create_directories(o.out_dir);
  const auto path = [&](const char* name) { return (fs::path(o.out_dir) / name).string(); };
  save_csv(path("source.csv"), data.source);
  save_csv(path("target.csv"), data.target);
  save_csv(path("grid.csv"), data.grid);
  {
    auto out = open_out(path("grid_truth.csv"));
    write_predictions(out, data.grid, data.grid_truth);
  }
  for (const char* f : { "source.csv", "target.csv", "grid.csv", "grid_truth.csv" })
    m.output(path(f));
  m.write(o.manifest.empty() ? path("manifest.json") : o.manifest);
}

void cmd_cloud(const Options& o, Manifest& m)
{
  const auto cfg = read_config(o, m);
  const auto data = load_domains(cfg);
  const auto stats = fit_normalizer({ data.source, data.target });
  const auto src = apply_normalizer(data.source, stats);
  const auto tgt = apply_normalizer(data.target, stats);
  const Pool pool = Pool::from(src, tgt);
  const auto clouds = build_clouds(tgt, pool, static_cast<std::size_t>(cfg.k_neighbors), cfg.day_window, pool.n_source);
  m.timing("clouds");
  auto out = open_out(o.out);
  write_clouds(out, clouds);
  m.doc["pool"] = { { "source_rows", pool.n_source }, { "target_rows", tgt.size() } };
  m.output(o.out);
  m.write(manifest_path(o, o.out));
}

void cmd_ldf_train(const Options& o, Manifest& m)
{
  const auto cfg = read_config(o, m);
  const auto data = load_domains(cfg);
  const auto im = fit_imputer(cfg, data, parse_variant(o.variant));
  m.timing("train");
  open_out(o.out) << to_json(im).dump() << '\n';
  m.output(o.out);
  if (!o.history.empty()) {
    auto h = open_out(o.history);
    h << "epoch,stage,loss\n";
    for (std::size_t e = 0; e < im.history.size(); ++e)
      h << e << ',' << ae::to_string(im.history[e].stage) << ',' << ldf::detail::format_double(im.history[e].loss)
        << '\n';
    m.output(o.history);
  }
  if (!im.history.empty())
    m.doc["final_loss"] = im.history.back().loss;
  m.write(manifest_path(o, o.out));
}

void cmd_ldf_impute(const Options& o, Manifest& m)
{
  const auto im = imputer_from_json(load_json(o.model));
  const auto raw = load_input(o.input);
  const auto out_ds = raw.with_column("ldf", impute(im, raw));
  m.timing("impute");
  save_csv(o.out, out_ds);
  m.output(o.out);
  m.write(manifest_path(o, o.out));
}

void cmd_reweight(const Options& o, Manifest& m)
{
  const auto cfg = read_config(o, m);
  const auto data = load_domains(cfg);
  const auto stats = fit_normalizer({ data.source, data.target });
  const Matrix src = apply_normalizer(data.source, stats).samples;
  const Matrix tgt = apply_normalizer(data.target, stats).samples;
  rw::KernelConfig kc{ rw::parse_kernel(o.kernel), o.gamma.value_or(1.0), o.degree.value_or(2) };
  rw::WeightVector w;
  if (o.method == "nnw") {
    w = rw::nnw_weights(src, tgt, static_cast<std::size_t>(o.neighbors.value_or(cfg.grids.nnw_neighbors.front())));
  } else if (o.method == "kliep") {
    const auto r = rw::kliep(src, tgt, kc, static_cast<std::size_t>(o.centers.value_or(static_cast<int>(cfg.kliep_centers))),
                             cfg.kliep_max_iter);
    w = r.weights;
    m.doc["iterations"] = r.iterations;
  } else if (o.method == "kmm") {
    const auto r = rw::kmm(src, tgt, kc, o.kmm_b.value_or(cfg.kmm_B), -1.0, cfg.kmm_max_iter);
    w = r.weights;
    m.doc["iterations"] = r.iterations;
  } else {
    throw CLI::ValidationError("--method", "must be nnw, kliep or kmm");
  }
  m.timing("reweight");
  auto out = open_out(o.out);
  out << "index,weight\n";
  for (Eigen::Index i = 0; i < w.weights.size(); ++i)
    out << i << ',' << ldf::detail::format_double(w.weights(i)) << '\n';
  m.doc["method"] = rw::to_string(w.method);
  m.doc["mean_weight"] = w.mean();
  m.output(o.out);
  m.write(manifest_path(o, o.out));
}

void cmd_train(const Options& o, Manifest& m)
{
  const auto cfg = read_config(o, m);
  const auto data = load_domains(cfg);
  const auto d = deploy(cfg, data, parse_roster_entry(o.model));
  m.timing("fit");
  open_out(o.out) << to_json(d).dump() << '\n';
  m.doc["model"] = d.entry.name();
  m.doc["chosen"] = d.fitted.description;
  m.output(o.out);
  m.write(manifest_path(o, o.out));
}

void cmd_predict(const Options& o, Manifest& m)
{
  const auto d = deployment_from_json(load_json(o.model));
  const auto raw = load_input(o.input);
  const Vector yhat = predict(d, raw);
  m.timing("predict");
  auto out = open_out(o.out);
  out << kSensorColumn << ',' << kDayColumn << ",prediction\n";
  for (Eigen::Index i = 0; i < yhat.size(); ++i)
    out << raw.sensor_ids[static_cast<std::size_t>(i)] << ',' << raw.day_index[static_cast<std::size_t>(i)] << ','
        << ldf::detail::format_double(yhat(i)) << '\n';
  m.doc["model"] = d.entry.name();
  if (raw.labeled) {
    const auto met = evaluate(raw.labels, yhat);
    m.doc["metrics"] = { { "r2", met.r_squared }, { "rmse", met.rmse } };
    std::cout << "R2 " << met.r_squared << " RMSE " << met.rmse << '\n';
  }
  m.output(o.out);
  m.write(manifest_path(o, o.out));
}

void cmd_grid_predict(const Options& o, Manifest& m)
{
  const auto d = deployment_from_json(load_json(o.model));
  Dataset grid;
  if (!o.grid.empty()) {
    grid = load_input(o.grid);
  } else {
    const auto cfg = read_config(o, m);
    if (!cfg.synth)
      throw DataError("grid-predict: need --grid or a config with a synth section");
    grid = synth::generate(*cfg.synth, cfg.synth_seed).grid;
  }
  auto out = open_out(o.out);
  grid_predict(d, grid, out);
  m.timing("predict");
  m.doc["model"] = d.entry.name();
  m.doc["rows"] = grid.size();
  m.output(o.out);
  m.write(manifest_path(o, o.out));
}

void cmd_bench(const Options& o, Manifest& m)
{
  const auto cfg = read_config(o, m);
  const auto data = load_domains(cfg);
  m.timing("load");
  const auto table = run_experiment(cfg, data, progress_printer(o.verbose));
  m.timing("experiment");
  auto out = open_out(o.out);
  write_table(out, table);
  m.output(o.out);
  if (!o.cells.empty()) {
    auto c = open_out(o.cells);
    write_cells(c, table);
    m.output(o.cells);
  }
  m.doc["leakage_checks"] = table.leakage_checks;
  if (!table.ldf_test_correlation.empty()) {
    const auto& v = table.ldf_test_correlation;
    m.doc["mean_abs_ldf_correlation"] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
  write_table(std::cout, table);
  m.write(manifest_path(o, o.out));
}

void cmd_ablate_k(const Options& o, Manifest& m)
{
  const auto cfg = read_config(o, m);
  const auto data = load_domains(cfg);
  const auto ks = int_list(o.k_values);
  if (ks.empty())
    throw CLI::ValidationError("--k-values", "need at least one value");
  const auto runs = ablate_k(cfg, ks, data, progress_printer(o.verbose));
  m.timing("ablation");
  auto out = open_out(o.out);
  out << "k,sensors,mean_r2,std_r2,mean_rmse,std_rmse\n";
  for (const auto& [k, t] : runs)
    for (const auto& r : t.rows)
      out << k << ',' << r.sensor_count << ',' << ldf::detail::format_double(r.mean_r2) << ','
          << ldf::detail::format_double(r.std_r2) << ',' << ldf::detail::format_double(r.mean_rmse) << ','
          << ldf::detail::format_double(r.std_rmse) << '\n';
  m.doc["k_values"] = ks;
  m.output(o.out);
  m.write(manifest_path(o, o.out));
}

void cmd_corr(const Options& o, Manifest& m)
{
  const auto cfg = read_config(o, m);
  const auto data = load_domains(cfg);
  const int sc = cfg.sensor_counts.front();
  const int rep = o.repeat.value_or(0);
  const auto variant = parse_variant(o.variant);
  const auto pc = prepare_cell(data, cfg, rep, sc);
  CellData cd = pc.plain;
  if (variant != Variant::plain)
    cd = add_ldf(pc.plain, variant, cfg, derive_seed(pc.seed, kAutoencoderSeed, static_cast<std::uint64_t>(variant)));
  m.timing("cell");
  auto out = open_out(o.out);
  out << "partition,feature,correlation\n";
  for (const auto& [name, ds] : { std::pair<const char*, const Dataset*>{ "train", &cd.train }, { "test", &cd.test } })
    for (const auto& [f, r] : correlation_report(*ds))
      out << name << ',' << f << ',' << ldf::detail::format_double(r) << '\n';
  m.doc["cell"] = { { "sensors", sc }, { "repeat", rep }, { "variant", to_string(variant) } };
  m.output(o.out);
  m.write(manifest_path(o, o.out));
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "Latent domain feature toolkit" };
  app.set_version_flag("--version", LDF_VERSION);
  app.require_subcommand(1);
  Options o;
  Manifest manifest;

  auto config_opt = [&](CLI::App* c, bool required = true) {
    auto* opt = c->add_option("-c,--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    if (required)
      opt->required();
    c->add_option("--seed", o.seed, "override the master seed");
    c->add_option("--manifest", o.manifest, "run manifest path (default: <out>.manifest.json)");
  };
  auto out_opt = [&](CLI::App* c, const char* what) { c->add_option("-o,--out", o.out, what)->required(); };

  auto* gen = app.add_subcommand("gen", "generate a synthetic source/target/grid dataset");
  gen->add_option("-c,--config", o.config, "experiment config with a synth section")->check(CLI::ExistingFile);
  gen->add_option("--synth", o.synth, "standalone synth config (JSON)")->check(CLI::ExistingFile);
  gen->add_option("--seed", o.seed, "override the synth seed");
  gen->add_option("-d,--out-dir", o.out_dir, "output directory");
  gen->add_option("--manifest", o.manifest, "run manifest path (default: <out-dir>/manifest.json)");

  auto* cloud = app.add_subcommand("cloud", "neighborhood clouds of every target row");
  config_opt(cloud);
  out_opt(cloud, "clouds CSV");
  cloud->add_option("-k,--k", o.k, "neighbors per cloud")->check(CLI::PositiveNumber);
  cloud->add_option("--day-window", o.day_window, "day matching window")->check(CLI::NonNegativeNumber);

  auto* ldf_cmd = app.add_subcommand("ldf", "train or apply the latent feature autoencoder");
  ldf_cmd->require_subcommand(1);
  auto* ldf_train = ldf_cmd->add_subcommand("train", "fit an imputer on every source and target row");
  config_opt(ldf_train);
  out_opt(ldf_train, "imputer JSON");
  ldf_train->add_option("--variant", o.variant, "LDF or LDF-A")->check(CLI::IsMember({ "LDF", "LDF-A" }));
  ldf_train->add_option("-k,--k", o.k, "neighbors per cloud")->check(CLI::PositiveNumber);
  ldf_train->add_option("--history", o.history, "per-epoch loss CSV");
  auto* ldf_impute = ldf_cmd->add_subcommand("impute", "append the latent feature to a CSV");
  ldf_impute->add_option("-m,--model", o.model, "imputer JSON")->required()->check(CLI::ExistingFile);
  ldf_impute->add_option("-i,--input", o.input, "input CSV")->required()->check(CLI::ExistingFile);
  ldf_impute->add_option("--manifest", o.manifest, "run manifest path");
  out_opt(ldf_impute, "output CSV");

  auto* reweight = app.add_subcommand("reweight", "importance weights of source rows against the target");
  config_opt(reweight);
  out_opt(reweight, "weights CSV (index,weight)");
  reweight->add_option("--method", o.method, "nnw, kliep or kmm")->check(CLI::IsMember({ "nnw", "kliep", "kmm" }));
  reweight->add_option("--kernel", o.kernel, "rbf or poly")->check(CLI::IsMember({ "rbf", "poly" }));
  reweight->add_option("--gamma", o.gamma, "kernel width")->check(CLI::PositiveNumber);
  reweight->add_option("--degree", o.degree, "polynomial degree")->check(CLI::PositiveNumber);
  reweight->add_option("--neighbors", o.neighbors, "NNW neighbors")->check(CLI::PositiveNumber);
  reweight->add_option("--centers", o.centers, "KLIEP centers")->check(CLI::PositiveNumber);
  reweight->add_option("--B", o.kmm_b, "KMM weight bound")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "fit one model on every labeled row and save it");
  config_opt(train);
  out_opt(train, "deployment JSON");
  train->add_option("-m,--model", o.model, "roster entry, e.g. \"NNW [LDF]\"")->required();

  auto* pred = app.add_subcommand("predict", "score a CSV with a saved model");
  pred->add_option("-m,--model", o.model, "deployment JSON")->required()->check(CLI::ExistingFile);
  pred->add_option("-i,--input", o.input, "input CSV")->required()->check(CLI::ExistingFile);
  pred->add_option("--manifest", o.manifest, "run manifest path");
  out_opt(pred, "predictions CSV");

  auto* bench = app.add_subcommand("bench", "cross-validated comparison of the roster");
  config_opt(bench);
  out_opt(bench, "aggregate table CSV");
  bench->add_option("--cells", o.cells, "per-cell results CSV");
  bench->add_option("--sensors", o.sensors, "override sensor counts, comma separated");
  bench->add_flag("-v,--verbose", o.verbose, "print every cell");

  auto* abl = app.add_subcommand("ablate-k", "NNW [LDF] across neighborhood sizes");
  config_opt(abl);
  out_opt(abl, "ablation CSV");
  abl->add_option("--k-values", o.k_values, "comma separated neighborhood sizes");
  abl->add_option("--sensors", o.sensors, "override sensor counts, comma separated");
  abl->add_flag("-v,--verbose", o.verbose, "print every cell");

  auto* corr = app.add_subcommand("corr", "feature/label correlations of one cell");
  config_opt(corr);
  out_opt(corr, "correlation CSV");
  corr->add_option("--variant", o.variant, "plain, LDF or LDF-A")->check(CLI::IsMember({ "plain", "LDF", "LDF-A" }));
  corr->add_option("--sensors", o.sensors, "sensor count of the cell");
  corr->add_option("--repeat", o.repeat, "repeat index of the cell")->check(CLI::NonNegativeNumber);
  corr->add_option("-k,--k", o.k, "neighbors per cloud")->check(CLI::PositiveNumber);

  auto* gp = app.add_subcommand("grid-predict", "predict a saved model over a grid");
  gp->add_option("-m,--model", o.model, "deployment JSON")->required()->check(CLI::ExistingFile);
  gp->add_option("-g,--grid", o.grid, "grid CSV")->check(CLI::ExistingFile);
  config_opt(gp, false);
  out_opt(gp, "prediction CSV (x,y,prediction)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const std::vector<std::pair<CLI::App*, void (*)(const Options&, Manifest&)>> commands{
      { gen, cmd_gen },           { cloud, cmd_cloud },     { ldf_train, cmd_ldf_train },
      { ldf_impute, cmd_ldf_impute }, { reweight, cmd_reweight }, { train, cmd_train },
      { pred, cmd_predict },      { bench, cmd_bench },     { abl, cmd_ablate_k },
      { corr, cmd_corr },         { gp, cmd_grid_predict },
    };
    for (const auto& [sub, fn] : commands) {
      if (!sub->parsed())
        continue;
      manifest.command = sub->get_parent() == ldf_cmd ? "ldf " + sub->get_name() : sub->get_name();
      if (sub == gen && !o.config.empty() && !o.synth.empty())
        throw CLI::ValidationError("gen", "--config and --synth are mutually exclusive");
      fn(o, manifest);
      return kOk;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "ldftool: " << e.what() << '\n';
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "ldftool: numeric divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const DataError& e) {
    std::cerr << "ldftool: data error: " << e.what() << '\n';
    return kDataError;
  } catch (const LeakageError& e) {
    std::cerr << "ldftool: leakage: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "ldftool: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}
