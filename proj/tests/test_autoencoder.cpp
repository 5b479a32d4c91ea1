#include "ldf/autoencoder.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ldf;
using namespace ldf::ae;

namespace {

LdfInput random_input(int k, int p, std::mt19937_64& rng, bool with_aux = false)
{
  std::normal_distribution<double> nd;
  LdfInput in;
  in.tensor.resize(k + 1, p + 1);
  for (Eigen::Index i = 0; i < in.tensor.size(); ++i)
    in.tensor.data()[i] = nd(rng);
  in.tensor(0, p) = 0.0;
  in.target_label = nd(rng);
  if (with_aux)
    in.aux_label = nd(rng);
  return in;
}

// Inputs whose label is a smooth function of the neighbor labels, so both
// stages have learnable structure.
std::vector<LdfInput> structured_inputs(int n, int k, int p, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<LdfInput> out;
  for (int i = 0; i < n; ++i) {
    LdfInput in = random_input(k, p, rng);
    const double level = nd(rng);
    for (int r = 1; r <= k; ++r)
      in.tensor(r, p) = level + 0.1 * nd(rng);
    in.target_label = level;
    out.push_back(in);
  }
  return out;
}

double leaky01(double v)
{
  return v > 0.0 ? v : 0.01 * v;
}

AutoencoderModel tiny_model()
{
  ArchConfig arch;
  arch.conv_channels = { 1, 1, 1 };
  return init_model(arch, 1, 1, 0);
}

} // namespace

TEST(Init, DeterministicPerSeed)
{
  const auto a = init_model({}, 4, 3, 11);
  const auto b = init_model({}, 4, 3, 11);
  const auto c = init_model({}, 4, 3, 12);
  EXPECT_EQ(a.params, b.params);
  EXPECT_NE(a.params, c.params);
}

TEST(Init, GlorotBoundsAndZeroBiases)
{
  const auto m = init_model({}, 12, 27, 3);
  const auto lay = m.layout();
  const double a0 = std::sqrt(6.0 / (28 + 32));
  for (std::size_t i = 0; i < 28u * 32u; ++i)
    EXPECT_LE(std::abs(m.params[lay.conv_w[0] + i]), a0);
  for (std::size_t i = 0; i < 32; ++i)
    EXPECT_EQ(m.params[lay.conv_b[0] + i], 0.0);
  EXPECT_EQ(m.params[lay.enc_b], 0.0);
  EXPECT_EQ(m.params[lay.est_b], 0.0);
}

TEST(Init, RejectsBadArch)
{
  ArchConfig arch;
  arch.conv_kernel_sizes = { 1, 3, 3 };
  EXPECT_THROW(init_model(arch, 4, 3, 0), DataError);
  arch = {};
  arch.estimator_outputs = 3;
  EXPECT_THROW(init_model(arch, 4, 3, 0), DataError);
}

TEST(Forward, ZeroModel)
{
  const auto m = zero_model({}, 4, 3);
  std::mt19937_64 rng(1);
  const auto in = random_input(4, 3, rng);
  EXPECT_EQ(encode(m, in), 0.0);
  EXPECT_TRUE(decode(m, 0.7).isZero(0.0));
}

TEST(Forward, HandSizedNet)
{
  auto m = tiny_model();
  const auto lay = m.layout();
  auto& P = m.params;
  P[lay.conv_w[0] + 0] = 0.5; // feature channel
  P[lay.conv_w[0] + 1] = -1.0; // label channel
  P[lay.conv_b[0]] = 0.1;
  P[lay.conv_w[1]] = 2.0;
  P[lay.conv_b[1]] = -0.5;
  P[lay.conv_w[2] + 0] = 1.0; // tap on row t-1
  P[lay.conv_w[2] + 1] = 3.0; // tap on row t
  P[lay.conv_w[2] + 2] = -2.0; // tap on row t+1
  P[lay.conv_b[2]] = 0.2;
  P[lay.enc_w + 0] = 1.5;
  P[lay.enc_w + 1] = -0.5;
  P[lay.enc_b] = 0.05;

  Matrix x(2, 2);
  x << 1, 0, 2, 3;
  const double h0_0 = leaky01(0.5 * 1 - 1.0 * 0 + 0.1);
  const double h0_1 = leaky01(0.5 * 2 - 1.0 * 3 + 0.1);
  const double h1_0 = leaky01(2.0 * h0_0 - 0.5);
  const double h1_1 = leaky01(2.0 * h0_1 - 0.5);
  const double h2_0 = leaky01(1.0 * 0.0 + 3.0 * h1_0 - 2.0 * h1_1 + 0.2);
  const double h2_1 = leaky01(1.0 * h1_0 + 3.0 * h1_1 - 2.0 * 0.0 + 0.2);
  const double z = 1.5 * h2_0 - 0.5 * h2_1 + 0.05;
  EXPECT_NEAR(z, 3.07421, 1e-12);
  EXPECT_NEAR(encode(m, x), z, 1e-14);
}

TEST(Forward, ZeroInputFollowsBiasPath)
{
  ArchConfig arch;
  auto m = init_model(arch, 4, 3, 5);
  const auto lay = m.layout();
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  for (std::size_t l = 0; l < 3; ++l)
    for (int c = 0; c < lay.width[l + 1]; ++c)
      m.params[lay.conv_b[l] + static_cast<std::size_t>(c)] = nd(rng);
  m.params[lay.enc_b] = 0.3;
  const Matrix zero = Matrix::Zero(5, 4);
  const double z = encode(m, zero);
  // first-layer weights multiply zeros: changing them cannot move the latent
  auto m2 = m;
  for (std::size_t i = 0; i < 4u * 32u; ++i)
    m2.params[lay.conv_w[0] + i] = nd(rng);
  EXPECT_EQ(encode(m2, zero), z);
  // oracle: the same composition with a bias-only first layer
  const auto& P = m.params;
  Eigen::RowVectorXd h0(32);
  for (int c = 0; c < 32; ++c)
    h0(c) = leaky01(P[lay.conv_b[0] + static_cast<std::size_t>(c)]);
  Eigen::RowVectorXd h1(16);
  for (int o = 0; o < 16; ++o) {
    double s = P[lay.conv_b[1] + static_cast<std::size_t>(o)];
    for (int c = 0; c < 32; ++c)
      s += P[lay.conv_w[1] + static_cast<std::size_t>(o + c * 16)] * h0(c);
    h1(o) = leaky01(s);
  }
  double latent = P[lay.enc_b];
  for (int t = 0; t < 5; ++t)
    for (int o = 0; o < 8; ++o) {
      double s = P[lay.conv_b[2] + static_cast<std::size_t>(o)];
      for (int j = 0; j < 3; ++j) {
        const int src = t + j - 1;
        if (src < 0 || src >= 5)
          continue;
        for (int c = 0; c < 16; ++c)
          s += P[lay.conv_w[2] + static_cast<std::size_t>(j * 16 * 8 + o + c * 8)] * h1(c);
      }
      latent += P[lay.enc_w + static_cast<std::size_t>(t * 8 + o)] * leaky01(s);
    }
  EXPECT_NEAR(z, latent, 1e-12);
}

TEST(Forward, ShapeContract)
{
  const auto m = init_model({}, 12, 27, 1);
  EXPECT_EQ(decode(m, 0.3).rows(), 13);
  EXPECT_EQ(decode(m, 0.3).cols(), 28);
  for (int k : { 1, 2, 5 })
    for (int p : { 1, 4 }) {
      const auto mk = init_model({}, k, p, 2);
      std::mt19937_64 rng(3);
      const auto in = random_input(k, p, rng);
      const Matrix out = decode(mk, encode(mk, in));
      EXPECT_EQ(out.rows(), in.tensor.rows());
      EXPECT_EQ(out.cols(), in.tensor.cols());
    }
  EXPECT_THROW(encode(m, Matrix::Zero(12, 28)), DataError);
}

TEST(Forward, EstimatorIsAffine)
{
  auto m = init_model({}, 2, 2, 1);
  const auto lay = m.layout();
  m.params[lay.est_w] = 2.0;
  m.params[lay.est_b] = 1.0;
  EXPECT_EQ(estimate(m, 3.0)(0), 7.0);
  EXPECT_EQ(estimate(m, 0.0)(0), 1.0);
  ArchConfig two;
  two.estimator_outputs = 2;
  const auto m2 = init_model(two, 2, 2, 1);
  EXPECT_EQ(estimate(m2, 1.0).size(), 2);
  EXPECT_EQ(m2.layout().est_b + 2, m2.n_params());
}

TEST(Gradient, DefaultArchOverTenSeeds)
{
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = init_model({}, 4, 3, seed);
    std::mt19937_64 rng(seed + 100);
    const auto rep = gradient_check_report(m, random_input(4, 3, rng));
    EXPECT_LT(rep.max_relative_error, 1e-3) << "seed " << seed;
    EXPECT_LT(rep.skipped_at_kinks, rep.checked / 20) << "seed " << seed;
  }
}

TEST(Gradient, LinearActivations)
{
  ArchConfig arch;
  arch.leaky_slope = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = init_model(arch, 4, 3, seed);
    std::mt19937_64 rng(seed + 200);
    const auto rep = gradient_check_report(m, random_input(4, 3, rng));
    EXPECT_LT(rep.max_relative_error, 1e-6) << "seed " << seed;
    EXPECT_EQ(rep.skipped_at_kinks, 0u);
  }
}

TEST(Gradient, TwoOutputEstimator)
{
  ArchConfig arch;
  arch.estimator_outputs = 2;
  const auto m = init_model(arch, 3, 2, 4);
  std::mt19937_64 rng(4);
  EXPECT_LT(gradient_check(m, random_input(3, 2, rng, true)), 1e-3);
}

TEST(Gradient, ZeroEverything)
{
  const auto m = zero_model({}, 4, 3);
  LdfInput in;
  in.tensor = Matrix::Zero(5, 4);
  in.target_label = 0.0;
  EXPECT_EQ(gradient_check(m, in), 0.0);
}

TEST(Train, ZeroLearningRateIsNullUpdate)
{
  const auto m = init_model({}, 3, 2, 1);
  const auto inputs = structured_inputs(20, 3, 2, 1);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.learning_rate = 0.0;
  cfg.batch_size = 5;
  const auto res = train(m, inputs, cfg);
  EXPECT_EQ(res.model.params, m.params);
  ASSERT_EQ(res.history.size(), 6u);
  for (std::size_t e = 2; e < 6; ++e)
    EXPECT_NEAR(res.history[e].loss, res.history[e - 2].loss, 1e-12);
  EXPECT_EQ(res.history[0].stage, Stage::reconstruction);
  EXPECT_EQ(res.history[1].stage, Stage::estimation);
}

TEST(Train, BothStagesImprove)
{
  const auto inputs = structured_inputs(64, 4, 3, 2);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.seed = 2;
  const auto res = train(init_model({}, 4, 3, 2), inputs, cfg);
  ASSERT_EQ(res.history.size(), 50u);
  EXPECT_LT(res.history[48].loss, res.history[0].loss);
  EXPECT_LT(res.history[49].loss, res.history[1].loss);
}

TEST(Train, OverfitsOneSample)
{
  std::mt19937_64 rng(3);
  const auto one = random_input(4, 3, rng);
  const std::vector<LdfInput> inputs(8, one);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.schedule = "E";
  cfg.seed = 3;
  const auto res = train(init_model({}, 4, 3, 3), inputs, cfg);
  EXPECT_LT(res.history.back().loss, 1e-2);
}

TEST(Train, DeterministicHistory)
{
  const auto inputs = structured_inputs(40, 3, 2, 4);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 8;
  cfg.seed = 9;
  const auto a = train(init_model({}, 3, 2, 4), inputs, cfg);
  const auto b = train(init_model({}, 3, 2, 4), inputs, cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e)
    EXPECT_EQ(a.history[e].loss, b.history[e].loss);
  EXPECT_EQ(a.model.params, b.model.params);
}

TEST(Train, StageLossesMostlyMonotoneOnFixedBatch)
{
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inputs = structured_inputs(16, 3, 2, seed);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 16;
    cfg.seed = seed;
    const auto res = train(init_model({}, 3, 2, seed), inputs, cfg);
    bool ok = true;
    for (std::size_t e = 2; e < res.history.size(); ++e)
      ok = ok && res.history[e].loss <= res.history[e - 2].loss;
    monotone += ok;
  }
  EXPECT_GE(monotone, 18);
}

TEST(Train, NonFiniteLossIsDivergence)
{
  auto inputs = structured_inputs(4, 2, 2, 5);
  inputs[2].tensor(1, 1) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 2;
  EXPECT_THROW(train(init_model({}, 2, 2, 5), inputs, cfg), DivergenceError);
}

TEST(Train, InputValidation)
{
  TrainConfig cfg;
  EXPECT_THROW(train(init_model({}, 2, 2, 5), {}, cfg), DataError);
  cfg.epochs = 1;
  EXPECT_THROW(train(init_model({}, 2, 2, 5), structured_inputs(2, 2, 2, 1), cfg), DataError);
  cfg.epochs = 2;
  ArchConfig two;
  two.estimator_outputs = 2;
  EXPECT_THROW(train(init_model(two, 2, 2, 5), structured_inputs(2, 2, 2, 1), cfg), DataError);
}

namespace {

struct PoolFixture
{
  Dataset src, tgt;
  Pool pool;
  std::vector<NeighborhoodCloud> clouds;

  PoolFixture()
  {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    for (Dataset* d : { &src, &tgt }) {
      const int n = d == &src ? 30 : 10;
      d->feature_names = { "a", "b", "c" };
      d->samples.resize(n, 3);
      d->labels.resize(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j)
          d->samples(i, j) = nd(rng);
        d->labels(i) = nd(rng);
        d->sensor_ids.push_back(i);
        d->day_index.push_back(0);
      }
    }
    pool = Pool::from(src, tgt);
    clouds = build_clouds(tgt, pool, 4, 0, pool.n_source);
  }
};

} // namespace

TEST(Impute, ZeroModelAppendsZeros)
{
  PoolFixture f;
  const auto out = impute_ldf(zero_model({}, 4, 3), f.tgt, f.clouds, f.pool);
  EXPECT_EQ(out.n_features(), 4u);
  EXPECT_EQ(out.feature_names.back(), "ldf");
  EXPECT_TRUE(out.samples.col(3).isZero(0.0));
}

TEST(Impute, PreservesColumnsAndMatchesEncode)
{
  PoolFixture f;
  const auto m = init_model({}, 4, 3, 8);
  const auto out = impute_ldf(m, f.tgt, f.clouds, f.pool);
  EXPECT_TRUE((out.samples.leftCols(3).array() == f.tgt.samples.array()).all());
  const auto inputs = assemble_inputs(f.tgt, f.clouds, f.pool);
  for (std::size_t i = 0; i < inputs.size(); ++i)
    EXPECT_EQ(out.samples(static_cast<Eigen::Index>(i), 3), encode(m, inputs[i]));
  auto short_clouds = f.clouds;
  short_clouds.pop_back();
  EXPECT_THROW(impute_ldf(m, f.tgt, short_clouds, f.pool), DataError);
}

TEST(Impute, WidthGrowsByOne)
{
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Dataset d;
  for (int j = 0; j < 27; ++j)
    d.feature_names.push_back("f" + std::to_string(j));
  d.samples.resize(15, 27);
  for (Eigen::Index i = 0; i < d.samples.size(); ++i)
    d.samples.data()[i] = nd(rng);
  d.labels = Vector::Zero(15);
  d.sensor_ids.assign(15, 0);
  d.day_index.assign(15, 0);
  const Pool pool = Pool::from(d, d.subset({}));
  const auto clouds = build_clouds(d, pool, 12, 0, std::size_t{ 0 });
  EXPECT_EQ(impute_ldf(init_model({}, 12, 27, 0), d, clouds, pool).n_features(), 28u);
}

TEST(Checkpoint, JsonRoundTrip)
{
  ArchConfig arch;
  arch.estimator_outputs = 2;
  const auto m = init_model(arch, 3, 2, 17);
  const auto back = autoencoder_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.params, m.params);
  EXPECT_EQ(back.rows, 4);
  EXPECT_EQ(back.arch.estimator_outputs, 2);
  auto j = to_json(m);
  j["params"].erase(0);
  EXPECT_THROW(autoencoder_from_json(j), DataError);
  j = to_json(m);
  j["version"] = 2;
  EXPECT_THROW(autoencoder_from_json(j), DataError);
}

TEST(Fnn, FitsLinearTarget)
{
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  Matrix X(200, 3);
  Vector y(200);
  for (int i = 0; i < 200; ++i) {
    for (int j = 0; j < 3; ++j)
      X(i, j) = nd(rng);
    y(i) = 1.5 * X(i, 0) - 2.0 * X(i, 1) + 0.5 * X(i, 2) + 0.3;
  }
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.seed = 4;
  const auto res = train_fnn(X, y, Vector(), cfg);
  EXPECT_GT(r_squared(y, predict_fnn(res.model, X)), 0.9);
  EXPECT_EQ(res.history.size(), 500u);
}

TEST(Fnn, ZeroEpochsKeepsInitialization)
{
  Matrix X = Matrix::Random(10, 2);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 5;
  const auto res = train_fnn(X, Vector::Ones(10), Vector(), cfg);
  EXPECT_EQ(res.model.params, init_fnn(2, 5).params);
}

TEST(Fnn, ZeroWeightsFreezeParameters)
{
  Matrix X = Matrix::Random(10, 2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 6;
  const auto res = train_fnn(X, Vector::Ones(10), Vector::Zero(10), cfg);
  EXPECT_EQ(res.model.params, init_fnn(2, 6).params);
}

TEST(Fnn, ShapeErrors)
{
  TrainConfig cfg;
  EXPECT_THROW(train_fnn(Matrix::Zero(3, 2), Vector::Zero(4), Vector(), cfg), DataError);
  EXPECT_THROW(predict_fnn(init_fnn(2, 0), Matrix::Zero(3, 3)), DataError);
}
