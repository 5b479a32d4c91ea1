#pragma once

// Two-stage autoencoder producing the latent dependency factor (LDF).
//
// The input is a (k+1) x (p+1) tensor. Rows are sensors (the sequence axis of
// the 1D convolutions), columns are features (the channels). Encoder: three
// convolutions with kernel sizes (1, 1, 3) and leaky-rectifier activations,
// then a dense layer to a single linear latent. Decoder: dense layer back to
// the last encoder activation shape, then three transposed convolutions
// mirroring the encoder. Estimator: one affine unit per output on the latent.

#include "ldf/core_data.hpp"
#include "ldf/error.hpp"
#include "ldf/neighborhood.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace ldf::ae {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

struct ArchConfig
{
  std::array<int, 3> conv_channels{ 32, 16, 8 };
  std::array<int, 3> conv_kernel_sizes{ 1, 1, 3 };
  int latent_dim = 1;
  //! 1.0 turns every activation into the identity.
  double leaky_slope = 0.01;
  //! 1 for LDF, 2 for LDF-A (label and aux label).
  int estimator_outputs = 1;

  void validate() const
  {
    if (conv_kernel_sizes != std::array<int, 3>{ 1, 1, 3 })
      throw DataError("arch: kernel sizes must be (1, 1, 3)");
    if (latent_dim != 1)
      throw DataError("arch: latent_dim must be 1");
    for (int c : conv_channels)
      if (c <= 0)
        throw DataError("arch: channel counts must be positive");
    if (estimator_outputs != 1 && estimator_outputs != 2)
      throw DataError("arch: estimator_outputs must be 1 or 2");
  }
};

//! Offsets of every parameter block inside the flat parameter vector.
struct Layout
{
  int rows = 0, cols = 0;
  std::array<int, 4> width{}; // input channels, then conv_channels
  std::array<std::size_t, 3> conv_w{}, conv_b{}, deconv_w{}, deconv_b{};
  std::size_t enc_w = 0, enc_b = 0, dec_w = 0, dec_b = 0, est_w = 0, est_b = 0, size = 0;
  int outputs = 1;

  Layout() = default;
  Layout(const ArchConfig& arch, int rows_, int cols_)
    : rows(rows_)
    , cols(cols_)
    , width{ cols_, arch.conv_channels[0], arch.conv_channels[1], arch.conv_channels[2] }
    , outputs(arch.estimator_outputs)
  {
    std::size_t off = 0;
    auto take = [&](std::size_t n) {
      const auto at = off;
      off += n;
      return at;
    };
    for (int l = 0; l < 3; ++l) {
      const auto ks = static_cast<std::size_t>(arch.conv_kernel_sizes[static_cast<std::size_t>(l)]);
      conv_w[static_cast<std::size_t>(l)] = take(ks * static_cast<std::size_t>(width[l] * width[l + 1]));
      conv_b[static_cast<std::size_t>(l)] = take(static_cast<std::size_t>(width[l + 1]));
    }
    const auto flat = static_cast<std::size_t>(rows * width[3]);
    enc_w = take(flat);
    enc_b = take(1);
    dec_w = take(flat);
    dec_b = take(flat);
    // deconv l maps width[3-l] -> width[2-l] with the kernel of encoder layer 2-l
    for (int l = 0; l < 3; ++l) {
      const auto ks = static_cast<std::size_t>(arch.conv_kernel_sizes[static_cast<std::size_t>(2 - l)]);
      deconv_w[static_cast<std::size_t>(l)] = take(ks * static_cast<std::size_t>(width[3 - l] * width[2 - l]));
      deconv_b[static_cast<std::size_t>(l)] = take(static_cast<std::size_t>(width[2 - l]));
    }
    est_w = take(static_cast<std::size_t>(outputs));
    est_b = take(static_cast<std::size_t>(outputs));
    size = off;
  }

  static int kernel(int encoder_layer) { return encoder_layer == 2 ? 3 : 1; }
};

struct AutoencoderModel
{
  ArchConfig arch;
  int rows = 0; // k + 1
  int cols = 0; // p + 1
  std::vector<double> params;

  Layout layout() const { return Layout(arch, rows, cols); }
  std::size_t n_params() const { return params.size(); }
};

//! Glorot-uniform weights, zero biases. Deterministic per seed.
inline AutoencoderModel init_model(const ArchConfig& arch, int k, int p, std::uint64_t seed)
{
  arch.validate();
  if (k <= 0 || p <= 0)
    throw DataError("init_model: k and p must be positive");
  AutoencoderModel m{ arch, k + 1, p + 1, {} };
  const Layout lay = m.layout();
  m.params.assign(lay.size, 0.0);
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t off, std::size_t n, double fan_in, double fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    for (std::size_t i = 0; i < n; ++i)
      m.params[off + i] = u(rng);
  };
  for (int l = 0; l < 3; ++l) {
    const auto i = static_cast<std::size_t>(l);
    const int ks = Layout::kernel(l);
    fill(lay.conv_w[i], static_cast<std::size_t>(ks * lay.width[l] * lay.width[l + 1]),
         ks * lay.width[l], ks * lay.width[l + 1]);
  }
  const double flat = lay.rows * lay.width[3];
  fill(lay.enc_w, static_cast<std::size_t>(flat), flat, 1.0);
  fill(lay.dec_w, static_cast<std::size_t>(flat), 1.0, flat);
  for (int l = 0; l < 3; ++l) {
    const auto i = static_cast<std::size_t>(l);
    const int ks = Layout::kernel(2 - l);
    fill(lay.deconv_w[i], static_cast<std::size_t>(ks * lay.width[3 - l] * lay.width[2 - l]),
         ks * lay.width[3 - l], ks * lay.width[2 - l]);
  }
  fill(lay.est_w, static_cast<std::size_t>(lay.outputs), 1.0, lay.outputs);
  return m;
}

//! All parameters zero; test hook.
inline AutoencoderModel zero_model(const ArchConfig& arch, int k, int p)
{
  AutoencoderModel m = init_model(arch, k, p, 0);
  std::fill(m.params.begin(), m.params.end(), 0.0);
  return m;
}

namespace detail {

//! R[t] = A[t + s], zero outside the valid range.
inline RowMat shifted(const RowMat& a, int s)
{
  if (s == 0)
    return a;
  RowMat r = RowMat::Zero(a.rows(), a.cols());
  const auto n = static_cast<int>(a.rows());
  for (int t = 0; t < n; ++t)
    if (t + s >= 0 && t + s < n)
      r.row(t) = a.row(t + s);
  return r;
}

inline RowMat conv_forward(const RowMat& in, const double* w, const double* b, int cin, int cout, int ks)
{
  const int pad = (ks - 1) / 2;
  RowMat out = RowMat::Zero(in.rows(), cout);
  for (int j = 0; j < ks; ++j) {
    ConstMap wj(w + static_cast<std::ptrdiff_t>(j) * cin * cout, cout, cin);
    out.noalias() += shifted(in, j - pad) * wj.transpose();
  }
  out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b, cout);
  return out;
}

inline RowMat conv_backward(const RowMat& in,
                            const RowMat& d_out,
                            const double* w,
                            double* dw,
                            double* db,
                            int cin,
                            int cout,
                            int ks)
{
  const int pad = (ks - 1) / 2;
  RowMat d_in = RowMat::Zero(in.rows(), cin);
  for (int j = 0; j < ks; ++j) {
    ConstMap wj(w + static_cast<std::ptrdiff_t>(j) * cin * cout, cout, cin);
    MutMap dwj(dw + static_cast<std::ptrdiff_t>(j) * cin * cout, cout, cin);
    dwj.noalias() += d_out.transpose() * shifted(in, j - pad);
    d_in += shifted(d_out * wj, pad - j);
  }
  Eigen::Map<Eigen::RowVectorXd>(db, cout) += d_out.colwise().sum();
  return d_in;
}

inline RowMat deconv_forward(const RowMat& in, const double* w, const double* b, int cin, int cout, int ks)
{
  const int pad = (ks - 1) / 2;
  RowMat out = RowMat::Zero(in.rows(), cout);
  for (int j = 0; j < ks; ++j) {
    ConstMap wj(w + static_cast<std::ptrdiff_t>(j) * cin * cout, cin, cout);
    out.noalias() += shifted(in, pad - j) * wj;
  }
  out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b, cout);
  return out;
}

inline RowMat deconv_backward(const RowMat& in,
                              const RowMat& d_out,
                              const double* w,
                              double* dw,
                              double* db,
                              int cin,
                              int cout,
                              int ks)
{
  const int pad = (ks - 1) / 2;
  RowMat d_in = RowMat::Zero(in.rows(), cin);
  for (int j = 0; j < ks; ++j) {
    ConstMap wj(w + static_cast<std::ptrdiff_t>(j) * cin * cout, cin, cout);
    MutMap dwj(dw + static_cast<std::ptrdiff_t>(j) * cin * cout, cin, cout);
    dwj.noalias() += shifted(in, pad - j).transpose() * d_out;
    d_in += shifted(d_out * wj.transpose(), j - pad);
  }
  Eigen::Map<Eigen::RowVectorXd>(db, cout) += d_out.colwise().sum();
  return d_in;
}

inline RowMat leaky(const RowMat& pre, double slope)
{
  return pre.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

inline RowMat leaky_grad(const RowMat& pre, const RowMat& d_post, double slope)
{
  return d_post.binaryExpr(pre, [slope](double d, double v) { return v > 0.0 ? d : slope * d; });
}

struct Cache
{
  RowMat x;
  std::array<RowMat, 3> enc_pre, enc_post;
  double latent = 0.0;
  RowMat dec_pre, dec_post;
  std::array<RowMat, 3> deconv_pre, deconv_post;
};

inline double encode_cached(const AutoencoderModel& m, const Layout& lay, const RowMat& x, Cache& c)
{
  const double* P = m.params.data();
  c.x = x;
  const RowMat* in = &c.x;
  for (int l = 0; l < 3; ++l) {
    const auto i = static_cast<std::size_t>(l);
    c.enc_pre[i] = conv_forward(*in, P + lay.conv_w[i], P + lay.conv_b[i], lay.width[l], lay.width[l + 1],
                                Layout::kernel(l));
    c.enc_post[i] = leaky(c.enc_pre[i], m.arch.leaky_slope);
    in = &c.enc_post[i];
  }
  const auto flat = static_cast<Eigen::Index>(lay.rows * lay.width[3]);
  Eigen::Map<const Eigen::VectorXd> h(c.enc_post[2].data(), flat);
  c.latent = Eigen::Map<const Eigen::VectorXd>(P + lay.enc_w, flat).dot(h) + P[lay.enc_b];
  return c.latent;
}

inline RowMat decode_cached(const AutoencoderModel& m, const Layout& lay, double latent, Cache& c)
{
  const double* P = m.params.data();
  c.latent = latent;
  c.dec_pre = RowMat(lay.rows, lay.width[3]);
  const auto flat = static_cast<Eigen::Index>(lay.rows * lay.width[3]);
  Eigen::Map<Eigen::VectorXd>(c.dec_pre.data(), flat) =
    Eigen::Map<const Eigen::VectorXd>(P + lay.dec_w, flat) * latent +
    Eigen::Map<const Eigen::VectorXd>(P + lay.dec_b, flat);
  c.dec_post = leaky(c.dec_pre, m.arch.leaky_slope);
  const RowMat* in = &c.dec_post;
  for (int l = 0; l < 3; ++l) {
    const auto i = static_cast<std::size_t>(l);
    c.deconv_pre[i] = deconv_forward(*in, P + lay.deconv_w[i], P + lay.deconv_b[i], lay.width[3 - l],
                                     lay.width[2 - l], Layout::kernel(2 - l));
    // reconstruction layer is linear
    c.deconv_post[i] = l == 2 ? c.deconv_pre[i] : leaky(c.deconv_pre[i], m.arch.leaky_slope);
    in = &c.deconv_post[i];
  }
  return c.deconv_post[2];
}

//! Accumulates encoder gradients for dL/dlatent = d_latent.
inline void encoder_backward(const AutoencoderModel& m, const Layout& lay, const Cache& c, double d_latent,
                             std::vector<double>& g)
{
  const double* P = m.params.data();
  double* G = g.data();
  const auto flat = static_cast<Eigen::Index>(lay.rows * lay.width[3]);
  Eigen::Map<const Eigen::VectorXd> h(c.enc_post[2].data(), flat);
  Eigen::Map<Eigen::VectorXd>(G + lay.enc_w, flat) += d_latent * h;
  G[lay.enc_b] += d_latent;
  RowMat d_post(lay.rows, lay.width[3]);
  Eigen::Map<Eigen::VectorXd>(d_post.data(), flat) = d_latent * Eigen::Map<const Eigen::VectorXd>(P + lay.enc_w, flat);
  for (int l = 2; l >= 0; --l) {
    const auto i = static_cast<std::size_t>(l);
    const RowMat d_pre = leaky_grad(c.enc_pre[i], d_post, m.arch.leaky_slope);
    const RowMat& in = l == 0 ? c.x : c.enc_post[i - 1];
    d_post = conv_backward(in, d_pre, P + lay.conv_w[i], G + lay.conv_w[i], G + lay.conv_b[i], lay.width[l],
                           lay.width[l + 1], Layout::kernel(l));
  }
}

//! Accumulates decoder gradients; returns dL/dlatent.
inline double decoder_backward(const AutoencoderModel& m, const Layout& lay, const Cache& c, const RowMat& d_out,
                               std::vector<double>& g)
{
  const double* P = m.params.data();
  double* G = g.data();
  RowMat d_post = d_out;
  for (int l = 2; l >= 0; --l) {
    const auto i = static_cast<std::size_t>(l);
    const RowMat d_pre = l == 2 ? d_post : leaky_grad(c.deconv_pre[i], d_post, m.arch.leaky_slope);
    const RowMat& in = l == 0 ? c.dec_post : c.deconv_post[i - 1];
    d_post = deconv_backward(in, d_pre, P + lay.deconv_w[i], G + lay.deconv_w[i], G + lay.deconv_b[i],
                             lay.width[3 - l], lay.width[2 - l], Layout::kernel(2 - l));
  }
  const RowMat d_pre = leaky_grad(c.dec_pre, d_post, m.arch.leaky_slope);
  const auto flat = static_cast<Eigen::Index>(lay.rows * lay.width[3]);
  Eigen::Map<const Eigen::VectorXd> dp(d_pre.data(), flat);
  Eigen::Map<Eigen::VectorXd>(G + lay.dec_w, flat) += c.latent * dp;
  Eigen::Map<Eigen::VectorXd>(G + lay.dec_b, flat) += dp;
  return Eigen::Map<const Eigen::VectorXd>(P + lay.dec_w, flat).dot(dp);
}

inline void check_input(const AutoencoderModel& m, const Matrix& tensor)
{
  if (tensor.rows() != m.rows || tensor.cols() != m.cols)
    throw DataError("autoencoder: input is " + std::to_string(tensor.rows()) + "x" + std::to_string(tensor.cols()) +
                    ", model expects " + std::to_string(m.rows) + "x" + std::to_string(m.cols));
}

inline std::vector<double> targets_of(const AutoencoderModel& m, const LdfInput& in)
{
  std::vector<double> t{ in.target_label };
  if (m.arch.estimator_outputs == 2) {
    if (!in.aux_label)
      throw DataError("autoencoder: two-output estimator needs an aux label on every input");
    t.push_back(*in.aux_label);
  }
  return t;
}

} // namespace detail

inline double encode(const AutoencoderModel& m, const Matrix& tensor)
{
  detail::check_input(m, tensor);
  detail::Cache c;
  return detail::encode_cached(m, m.layout(), tensor, c);
}

inline double encode(const AutoencoderModel& m, const LdfInput& in)
{
  return encode(m, in.tensor);
}

inline Matrix decode(const AutoencoderModel& m, double latent)
{
  detail::Cache c;
  return detail::decode_cached(m, m.layout(), latent, c);
}

inline Vector estimate(const AutoencoderModel& m, double latent)
{
  const Layout lay = m.layout();
  Vector out(lay.outputs);
  for (int i = 0; i < lay.outputs; ++i)
    out(i) = m.params[lay.est_w + static_cast<std::size_t>(i)] * latent + m.params[lay.est_b + static_cast<std::size_t>(i)];
  return out;
}

enum class Stage
{
  reconstruction,
  estimation
};

inline const char* to_string(Stage s)
{
  return s == Stage::reconstruction ? "reconstruction" : "estimation";
}

//! Loss of one sample for a stage; gradients are accumulated into `g` (scaled by `scale`) when non-null.
inline double sample_loss(const AutoencoderModel& m,
                          const Layout& lay,
                          const LdfInput& in,
                          Stage stage,
                          std::vector<double>* g = nullptr,
                          double scale = 1.0)
{
  detail::Cache c;
  const double z = detail::encode_cached(m, lay, in.tensor, c);
  if (stage == Stage::reconstruction) {
    const RowMat out = detail::decode_cached(m, lay, z, c);
    const RowMat diff = out - RowMat(in.tensor);
    const double cells = static_cast<double>(diff.size());
    if (g) {
      const RowMat d_out = (2.0 * scale / cells) * diff;
      const double dz = detail::decoder_backward(m, lay, c, d_out, *g);
      detail::encoder_backward(m, lay, c, dz, *g);
    }
    return diff.squaredNorm() / cells;
  }
  const auto t = detail::targets_of(m, in);
  const auto E = static_cast<double>(t.size());
  double loss = 0.0, dz = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double w = m.params[lay.est_w + i];
    const double r = w * z + m.params[lay.est_b + i] - t[i];
    loss += r * r / E;
    if (g) {
      const double dr = 2.0 * scale * r / E;
      (*g)[lay.est_w + i] += dr * z;
      (*g)[lay.est_b + i] += dr;
      dz += dr * w;
    }
  }
  if (g)
    detail::encoder_backward(m, lay, c, dz, *g);
  return loss;
}

//! Adam with per-parameter first and second moment estimates.
struct Adam
{
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m, v;
  long step_count = 0;

  void step(std::vector<double>& params, const std::vector<double>& grad)
  {
    if (m.empty()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    ++step_count;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

struct TrainConfig
{
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  //! Stage of epoch e is schedule[e % size]: 'R' reconstruction, 'E' estimation.
  std::string schedule = "RE";

  void validate() const
  {
    if (epochs < 0 || batch_size <= 0 || learning_rate < 0.0)
      throw DataError("train config: invalid epochs, batch size or learning rate");
    if (schedule.empty() || schedule.find_first_not_of("RE") != std::string::npos)
      throw DataError("train config: schedule must be a non-empty string over {R, E}");
  }

  Stage stage_of(int epoch) const
  {
    return schedule[static_cast<std::size_t>(epoch) % schedule.size()] == 'R' ? Stage::reconstruction
                                                                            : Stage::estimation;
  }
};

struct EpochLoss
{
  Stage stage;
  double loss;
};

struct TrainResult
{
  AutoencoderModel model;
  std::vector<EpochLoss> history;
};

inline constexpr double kDivergenceFactor = 1e6;

//! Alternating-stage training with Adam on seeded minibatches. The loss of an
//! epoch is the mean of its minibatch losses.
inline TrainResult train(AutoencoderModel model, const std::vector<LdfInput>& inputs, const TrainConfig& cfg)
{
  cfg.validate();
  if (inputs.empty())
    throw DataError("train: no inputs");
  if (cfg.epochs < 2 && cfg.schedule.find('R') != std::string::npos && cfg.schedule.find('E') != std::string::npos)
    throw DataError("train: need at least 2 epochs so both stages run");
  for (const auto& in : inputs)
    detail::check_input(model, in.tensor);

  const Layout lay = model.layout();
  Adam opt;
  opt.learning_rate = cfg.learning_rate;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(lay.size);
  std::array<double, 2> first_loss{ -1.0, -1.0 };

  TrainResult res;
  for (int e = 0; e < cfg.epochs; ++e) {
    const Stage stage = cfg.stage_of(e);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b)
        batch_loss += sample_loss(model, lay, inputs[order[b]], stage, &grad, scale);
      batch_loss *= scale;
      if (!std::isfinite(batch_loss))
        throw DivergenceError("autoencoder training: non-finite loss in epoch " + std::to_string(e));
      opt.step(model.params, grad);
      total += batch_loss;
      ++batches;
    }
    const double loss = total / batches;
    auto& first = first_loss[stage == Stage::reconstruction ? 0 : 1];
    if (first < 0.0)
      first = loss;
    if (!std::isfinite(loss) || loss > kDivergenceFactor * std::max(first, 1e-12))
      throw DivergenceError("autoencoder training diverged in epoch " + std::to_string(e) + " (" +
                            to_string(stage) + " loss " + std::to_string(loss) + ")");
    res.history.push_back({ stage, loss });
  }
  res.model = std::move(model);
  return res;
}

namespace detail {

//! Plain forward pass in extended precision, used as the finite-difference
//! reference. Returns both stage losses and the sign of every rectifier input.
struct ReferencePass
{
  long double reconstruction = 0.0L;
  long double estimation = 0.0L;
  std::vector<bool> signs;
};

inline ReferencePass reference_pass(const AutoencoderModel& m, const Layout& lay, const LdfInput& in)
{
  using T = long double;
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::vector<T> P(m.params.begin(), m.params.end());
  const T slope = static_cast<T>(m.arch.leaky_slope);
  ReferencePass out;

  // conv: out[t] += W_j in[t + j - pad]; transposed conv: out[t] += in[t + pad - j] W_j
  auto layer = [&](const Mat& x, std::size_t w_off, std::size_t b_off, int cin, int cout, int ks, bool transposed,
                   bool rectify) {
    const int pad = (ks - 1) / 2;
    const auto n = static_cast<int>(x.rows());
    Mat y(n, cout);
    for (int t = 0; t < n; ++t)
      for (int o = 0; o < cout; ++o) {
        T s = P[b_off + static_cast<std::size_t>(o)];
        for (int j = 0; j < ks; ++j) {
          const int src = transposed ? t + pad - j : t + j - pad;
          if (src < 0 || src >= n)
            continue;
          for (int c = 0; c < cin; ++c) {
            const auto idx = static_cast<std::size_t>(j * cin * cout + (transposed ? c + o * cin : o + c * cout));
            s += P[w_off + idx] * x(src, c);
          }
        }
        if (rectify) {
          out.signs.push_back(s > 0);
          s = s > 0 ? s : slope * s;
        }
        y(t, o) = s;
      }
    return y;
  };

  Mat h = in.tensor.cast<T>();
  for (int l = 0; l < 3; ++l) {
    const auto i = static_cast<std::size_t>(l);
    h = layer(h, lay.conv_w[i], lay.conv_b[i], lay.width[l], lay.width[l + 1], Layout::kernel(l), false, true);
  }
  const auto flat = static_cast<std::size_t>(lay.rows * lay.width[3]);
  T z = P[lay.enc_b];
  for (std::size_t i = 0; i < flat; ++i)
    z += P[lay.enc_w + i] * h.data()[i];

  Mat d(lay.rows, lay.width[3]);
  for (std::size_t i = 0; i < flat; ++i) {
    T s = P[lay.dec_w + i] * z + P[lay.dec_b + i];
    out.signs.push_back(s > 0);
    d.data()[i] = s > 0 ? s : slope * s;
  }
  for (int l = 0; l < 3; ++l) {
    const auto i = static_cast<std::size_t>(l);
    d = layer(d, lay.deconv_w[i], lay.deconv_b[i], lay.width[3 - l], lay.width[2 - l], Layout::kernel(2 - l), true,
              l < 2);
  }
  out.reconstruction = (d - in.tensor.cast<T>()).array().square().sum() / static_cast<T>(d.size());

  const auto t = targets_of(m, in);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const T r = P[lay.est_w + i] * z + P[lay.est_b + i] - static_cast<T>(t[i]);
    out.estimation += r * r / static_cast<T>(t.size());
  }
  return out;
}

} // namespace detail

struct GradientCheckReport
{
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  //! Parameters whose +-h stencil moved a rectifier input across zero; the
  //! loss is not differentiable there and the comparison is skipped.
  std::size_t skipped_at_kinks = 0;
};

//! Compares backpropagation against central differences with step h for every
//! parameter and both stages. The error of one comparison is
//! |g_a - g_n| / max(|g_a|, |g_n|, 1e-8). The difference quotients are taken
//! from an extended-precision forward pass so that cancellation in the loss
//! does not swamp small gradients.
inline GradientCheckReport gradient_check_report(const AutoencoderModel& model, const LdfInput& input, double h = 1e-4)
{
  detail::check_input(model, input.tensor);
  const Layout lay = model.layout();
  GradientCheckReport rep;
  std::array<std::vector<double>, 2> g;
  for (Stage stage : { Stage::reconstruction, Stage::estimation }) {
    auto& gs = g[stage == Stage::reconstruction ? 0 : 1];
    gs.assign(lay.size, 0.0);
    sample_loss(model, lay, input, stage, &gs);
  }
  AutoencoderModel probe = model;
  for (std::size_t i = 0; i < lay.size; ++i) {
    const double orig = probe.params[i];
    probe.params[i] = orig + h;
    const auto up = detail::reference_pass(probe, lay, input);
    probe.params[i] = orig - h;
    const auto down = detail::reference_pass(probe, lay, input);
    probe.params[i] = orig;
    const long double step = static_cast<long double>(orig + h) - static_cast<long double>(orig - h);
    if (model.arch.leaky_slope != 1.0 && up.signs != down.signs) {
      ++rep.skipped_at_kinks;
      continue;
    }
    ++rep.checked;
    for (auto [analytic, numeric] :
         { std::pair{ g[0][i], static_cast<double>((up.reconstruction - down.reconstruction) / step) },
           std::pair{ g[1][i], static_cast<double>((up.estimation - down.estimation) / step) } }) {
      const double rel =
        std::abs(analytic - numeric) / std::max({ std::abs(analytic), std::abs(numeric), 1e-8 });
      rep.max_relative_error = std::max(rep.max_relative_error, rel);
    }
  }
  return rep;
}

inline double gradient_check(const AutoencoderModel& model, const LdfInput& input, double h = 1e-4)
{
  return gradient_check_report(model, input, h).max_relative_error;
}

//! Appends the encoded latent of every sample as a new feature column.
inline Dataset impute_ldf(const AutoencoderModel& model,
                          const Dataset& dataset,
                          const std::vector<NeighborhoodCloud>& clouds,
                          const Pool& pool,
                          const std::string& column = "ldf")
{
  if (clouds.size() != dataset.size())
    throw DataError("impute_ldf: " + std::to_string(clouds.size()) + " clouds for " +
                    std::to_string(dataset.size()) + " samples");
  const auto inputs = assemble_inputs(dataset, clouds, pool);
  Vector ldf(static_cast<Eigen::Index>(dataset.size()));
  for (std::size_t i = 0; i < inputs.size(); ++i)
    ldf(static_cast<Eigen::Index>(clouds[i].objective_index)) = encode(model, inputs[i]);
  return dataset.with_column(column, ldf);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json to_json(const AutoencoderModel& m)
{
  return { { "format", "ldf-autoencoder" },
           { "version", 1 },
           { "arch",
             { { "conv_channels", m.arch.conv_channels },
               { "conv_kernel_sizes", m.arch.conv_kernel_sizes },
               { "latent_dim", m.arch.latent_dim },
               { "leaky_slope", m.arch.leaky_slope },
               { "estimator_outputs", m.arch.estimator_outputs } } },
           { "input_rows", m.rows },
           { "input_cols", m.cols },
           { "params", m.params } };
}

inline AutoencoderModel autoencoder_from_json(const nlohmann::json& j)
{
  if (j.value("format", "") != "ldf-autoencoder" || j.value("version", 0) != 1)
    throw DataError("checkpoint: not an ldf-autoencoder v1 document");
  AutoencoderModel m;
  const auto& a = j.at("arch");
  a.at("conv_channels").get_to(m.arch.conv_channels);
  a.at("conv_kernel_sizes").get_to(m.arch.conv_kernel_sizes);
  a.at("latent_dim").get_to(m.arch.latent_dim);
  a.at("leaky_slope").get_to(m.arch.leaky_slope);
  a.at("estimator_outputs").get_to(m.arch.estimator_outputs);
  m.arch.validate();
  j.at("input_rows").get_to(m.rows);
  j.at("input_cols").get_to(m.cols);
  j.at("params").get_to(m.params);
  if (m.params.size() != m.layout().size)
    throw DataError("checkpoint: parameter count does not match architecture");
  return m;
}

// ---------------------------------------------------------------------------
// Fully connected transfer baseline: 3 x 128 rectifier layers + linear output.

inline constexpr int kFnnWidth = 128;

struct FnnModel
{
  int n_inputs = 0;
  std::vector<double> params;
};

namespace detail {

struct FnnLayout
{
  std::array<std::size_t, 4> w{}, b{};
  std::array<int, 5> width{};
  std::size_t size = 0;

  explicit FnnLayout(int p)
    : width{ p, kFnnWidth, kFnnWidth, kFnnWidth, 1 }
  {
    std::size_t off = 0;
    for (std::size_t l = 0; l < 4; ++l) {
      w[l] = off;
      off += static_cast<std::size_t>(width[l] * width[l + 1]);
      b[l] = off;
      off += static_cast<std::size_t>(width[l + 1]);
    }
    size = off;
  }
};

} // namespace detail

inline FnnModel init_fnn(int n_inputs, std::uint64_t seed)
{
  if (n_inputs <= 0)
    throw DataError("init_fnn: need at least one input");
  const detail::FnnLayout lay(n_inputs);
  FnnModel m{ n_inputs, std::vector<double>(lay.size, 0.0) };
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < 4; ++l) {
    const double a = std::sqrt(6.0 / (lay.width[l] + lay.width[l + 1]));
    std::uniform_real_distribution<double> u(-a, a);
    for (int i = 0; i < lay.width[l] * lay.width[l + 1]; ++i)
      m.params[lay.w[l] + static_cast<std::size_t>(i)] = u(rng);
  }
  return m;
}

namespace detail {

// Activations are stored column-per-sample: width x batch.
inline std::array<Matrix, 5> fnn_forward(const FnnModel& m, const FnnLayout& lay, const Matrix& x_t)
{
  std::array<Matrix, 5> act;
  act[0] = x_t;
  for (std::size_t l = 0; l < 4; ++l) {
    ConstMap w(m.params.data() + lay.w[l], lay.width[l + 1], lay.width[l]);
    Eigen::Map<const Vector> b(m.params.data() + lay.b[l], lay.width[l + 1]);
    act[l + 1] = (w * act[l]).colwise() + b;
    if (l < 3)
      act[l + 1] = act[l + 1].cwiseMax(0.0);
  }
  return act;
}

} // namespace detail

inline Vector predict_fnn(const FnnModel& m, const Matrix& X)
{
  if (X.cols() != m.n_inputs)
    throw DataError("predict_fnn: expected " + std::to_string(m.n_inputs) + " features");
  const detail::FnnLayout lay(m.n_inputs);
  return detail::fnn_forward(m, lay, X.transpose())[4].row(0).transpose();
}

struct FnnTrainResult
{
  FnnModel model;
  std::vector<double> history;
};

//! Minimizes the mean over each minibatch of w_i * (yhat_i - y_i)^2. An empty
//! weight vector means uniform weights.
inline FnnTrainResult train_fnn(const Matrix& X, const Vector& y, const Vector& weights, const TrainConfig& cfg)
{
  cfg.validate();
  if (X.rows() == 0 || X.rows() != y.size())
    throw DataError("train_fnn: empty data or label length mismatch");
  const Vector w = weights.size() == 0 ? Vector(Vector::Ones(y.size())) : weights;
  if (w.size() != y.size())
    throw DataError("train_fnn: weight length mismatch");

  FnnTrainResult res{ init_fnn(static_cast<int>(X.cols()), cfg.seed), {} };
  const detail::FnnLayout lay(res.model.n_inputs);
  Adam opt;
  opt.learning_rate = cfg.learning_rate;
  std::mt19937_64 rng(cfg.seed + 1);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(lay.size);
  double first = -1.0;

  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto nb = static_cast<Eigen::Index>(end - start);
      Matrix xb(X.cols(), nb);
      Vector yb(nb), wb(nb);
      for (Eigen::Index i = 0; i < nb; ++i) {
        const auto r = order[start + static_cast<std::size_t>(i)];
        xb.col(i) = X.row(r).transpose();
        yb(i) = y(r);
        wb(i) = w(r);
      }
      const auto act = detail::fnn_forward(res.model, lay, xb);
      const Vector resid = act[4].row(0).transpose() - yb;
      const double loss = (wb.array() * resid.array().square()).sum() / static_cast<double>(nb);
      if (!std::isfinite(loss))
        throw DivergenceError("fnn training: non-finite loss in epoch " + std::to_string(e));
      std::fill(grad.begin(), grad.end(), 0.0);
      Matrix delta = (2.0 / static_cast<double>(nb) * wb.array() * resid.array()).matrix().transpose();
      for (int l = 3; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        MutMap(grad.data() + lay.w[li], lay.width[li + 1], lay.width[li]) = delta * act[li].transpose();
        Eigen::Map<Vector>(grad.data() + lay.b[li], lay.width[li + 1]) = delta.rowwise().sum();
        if (l > 0) {
          ConstMap wl(res.model.params.data() + lay.w[li], lay.width[li + 1], lay.width[li]);
          delta = (wl.transpose() * delta).cwiseProduct((act[li].array() > 0.0).cast<double>().matrix());
        }
      }
      opt.step(res.model.params, grad);
      total += loss;
      ++batches;
    }
    const double loss = total / batches;
    if (first < 0.0)
      first = loss;
    if (loss > kDivergenceFactor * std::max(first, 1e-12))
      throw DivergenceError("fnn training diverged in epoch " + std::to_string(e));
    res.history.push_back(loss);
  }
  return res;
}

} // namespace ldf::ae
