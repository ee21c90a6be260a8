#pragma once

// Dense-network numerics for the multi-stream denoiser: layers, layer norm,
// sinusoidal noise embedding, hand-written reverse-mode gradients and Adam.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdm/errors.hpp"
#include "cdm/rng.hpp"

namespace cdm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { identity, gelu };

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::identity;
  std::string name;

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }
};

struct LayerNormParams {
  Vector gain;
  Vector offset;
  double epsilon = 1e-5;
};

struct NetworkParams {
  std::vector<DenseLayer> encoder_y;  // empty for the regressor backbone
  std::vector<DenseLayer> encoder_x;
  std::optional<std::vector<DenseLayer>> noise_mlp;
  int embed_dim = 0;
  LayerNormParams decoder_norm;
  std::vector<DenseLayer> decoder_layers;
  // Zeroes the noisy-state stream output in the fusion (ablation probe).
  bool y_stream_masked = false;

  bool time_dependent() const { return noise_mlp.has_value(); }
  bool has_y_stream() const { return !encoder_y.empty(); }
};

/// Layer widths of the encoder-decoder family. Defaults: Y path 58, X path 16,
/// noise branch 10, decoder 58.
struct Architecture {
  int dim_x = 3;
  int dim_y = 17;
  int width_y = 58;
  int width_x = 16;
  int width_noise = 10;
  int embed_dim = 10;
  int width_decoder = 58;
  bool y_stream = true;
  bool time_dependent = true;
  bool reconstruct_x = true;

  int output_dim() const { return dim_y + (reconstruct_x ? dim_x : 0); }
  int fusion_dim() const {
    return (y_stream ? width_y : 0) + width_x + (time_dependent ? width_noise : 0);
  }

  /// Scales every hidden width by a common factor (rounded, at least 1).
  Architecture scaled(double factor) const {
    Architecture a = *this;
    auto s = [factor](int w) { return std::max(1, static_cast<int>(std::lround(w * factor))); };
    a.width_y = s(width_y);
    a.width_x = s(width_x);
    a.width_noise = s(width_noise);
    a.width_decoder = s(width_decoder);
    return a;
  }
};

// ---------------------------------------------------------------------------
// Elementwise pieces

inline constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;

inline double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); }

inline double gelu_derivative(double v) {
  const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
  const double pdf = std::exp(-0.5 * v * v) * (std::numbers::inv_sqrtpi * kInvSqrt2);
  return cdf + v * pdf;
}

inline Vector gelu(const Vector& v) { return v.unaryExpr([](double e) { return gelu(e); }); }

inline Vector layer_norm(const Vector& v, const LayerNormParams& p) {
  const double mean = v.mean();
  const double var = (v.array() - mean).square().mean();
  const Vector normalized = (v.array() - mean) / std::sqrt(var + p.epsilon);
  return p.gain.cwiseProduct(normalized) + p.offset;
}

/// Transformer-style embedding: (sin(sigma w_i), cos(sigma w_i)) pairs with
/// w_i = 10000^(-2i/d).
inline Vector sinusoidal_embed(double sigma, int d) {
  if (d < 2 || d % 2 != 0) throw ConfigError("sinusoidal embedding width must be even and >= 2");
  Vector out(d);
  for (int i = 0; i < d / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / d);
    out[2 * i] = std::sin(sigma * freq);
    out[2 * i + 1] = std::cos(sigma * freq);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter bookkeeping

namespace detail {
template <class Params, class F>
void for_each_layer(Params& p, F&& f) {
  for (auto& l : p.encoder_y) f(l);
  for (auto& l : p.encoder_x) f(l);
  if (p.noise_mlp)
    for (auto& l : *p.noise_mlp) f(l);
  for (auto& l : p.decoder_layers) f(l);
}
}  // namespace detail

/// Flat views of every trainable tensor in a fixed order.
inline std::vector<std::span<double>> tensors(NetworkParams& p) {
  std::vector<std::span<double>> out;
  detail::for_each_layer(p, [&](DenseLayer& l) {
    out.emplace_back(l.weights.data(), static_cast<std::size_t>(l.weights.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  });
  out.emplace_back(p.decoder_norm.gain.data(), static_cast<std::size_t>(p.decoder_norm.gain.size()));
  out.emplace_back(p.decoder_norm.offset.data(),
                   static_cast<std::size_t>(p.decoder_norm.offset.size()));
  return out;
}

inline std::vector<std::span<const double>> tensors(const NetworkParams& p) {
  std::vector<std::span<const double>> out;
  for (auto s : tensors(const_cast<NetworkParams&>(p))) out.emplace_back(s.data(), s.size());
  return out;
}

inline std::size_t parameter_count(const NetworkParams& p) {
  std::size_t n = 0;
  for (auto s : tensors(p)) n += s.size();
  return n;
}

inline std::vector<double> flatten(const NetworkParams& p) {
  std::vector<double> out;
  out.reserve(parameter_count(p));
  for (auto s : tensors(p)) out.insert(out.end(), s.begin(), s.end());
  return out;
}

/// Same layout as `p`, all entries zero.
inline NetworkParams zeros_like(const NetworkParams& p) {
  NetworkParams z = p;
  for (auto s : tensors(z)) std::fill(s.begin(), s.end(), 0.0);
  return z;
}

inline bool all_finite(const NetworkParams& p) {
  for (auto s : tensors(p))
    for (double v : s)
      if (!std::isfinite(v)) return false;
  return true;
}

namespace detail {
inline DenseLayer make_layer(int in, int out, Activation act, std::string name, Rng& rng) {
  DenseLayer l;
  l.weights.resize(out, in);
  l.bias = Vector::Zero(out);
  l.activation = act;
  l.name = std::move(name);
  const double limit = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = dist(rng);
  return l;
}
}  // namespace detail

/// Glorot-uniform weights, zero biases, unit layer-norm gain.
inline NetworkParams init_network(const Architecture& a, Rng& rng) {
  using detail::make_layer;
  NetworkParams p;
  if (a.y_stream) {
    p.encoder_y.push_back(make_layer(a.dim_y, a.width_y, Activation::gelu, "encoder_y.0", rng));
    p.encoder_y.push_back(make_layer(a.width_y, a.width_y, Activation::gelu, "encoder_y.1", rng));
  }
  p.encoder_x.push_back(make_layer(a.dim_x, a.width_x, Activation::gelu, "encoder_x.0", rng));
  p.encoder_x.push_back(make_layer(a.width_x, a.width_x, Activation::gelu, "encoder_x.1", rng));
  if (a.time_dependent) {
    std::vector<DenseLayer> mlp;
    mlp.push_back(make_layer(a.embed_dim, a.width_noise, Activation::gelu, "noise_mlp.0", rng));
    mlp.push_back(
        make_layer(a.width_noise, a.width_noise, Activation::identity, "noise_mlp.1", rng));
    p.noise_mlp = std::move(mlp);
    p.embed_dim = a.embed_dim;
  }
  const int fusion = a.fusion_dim();
  p.decoder_norm.gain = Vector::Ones(fusion);
  p.decoder_norm.offset = Vector::Zero(fusion);
  p.decoder_layers.push_back(
      make_layer(fusion, a.width_decoder, Activation::gelu, "decoder.0", rng));
  p.decoder_layers.push_back(
      make_layer(a.width_decoder, a.output_dim(), Activation::identity, "decoder.head", rng));
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

/// A batch of network inputs; rows are samples. `y_noisy` is empty for the
/// regressor backbone, `sigma` empty for time-independent networks.
struct Batch {
  Matrix y_noisy;
  Matrix x;
  Vector sigma;

  Eigen::Index rows() const { return x.rows(); }
};

struct StreamCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  Matrix output;
};

struct ForwardCache {
  StreamCache y, x, noise, decoder;
  Matrix fused;
  Matrix normalized;  // layer-norm output before gain/offset
  Vector inv_std;     // per row
  Matrix output;
};

namespace detail {

inline Matrix apply_activation(const Matrix& pre, Activation act) {
  if (act == Activation::identity) return pre;
  return pre.unaryExpr([](double v) { return gelu(v); });
}

inline void run_stream(const std::vector<DenseLayer>& layers, const Matrix& in, StreamCache& c) {
  c.inputs.clear();
  c.pre.clear();
  Matrix cur = in;
  for (const auto& l : layers) {
    if (cur.cols() != l.in_dim())
      throw ShapeError(l.name, "expected input width " + std::to_string(l.in_dim()) + ", got " +
                                   std::to_string(cur.cols()));
    Matrix pre = cur * l.weights.transpose();
    pre.rowwise() += l.bias.transpose();
    c.inputs.push_back(std::move(cur));
    cur = apply_activation(pre, l.activation);
    c.pre.push_back(std::move(pre));
  }
  c.output = std::move(cur);
}

// Propagates d(output) back through the stream, accumulating into grads.
// Returns d(input) when requested.
inline Matrix backprop_stream(const std::vector<DenseLayer>& layers, const StreamCache& c,
                              Matrix d_out, std::vector<DenseLayer>& grads, bool need_input_grad) {
  for (std::size_t i = layers.size(); i-- > 0;) {
    const DenseLayer& l = layers[i];
    Matrix d_pre = std::move(d_out);
    if (l.activation == Activation::gelu)
      d_pre.array() *= c.pre[i].unaryExpr([](double v) { return gelu_derivative(v); }).array();
    grads[i].weights.noalias() += d_pre.transpose() * c.inputs[i];
    grads[i].bias.noalias() += d_pre.colwise().sum().transpose();
    if (i > 0 || need_input_grad) d_out = d_pre * l.weights;
  }
  return need_input_grad ? d_out : Matrix();
}

}  // namespace detail

inline ForwardCache forward_cached(const NetworkParams& p, const Batch& b) {
  const Eigen::Index n = b.rows();
  if (p.time_dependent() != (b.sigma.size() > 0))
    throw VariantMismatch(p.time_dependent() ? "time-dependent network requires sigma"
                                             : "time-independent network takes no sigma");
  if (b.sigma.size() > 0 && b.sigma.size() != n) throw ShapeError("noise_mlp", "sigma count");
  if (p.has_y_stream() && b.y_noisy.rows() != n) throw ShapeError("encoder_y.0", "row count");

  ForwardCache c;
  int fusion_w = 0;
  if (p.has_y_stream()) {
    detail::run_stream(p.encoder_y, b.y_noisy, c.y);
    if (p.y_stream_masked) c.y.output.setZero();
    fusion_w += static_cast<int>(c.y.output.cols());
  }
  detail::run_stream(p.encoder_x, b.x, c.x);
  fusion_w += static_cast<int>(c.x.output.cols());
  if (p.noise_mlp) {
    Matrix emb(n, p.embed_dim);
    for (Eigen::Index r = 0; r < n; ++r) emb.row(r) = sinusoidal_embed(b.sigma[r], p.embed_dim);
    detail::run_stream(*p.noise_mlp, emb, c.noise);
    fusion_w += static_cast<int>(c.noise.output.cols());
  }
  if (fusion_w != p.decoder_norm.gain.size())
    throw ShapeError("decoder_norm", "fusion width " + std::to_string(fusion_w) +
                                         " != normalized width " +
                                         std::to_string(p.decoder_norm.gain.size()));

  c.fused.resize(n, fusion_w);
  Eigen::Index col = 0;
  auto place = [&](const Matrix& m) {
    c.fused.middleCols(col, m.cols()) = m;
    col += m.cols();
  };
  if (p.has_y_stream()) place(c.y.output);
  place(c.x.output);
  if (p.noise_mlp) place(c.noise.output);

  c.normalized.resize(n, fusion_w);
  c.inv_std.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = c.fused.row(r).mean();
    const double var = (c.fused.row(r).array() - mean).square().mean();
    c.inv_std[r] = 1.0 / std::sqrt(var + p.decoder_norm.epsilon);
    c.normalized.row(r) = (c.fused.row(r).array() - mean) * c.inv_std[r];
  }
  Matrix dec_in = c.normalized;
  dec_in.array().rowwise() *= p.decoder_norm.gain.transpose().array();
  dec_in.rowwise() += p.decoder_norm.offset.transpose();

  detail::run_stream(p.decoder_layers, dec_in, c.decoder);
  c.output = c.decoder.output;
  return c;
}

inline Matrix forward_batch(const NetworkParams& p, const Batch& b) {
  return forward_cached(p, b).output;
}

/// Single-sample forward pass; evaluated as a one-row batch.
inline Vector forward(const NetworkParams& p, const Vector& y_noisy, const Vector& x,
                      std::optional<double> sigma) {
  Batch b;
  if (p.has_y_stream()) b.y_noisy = y_noisy.transpose();
  b.x = x.transpose();
  if (sigma) b.sigma = Vector::Constant(1, *sigma);
  return forward_batch(p, b).row(0).transpose();
}

/// Reverse pass given d(loss)/d(output).
inline NetworkParams backward(const NetworkParams& p, const ForwardCache& c, const Matrix& d_out) {
  NetworkParams g = zeros_like(p);
  Matrix d_dec_in = detail::backprop_stream(p.decoder_layers, c.decoder, d_out, g.decoder_layers,
                                            /*need_input_grad=*/true);

  const Eigen::Index n = d_dec_in.rows();
  const Eigen::Index w = d_dec_in.cols();
  g.decoder_norm.gain = (d_dec_in.array() * c.normalized.array()).colwise().sum().transpose();
  g.decoder_norm.offset = d_dec_in.colwise().sum().transpose();

  Matrix d_fused(n, w);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::ArrayXd d_hat =
        d_dec_in.row(r).transpose().array() * p.decoder_norm.gain.array();
    const Eigen::ArrayXd xhat = c.normalized.row(r).transpose().array();
    const double m1 = d_hat.mean();
    const double m2 = (d_hat * xhat).mean();
    d_fused.row(r) = (c.inv_std[r] * (d_hat - m1 - xhat * m2)).transpose();
  }

  Eigen::Index col = 0;
  if (p.has_y_stream()) {
    const Eigen::Index wy = c.y.output.cols();
    if (!p.y_stream_masked)
      detail::backprop_stream(p.encoder_y, c.y, d_fused.middleCols(col, wy), g.encoder_y, false);
    col += wy;
  }
  const Eigen::Index wx = c.x.output.cols();
  detail::backprop_stream(p.encoder_x, c.x, d_fused.middleCols(col, wx), g.encoder_x, false);
  col += wx;
  if (p.noise_mlp) {
    const Eigen::Index wn = c.noise.output.cols();
    detail::backprop_stream(*p.noise_mlp, c.noise, d_fused.middleCols(col, wn), *g.noise_mlp,
                            false);
  }
  return g;
}

struct LossAndGrad {
  double loss = 0.0;
  NetworkParams grad;
};

/// Mean over the batch of squared L2 distances between output and target.
inline LossAndGrad loss_and_grad(const NetworkParams& p, const Batch& b, const Matrix& target,
                                 std::size_t batch_index = 0) {
  if (b.rows() == 0) throw ConfigError("empty batch");
  const ForwardCache c = forward_cached(p, b);
  if (target.rows() != c.output.rows() || target.cols() != c.output.cols())
    throw ShapeError("decoder.head", "target shape does not match output");
  const Matrix resid = c.output - target;
  const double inv_n = 1.0 / static_cast<double>(b.rows());
  const double loss = resid.squaredNorm() * inv_n;
  if (!std::isfinite(loss)) throw DivergedTraining(batch_index, "loss is not finite");
  return {loss, backward(p, c, (2.0 * inv_n) * resid)};
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  NetworkParams first_moment;
  NetworkParams second_moment;
  long step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const NetworkParams& p, double lr = 1e-3) {
    AdamState s;
    s.first_moment = zeros_like(p);
    s.second_moment = zeros_like(p);
    s.lr = lr;
    return s;
  }
};

inline void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& st) {
  auto p = tensors(params);
  auto g = tensors(grads);
  auto m = tensors(st.first_moment);
  auto v = tensors(st.second_moment);
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
    throw ShapeError("adam", "parameter/gradient layout mismatch");
  ++st.step_count;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (p[t].size() != g[t].size()) throw ShapeError("adam", "tensor size mismatch");
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      const double gi = g[t][i];
      m[t][i] = st.beta1 * m[t][i] + (1.0 - st.beta1) * gi;
      v[t][i] = st.beta2 * v[t][i] + (1.0 - st.beta2) * gi * gi;
      const double m_hat = m[t][i] / bc1;
      const double v_hat = v[t][i] / bc2;
      p[t][i] -= st.lr * m_hat / (std::sqrt(v_hat) + st.eps);
    }
  }
}

}  // namespace cdm
