#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "cdm/netcore.hpp"

using namespace cdm;

namespace {

// Reference GELU through the normal CDF written as a series-free erfc.
double gelu_ref(double v) { return v * 0.5 * std::erfc(-v / std::sqrt(2.0)); }

Batch random_batch(const NetworkParams& p, const Architecture& a, int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Batch b;
  if (p.has_y_stream()) b.y_noisy = Matrix::NullaryExpr(n, a.dim_y, [&] { return normal(rng); });
  b.x = Matrix::NullaryExpr(n, a.dim_x, [&] { return normal(rng); });
  if (p.time_dependent()) b.sigma = Vector::NullaryExpr(n, [&] { return std::abs(normal(rng)) + 0.05; });
  return b;
}

double loss_of(const NetworkParams& p, const Batch& b, const Matrix& target) {
  const Matrix out = forward_batch(p, b);
  return (out - target).squaredNorm() / static_cast<double>(b.rows());
}

// Central differences on randomly chosen coordinates.
void check_gradients(const Architecture& a, std::uint64_t seed, int probes) {
  Rng rng(seed);
  NetworkParams p = init_network(a, rng);
  // Non-trivial layer-norm parameters so their gradients are exercised.
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (Eigen::Index i = 0; i < p.decoder_norm.gain.size(); ++i) {
    p.decoder_norm.gain[i] = u(rng);
    p.decoder_norm.offset[i] = u(rng) - 1.0;
  }
  const Batch b = random_batch(p, a, 5, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Matrix target = Matrix::NullaryExpr(5, a.output_dim(), [&] { return normal(rng); });
  const LossAndGrad lg = loss_and_grad(p, b, target);

  auto params = tensors(p);
  const auto grads = tensors(lg.grad);
  std::uniform_int_distribution<std::size_t> pick_t(0, params.size() - 1);
  int checked = 0;
  double worst = 0.0;
  while (checked < probes) {
    const std::size_t t = pick_t(rng);
    std::uniform_int_distribution<std::size_t> pick_i(0, params[t].size() - 1);
    const std::size_t i = pick_i(rng);
    const double saved = params[t][i];
    const double h = 1e-6;
    params[t][i] = saved + h;
    const double up = loss_of(p, b, target);
    params[t][i] = saved - h;
    const double down = loss_of(p, b, target);
    params[t][i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double analytic = grads[t][i];
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic) / scale);
    ++checked;
  }
  EXPECT_LT(worst, 1e-4);
}

Architecture small(bool y_stream, bool td) {
  Architecture a;
  a.dim_x = 2;
  a.dim_y = 3;
  a.width_y = 6;
  a.width_x = 4;
  a.width_noise = 4;
  a.embed_dim = 4;
  a.width_decoder = 5;
  a.y_stream = y_stream;
  a.time_dependent = td;
  a.reconstruct_x = y_stream;
  return a;
}

}  // namespace

TEST(Gelu, MatchesNormalCdfForm) {
  EXPECT_NEAR(gelu(1.0), 0.8413447460685429, 1e-15);
  for (double v : {-4.0, -1.3, -0.2, 0.0, 0.7, 2.5, 6.0}) EXPECT_NEAR(gelu(v), gelu_ref(v), 1e-14);
}

TEST(Gelu, DerivativeMatchesDifferences) {
  for (double v : {-3.0, -0.5, 0.0, 0.4, 1.7}) {
    const double h = 1e-6;
    EXPECT_NEAR(gelu_derivative(v), (gelu(v + h) - gelu(v - h)) / (2 * h), 1e-8);
  }
}

TEST(LayerNorm, NormalizesThenAppliesGainAndOffset) {
  Vector v(4);
  v << 1, 2, 3, 4;
  LayerNormParams p{Vector::Ones(4), Vector::Zero(4), 1e-5};
  const Vector out = layer_norm(v, p);
  EXPECT_NEAR(out.mean(), 0.0, 1e-12);
  // variance 1.25 before normalization
  EXPECT_NEAR(out[3], 1.5 / std::sqrt(1.25 + 1e-5), 1e-12);
  p.gain.setConstant(2.0);
  p.offset.setConstant(0.5);
  EXPECT_NEAR(layer_norm(v, p)[0], 0.5 - 3.0 / std::sqrt(1.25 + 1e-5), 1e-12);
}

TEST(LayerNorm, ConstantInputMapsToOffset) {
  LayerNormParams p{Vector::Ones(3), Vector::Constant(3, 0.25), 1e-5};
  const Vector out = layer_norm(Vector::Constant(3, 7.0), p);
  for (double e : out) EXPECT_DOUBLE_EQ(e, 0.25);
}

TEST(SinusoidalEmbed, PairsOfSineAndCosine) {
  const Vector e = sinusoidal_embed(1.0, 4);
  EXPECT_NEAR(e[0], 0.8414709848078965, 1e-15);
  EXPECT_NEAR(e[1], 0.5403023058681398, 1e-15);
  EXPECT_NEAR(e[2], std::sin(0.01), 1e-15);  // 10000^(-1/2)
  EXPECT_NEAR(e[3], std::cos(0.01), 1e-15);
  EXPECT_THROW(sinusoidal_embed(1.0, 3), ConfigError);
}

TEST(Init, GlorotBoundsAndZeroBias) {
  Rng rng(3);
  const NetworkParams p = init_network(Architecture{}, rng);
  const DenseLayer& l = p.encoder_y.front();
  const double limit = std::sqrt(6.0 / (17 + 58));
  EXPECT_LE(l.weights.cwiseAbs().maxCoeff(), limit);
  EXPECT_GT(l.weights.cwiseAbs().maxCoeff(), 0.9 * limit);
  EXPECT_EQ(l.bias.squaredNorm(), 0.0);
  EXPECT_EQ(p.decoder_norm.gain, Vector::Ones(84));
}

TEST(Init, SeedDeterminesParameters) {
  Rng a(11), b(11), c(12);
  EXPECT_EQ(flatten(init_network(Architecture{}, a)), flatten(init_network(Architecture{}, b)));
  Rng a2(11);
  EXPECT_NE(flatten(init_network(Architecture{}, a2)), flatten(init_network(Architecture{}, c)));
}

TEST(ParameterCount, ReferenceWidthsByHand) {
  // dense(in, out) = in*out + out
  auto dense = [](int in, int out) { return in * out + out; };
  const int y = dense(17, 58) + dense(58, 58);
  const int x = dense(3, 16) + dense(16, 16);
  const int noise = dense(10, 10) + dense(10, 10);
  const int norm_t = 2 * (58 + 16 + 10);
  const int dec_t = dense(84, 58) + dense(58, 20);
  Rng rng(0);
  Architecture a;
  const auto n_t = parameter_count(init_network(a, rng));
  EXPECT_EQ(n_t, static_cast<std::size_t>(y + x + noise + norm_t + dec_t));
  EXPECT_GE(n_t, 10000u);
  EXPECT_LE(n_t, 20000u);

  a.time_dependent = false;
  const int norm_0 = 2 * (58 + 16);
  const int dec_0 = dense(74, 58) + dense(58, 20);
  EXPECT_EQ(parameter_count(init_network(a, rng)), static_cast<std::size_t>(y + x + norm_0 + dec_0));
}

TEST(Forward, TimeIndependentHasNoNoiseBranch) {
  Architecture a;
  a.time_dependent = false;
  Rng rng(1);
  const NetworkParams p = init_network(a, rng);
  EXPECT_FALSE(p.noise_mlp.has_value());
  EXPECT_THROW(forward(p, Vector::Zero(17), Vector::Zero(3), 0.5), VariantMismatch);
  EXPECT_EQ(forward(p, Vector::Zero(17), Vector::Zero(3), std::nullopt).size(), 20);
}

TEST(Forward, WrongWidthNamesTheLayer) {
  Rng rng(1);
  const NetworkParams p = init_network(Architecture{}, rng);
  try {
    forward(p, Vector::Zero(16), Vector::Zero(3), 0.5);
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.layer(), "encoder_y.0");
  }
}

TEST(Forward, BatchRowsMatchSingleCalls) {
  Architecture a = small(true, true);
  Rng rng(5);
  const NetworkParams p = init_network(a, rng);
  const Batch b = random_batch(p, a, 4, rng);
  const Matrix out = forward_batch(p, b);
  for (int r = 0; r < 4; ++r) {
    const Vector single = forward(p, b.y_noisy.row(r).transpose(), b.x.row(r).transpose(), b.sigma[r]);
    for (int k = 0; k < out.cols(); ++k) EXPECT_NEAR(out(r, k), single[k], 1e-12);
  }
}

TEST(Gradients, TimeDependentNetworkAgainstDifferences) { check_gradients(small(true, true), 1, 100); }
TEST(Gradients, TimeIndependentNetworkAgainstDifferences) { check_gradients(small(true, false), 2, 100); }
TEST(Gradients, RegressorBackboneAgainstDifferences) { check_gradients(small(false, false), 3, 100); }

TEST(Gradients, MaskedStreamReceivesNoGradient) {
  Architecture a = small(true, false);
  Rng rng(4);
  NetworkParams p = init_network(a, rng);
  p.y_stream_masked = true;
  const Batch b = random_batch(p, a, 3, rng);
  const LossAndGrad lg = loss_and_grad(p, b, Matrix::Zero(3, a.output_dim()));
  for (const auto& l : lg.grad.encoder_y) EXPECT_EQ(l.weights.squaredNorm(), 0.0);
}

TEST(Loss, NonFiniteInputRaisesDivergence) {
  Architecture a = small(true, false);
  Rng rng(4);
  const NetworkParams p = init_network(a, rng);
  Batch b = random_batch(p, a, 2, rng);
  b.x(0, 0) = std::numeric_limits<double>::infinity();
  try {
    loss_and_grad(p, b, Matrix::Zero(2, a.output_dim()), 7);
    FAIL() << "expected divergence";
  } catch (const DivergedTraining& e) {
    EXPECT_EQ(e.batch_index(), 7u);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Architecture a = small(false, false);
  Rng rng(9);
  NetworkParams p = init_network(a, rng);
  const std::vector<double> before = flatten(p);
  NetworkParams g = zeros_like(p);
  for (auto s : tensors(g))
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = (i % 2 ? 3.0 : -0.02);
  AdamState st = AdamState::for_params(p, 1e-3);
  adam_step(p, g, st);
  const std::vector<double> after = flatten(p);
  const std::vector<double> grad = flatten(g);
  for (std::size_t i = 0; i < after.size(); ++i) {
    // bias-corrected first step: lr * g / (|g| + eps)
    const double expected = -1e-3 * grad[i] / (std::abs(grad[i]) + 1e-8);
    EXPECT_NEAR(after[i] - before[i], expected, 1e-15);
  }
}

TEST(Adam, SecondStepFollowsMomentRecursion) {
  NetworkParams p;
  p.decoder_norm.gain = Vector::Zero(1);
  p.decoder_norm.offset = Vector::Zero(1);
  NetworkParams g = p;
  AdamState st = AdamState::for_params(p, 0.1);
  g.decoder_norm.gain[0] = 1.0;
  adam_step(p, g, st);
  g.decoder_norm.gain[0] = -2.0;
  adam_step(p, g, st);
  // oracle: m = 0.9*0.1 - 0.2 = -0.11 ; v = 0.999*0.001 + 0.004 = 0.004999
  const double m_hat = -0.11 / (1 - 0.81);
  const double v_hat = 0.004999 / (1 - 0.998001);
  EXPECT_NEAR(p.decoder_norm.gain[0], -0.1 / (1 + 1e-8) - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-12);
}
