#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "cdm/data.hpp"
#include "cdm/errors.hpp"
#include "cdm/model.hpp"
#include "cdm/netcore.hpp"
#include "cdm/physics.hpp"
#include "cdm/rng.hpp"
#include "cdm/schedule.hpp"

namespace cdm {

/// Training hyperparameters. Defaults: Adam at lr 1e-3, batch 128, at least
/// 4500 epochs, patience 20, sigma_max 1.
struct TrainConfig {
  int batch_size = 128;
  double lr = 1e-3;
  int min_epochs = 4500;
  int max_epochs = 20000;
  int patience = 20;
  double sigma_max = 1.0;
  double schedule_s = 0.008;
  std::uint64_t seed = 0;
  Variant variant = Variant::time_independent;
  double physics_weight = 1.0;
  int val_probes = 16;
  double width_scale = 1.0;
  bool mask_y_stream = false;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (min_epochs < 0 || max_epochs < 1 || max_epochs < min_epochs)
      throw ConfigError("need 0 <= min_epochs <= max_epochs, max_epochs >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(sigma_max >= 0.0)) throw ConfigError("sigma_max must be nonnegative");
    if (!(schedule_s >= 0.0)) throw ConfigError("schedule_s must be nonnegative");
    if (!(physics_weight >= 0.0)) throw ConfigError("physics_weight must be nonnegative");
    if (val_probes < 1) throw ConfigError("val_probes must be >= 1");
    if (!(width_scale > 0.0)) throw ConfigError("width_scale must be positive");
  }

  SineSchedule schedule() const { return {sigma_max, schedule_s}; }
};

struct TrainReport {
  int epochs_run = 0;
  std::vector<double> train_loss_trace;
  std::vector<double> val_loss_trace;
  int best_epoch = 0;  // 1-based epoch whose parameters were kept
  double best_val_loss = 0.0;
  double wall_time = 0.0;  // seconds
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss)>;

// ---------------------------------------------------------------------------
// Validation probes

/// Frozen (t, eps) draws over the validation split, so successive validation
/// losses of a stochastic objective are directly comparable.
struct ValidationProbes {
  Batch batch;
  Matrix target;
};

inline ValidationProbes make_validation_probes(const Dataset& val, const TrainConfig& cfg) {
  const auto probes = static_cast<Eigen::Index>(cfg.val_probes);
  const Eigen::Index n = val.size() * probes;
  const SineSchedule sched = cfg.schedule();
  Rng rng = substream(cfg.seed, {stream::probes});
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  ValidationProbes vp;
  vp.batch.x.resize(n, val.dim_x());
  vp.batch.y_noisy.resize(n, val.dim_y());
  if (cfg.variant == Variant::time_dependent) vp.batch.sigma.resize(n);
  vp.target.resize(n, val.dim_y() + val.dim_x());
  for (Eigen::Index i = 0; i < val.size(); ++i)
    for (Eigen::Index p = 0; p < probes; ++p) {
      const Eigen::Index r = i * probes + p;
      const double sigma = sigma_of_t(sched, uniform(rng));
      vp.batch.x.row(r) = val.x.row(i);
      for (Eigen::Index k = 0; k < val.y.cols(); ++k)
        vp.batch.y_noisy(r, k) = val.y(i, k) + sigma * normal(rng);
      if (vp.batch.sigma.size() > 0) vp.batch.sigma[r] = sigma;
      vp.target.row(r) << val.y.row(i), val.x.row(i);
    }
  return vp;
}

inline double validation_loss(const CdmModel& m, const ValidationProbes& vp) {
  const Matrix out = forward_batch(m.params, vp.batch);
  return (out - vp.target).squaredNorm() / static_cast<double>(vp.target.rows());
}

/// Plain data MSE (sum over outputs, mean over samples) for the regressor.
inline double validation_loss(const RegressorModel& m, const Dataset& val) {
  return (predict(m, val.x) - val.y).squaredNorm() / static_cast<double>(val.size());
}

// ---------------------------------------------------------------------------
// Shared epoch loop

namespace detail {

inline std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// Runs epochs of `step(batch_rows, batch_index) -> loss` with early stopping
// on `val()`. Keeps the parameters of the best validation epoch.
template <class Step, class Val>
TrainReport run_epochs(NetworkParams& params, std::size_t n_train, const TrainConfig& cfg,
                       Step&& step, Val&& val, const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  TrainReport rep;
  Rng shuffle_rng = substream(cfg.seed, {stream::shuffle});
  NetworkParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::size_t batch_index = 0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = shuffled(n_train, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start_row = 0; start_row < n_train; start_row += bs) {
      const std::size_t end_row = std::min(n_train, start_row + bs);
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start_row),
                                    order.begin() + static_cast<std::ptrdiff_t>(end_row));
      loss_sum += step(rows, batch_index++);
      ++batches;
    }
    const double train_loss = loss_sum / static_cast<double>(batches);
    const double val_loss = val();
    rep.train_loss_trace.push_back(train_loss);
    rep.val_loss_trace.push_back(val_loss);
    rep.epochs_run = epoch;
    if (on_epoch) on_epoch(epoch, train_loss, val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best = params;
      rep.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (epoch >= cfg.min_epochs && since_best >= cfg.patience) break;
  }
  params = std::move(best);
  rep.best_val_loss = best_val;
  rep.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CDM training

/// Denoising objective: per step draw t ~ U(0,1) per sample, corrupt y with
/// sigma(t), regress z = [y, x] with mean squared L2 loss. Splits are in
/// standardized space.
inline std::pair<CdmModel, TrainReport> train_cdm(const Dataset& train, const Dataset& val,
                                                  const Standardizer& standardizer,
                                                  const TrainConfig& cfg,
                                                  const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train.size() == 0 || val.size() == 0) throw ConfigError("train and validation splits must be nonempty");
  if (train.dim_x() != val.dim_x() || train.dim_y() != val.dim_y())
    throw ConfigError("train/validation dimension mismatch");

  Rng init_rng = substream(cfg.seed, {stream::init});
  CdmModel model = make_cdm(cdm_architecture(train.dim_x(), train.dim_y(), cfg.variant, cfg.width_scale),
                            cfg.variant, standardizer, init_rng);
  model.params.y_stream_masked = cfg.mask_y_stream;
  model.schedule = cfg.schedule();
  AdamState adam = AdamState::for_params(model.params, cfg.lr);

  const SineSchedule sched = cfg.schedule();
  const ValidationProbes probes = make_validation_probes(val, cfg);
  Rng noise_rng = substream(cfg.seed, {stream::noise});
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool td = cfg.variant == Variant::time_dependent;
  const int dx = train.dim_x(), dy = train.dim_y();

  Batch batch;
  Matrix target;
  auto step = [&](const std::vector<std::size_t>& rows, std::size_t batch_index) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    batch.x.resize(n, dx);
    batch.y_noisy.resize(n, dy);
    batch.sigma.resize(td ? n : 0);
    target.resize(n, dy + dx);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
      const double sigma = sigma_of_t(sched, uniform(noise_rng));
      batch.x.row(r) = train.x.row(src);
      for (int k = 0; k < dy; ++k) batch.y_noisy(r, k) = train.y(src, k) + sigma * normal(noise_rng);
      if (td) batch.sigma[r] = sigma;
      target.row(r) << train.y.row(src), train.x.row(src);
    }
    LossAndGrad lg = loss_and_grad(model.params, batch, target, batch_index);
    adam_step(model.params, lg.grad, adam);
    return lg.loss;
  };
  auto val_fn = [&] { return validation_loss(model, probes); };

  TrainReport rep = detail::run_epochs(model.params, static_cast<std::size_t>(train.size()), cfg,
                                       step, val_fn, on_epoch);
  return {std::move(model), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Regressor baselines

struct PhysicsPenalty {
  double value = 0.0;
  Matrix grad;  // d(value)/d(standardized prediction)
};

/// lambda * mean_i ||G(x_i, f_i)||^2 with G evaluated in physical units.
inline PhysicsPenalty physics_penalty(const ConstraintSet& cs, const Standardizer& st,
                                      const Matrix& x_std, const Matrix& pred_std, double lambda) {
  PhysicsPenalty out;
  out.grad = Matrix::Zero(pred_std.rows(), pred_std.cols());
  const double inv_n = 1.0 / static_cast<double>(pred_std.rows());
  for (Eigen::Index i = 0; i < pred_std.rows(); ++i) {
    const Vector x = (x_std.row(i).transpose().array() * st.std_x.array()).matrix() + st.mean_x;
    const Vector y = st.inverse_y(Vector(pred_std.row(i).transpose()));
    const Vector g = residuals(cs, x, y);
    out.value += lambda * inv_n * g.squaredNorm();
    const Matrix j = cs.jacobian(x, y);
    // d/dy_std of ||g||^2 = 2 (J^T (g / scale)) * std_y
    const Vector dy = j.transpose() * g.cwiseQuotient(cs.scale());
    out.grad.row(i) = (2.0 * lambda * inv_n) * dy.cwiseProduct(st.std_y).transpose();
  }
  return out;
}

/// Regressor on the condition stream. With `physics`, the loss adds
/// physics_weight * mean ||G(x, f(x))||^2.
inline std::pair<RegressorModel, TrainReport> train_regressor(
    const Dataset& train, const Dataset& val, const Standardizer& standardizer,
    const TrainConfig& cfg, const ConstraintSet* physics = nullptr,
    const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train.size() == 0 || val.size() == 0) throw ConfigError("train and validation splits must be nonempty");
  Rng init_rng = substream(cfg.seed, {stream::init});
  RegressorModel model =
      make_regressor(regressor_architecture(train.dim_x(), train.dim_y(), cfg.width_scale),
                     standardizer, init_rng);
  model.physics_weight = physics ? cfg.physics_weight : 0.0;
  AdamState adam = AdamState::for_params(model.params, cfg.lr);
  const double lambda = model.physics_weight;

  Batch batch;
  Matrix target;
  auto step = [&](const std::vector<std::size_t>& rows, std::size_t batch_index) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    batch.x.resize(n, train.dim_x());
    target.resize(n, train.dim_y());
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
      batch.x.row(r) = train.x.row(src);
      target.row(r) = train.y.row(src);
    }
    const ForwardCache c = forward_cached(model.params, batch);
    const Matrix resid = c.output - target;
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = resid.squaredNorm() * inv_n;
    Matrix d_out = (2.0 * inv_n) * resid;
    if (physics && lambda > 0.0) {
      const PhysicsPenalty pen = physics_penalty(*physics, standardizer, batch.x, c.output, lambda);
      loss += pen.value;
      d_out += pen.grad;
    }
    if (!std::isfinite(loss)) throw DivergedTraining(batch_index, "loss is not finite");
    adam_step(model.params, backward(model.params, c, d_out), adam);
    return loss;
  };
  auto val_fn = [&] { return validation_loss(model, val); };

  TrainReport rep = detail::run_epochs(model.params, static_cast<std::size_t>(train.size()), cfg,
                                       step, val_fn, on_epoch);
  return {std::move(model), std::move(rep)};
}

}  // namespace cdm
