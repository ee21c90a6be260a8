#pragma once

// Generative inference: schedule-driven Euler sampling for time-dependent
// models and fixed-point iteration (constant or adaptive step) for
// time-independent ones. States live in standardized space internally;
// inputs and outputs are in physical units.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cdm/errors.hpp"
#include "cdm/model.hpp"
#include "cdm/rng.hpp"
#include "cdm/schedule.hpp"

namespace cdm {

enum class SamplerKind { cdm_t_dense, cdm_t_sparse, cdm_t_custom, cdm_0_const, cdm_0_adapt };

inline std::string sampler_name(SamplerKind k) {
  switch (k) {
    case SamplerKind::cdm_t_dense: return "cdm-t-dense";
    case SamplerKind::cdm_t_sparse: return "cdm-t-sparse";
    case SamplerKind::cdm_t_custom: return "cdm-t-custom";
    case SamplerKind::cdm_0_const: return "cdm-0-const";
    case SamplerKind::cdm_0_adapt: return "cdm-0-adapt";
  }
  return "unknown";
}

inline SamplerKind parse_sampler(const std::string& name) {
  for (auto k : {SamplerKind::cdm_t_dense, SamplerKind::cdm_t_sparse, SamplerKind::cdm_t_custom,
                 SamplerKind::cdm_0_const, SamplerKind::cdm_0_adapt})
    if (sampler_name(k) == name) return k;
  throw ConfigError("unknown sampler '" + name + "'");
}

inline bool is_time_dependent(SamplerKind k) {
  return k == SamplerKind::cdm_t_dense || k == SamplerKind::cdm_t_sparse ||
         k == SamplerKind::cdm_t_custom;
}

struct SamplerConfig {
  SamplerKind kind = SamplerKind::cdm_0_const;
  int T = 130;
  int K = 10;
  double eta = 0.1;
  double eta_base = 1.0;
  int n_max = 1300;
  double eps_conv = 1e-5;
  double delta = 1e-8;
  std::optional<double> init_sigma;  // defaults to the model's sigma_max
  bool trace = false;

  static SamplerConfig of(SamplerKind k) {
    SamplerConfig c;
    c.kind = k;
    if (k == SamplerKind::cdm_t_dense) c.T = 130, c.K = 10;
    if (k == SamplerKind::cdm_t_sparse) c.T = 10, c.K = 130;
    return c;
  }

  static SamplerConfig custom(int T, int K) {
    SamplerConfig c;
    c.kind = SamplerKind::cdm_t_custom;
    c.T = T;
    c.K = K;
    return c;
  }

  void validate() const {
    if (kind == SamplerKind::cdm_t_dense && (T != 130 || K != 10))
      throw ConfigError("cdm-t-dense is fixed at T=130, K=10");
    if (kind == SamplerKind::cdm_t_sparse && (T != 10 || K != 130))
      throw ConfigError("cdm-t-sparse is fixed at T=10, K=130");
    if (T < 1 || K < 1) throw ConfigError("T and K must be >= 1");
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must lie in (0, 1)");
    if (!(eta_base > 0.0)) throw ConfigError("eta_base must be positive");
    if (!(eps_conv > 0.0)) throw ConfigError("eps_conv must be positive");
    if (n_max < 1) throw ConfigError("n_max must be >= 1");
    if (!(delta >= 0.0)) throw ConfigError("delta must be nonnegative");
  }
};

struct Trajectory {
  std::vector<Vector> iterates;  // standardized states, only when tracing
  std::vector<double> residual_norms;
  std::vector<double> eta_trace;
  int evals = 0;
  bool converged = false;
};

struct SampleResult {
  Vector y;  // physical units
  Trajectory trajectory;
};

/// Adaptive fixed-point step, clamped into (0, 1].
inline double adaptive_eta(double eta_base, double v_l1, double y_l1, double delta) {
  return std::min(1.0, eta_base * v_l1 / (y_l1 + delta));
}

namespace detail {

inline Vector initial_state(int dim, double init_sigma, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector y(dim);
  for (int i = 0; i < dim; ++i) y[i] = init_sigma * normal(rng);
  return y;
}

inline void check_finite(const Vector& y, std::size_t index) {
  if (!y.allFinite()) throw SamplerDivergence(index, "state contains NaN or Inf");
}

}  // namespace detail

/// Euler sampling over a decreasing ladder: at each level eta_i =
/// (sigma_i - sigma_{i-1}) / sigma_i and K updates y <- y + eta_i (g(y, x, sigma_i) - y).
inline SampleResult sample_cdm_t(const CdmModel& m, const Vector& x, const SigmaLadder& ladder,
                                 int K, Rng& rng, const SamplerConfig& cfg = {}) {
  if (m.variant != Variant::time_dependent)
    throw VariantMismatch("schedule sampler needs a cdm-t model");
  if (!strictly_decreasing(ladder)) throw DomainError("sigma ladder must be strictly decreasing");
  if (K < 1) throw ConfigError("K must be >= 1");
  const Vector xs = m.standardizer.transform_x(x);
  Vector y = detail::initial_state(m.dim_y(), cfg.init_sigma.value_or(m.schedule.sigma_max), rng);
  SampleResult res;
  Trajectory& tr = res.trajectory;
  if (cfg.trace) tr.iterates.push_back(y);
  for (std::size_t level = 0; level + 1 < ladder.sigmas.size(); ++level) {
    const double s_curr = ladder.sigmas[level];
    const double eta = euler_eta(s_curr, ladder.sigmas[level + 1]);
    for (int k = 0; k < K; ++k) {
      const Vector v = denoise(m, y, xs, s_curr).y_hat - y;
      ++tr.evals;
      tr.residual_norms.push_back(v.norm());
      tr.eta_trace.push_back(eta);
      y += eta * v;
      detail::check_finite(y, level);
      if (cfg.trace) tr.iterates.push_back(y);
    }
  }
  tr.converged = true;
  res.y = m.standardizer.inverse_y(y);
  return res;
}

/// Fixed-point iteration y <- y + eta_k (g(y, x) - y) until ||g(y, x) - y||_2
/// drops below eps_conv or n_max evaluations are spent. On convergence the
/// current state is returned.
inline SampleResult sample_cdm_0(const CdmModel& m, const Vector& x, const SamplerConfig& cfg,
                                 Rng& rng) {
  if (m.variant != Variant::time_independent)
    throw VariantMismatch("fixed-point sampler needs a cdm-0 model");
  if (cfg.kind != SamplerKind::cdm_0_const && cfg.kind != SamplerKind::cdm_0_adapt)
    throw VariantMismatch("sampler " + sampler_name(cfg.kind) + " is not a fixed-point sampler");
  cfg.validate();
  const bool adaptive = cfg.kind == SamplerKind::cdm_0_adapt;
  const Vector xs = m.standardizer.transform_x(x);
  Vector y = detail::initial_state(m.dim_y(), cfg.init_sigma.value_or(m.schedule.sigma_max), rng);
  SampleResult res;
  Trajectory& tr = res.trajectory;
  if (cfg.trace) tr.iterates.push_back(y);
  for (int k = 0; k < cfg.n_max; ++k) {
    const Vector v = denoise(m, y, xs, std::nullopt).y_hat - y;
    ++tr.evals;
    const double norm = v.norm();
    tr.residual_norms.push_back(norm);
    if (norm < cfg.eps_conv) {
      tr.converged = true;
      break;
    }
    const double eta =
        adaptive ? adaptive_eta(cfg.eta_base, v.lpNorm<1>(), y.lpNorm<1>(), cfg.delta) : cfg.eta;
    tr.eta_trace.push_back(eta);
    y += eta * v;
    detail::check_finite(y, static_cast<std::size_t>(k));
    if (cfg.trace) tr.iterates.push_back(y);
  }
  res.y = m.standardizer.inverse_y(y);
  return res;
}

/// Dispatches on the sampler kind.
inline SampleResult sample(const CdmModel& m, const Vector& x, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  if (is_time_dependent(cfg.kind)) {
    if (m.variant != Variant::time_dependent)
      throw VariantMismatch(sampler_name(cfg.kind) + " sampler needs a cdm-t model");
    return sample_cdm_t(m, x, discretize(m.schedule, cfg.T), cfg.K, rng, cfg);
  }
  return sample_cdm_0(m, x, cfg, rng);
}

struct RowSummary {
  int evals = 0;
  bool converged = false;
  double final_residual = 0.0;
  std::string error;  // empty on success
};

struct BatchSampleResult {
  Matrix y;  // physical units; NaN rows where sampling failed
  std::vector<RowSummary> rows;
  std::vector<Trajectory> trajectories;  // kept only when cfg.trace

  std::size_t failures() const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const RowSummary& r) { return !r.error.empty(); }));
  }
};

/// Row-wise independent sampling. Row i draws from substream (seed, i), so
/// results do not depend on batch composition or thread count.
inline BatchSampleResult batch_sample(const CdmModel& m, const Matrix& x, const SamplerConfig& cfg,
                                      std::uint64_t seed, int jobs = 1) {
  if (x.cols() != m.dim_x()) throw ShapeError("encoder_x.0", "condition matrix width");
  cfg.validate();
  if (is_time_dependent(cfg.kind) != (m.variant == Variant::time_dependent))
    throw VariantMismatch(sampler_name(cfg.kind) + " sampler cannot drive a " +
                          variant_tag(m.variant) + " model");
  const auto n = static_cast<std::size_t>(x.rows());
  BatchSampleResult out;
  out.y.resize(x.rows(), m.dim_y());
  out.rows.resize(n);
  if (cfg.trace) out.trajectories.resize(n);

  auto run_row = [&](std::size_t i) {
    Rng rng = substream(seed, {stream::sampler, i});
    try {
      SampleResult r = sample(m, x.row(static_cast<Eigen::Index>(i)).transpose(), cfg, rng);
      out.y.row(static_cast<Eigen::Index>(i)) = r.y.transpose();
      out.rows[i].evals = r.trajectory.evals;
      out.rows[i].converged = r.trajectory.converged;
      out.rows[i].final_residual =
          r.trajectory.residual_norms.empty() ? 0.0 : r.trajectory.residual_norms.back();
      if (cfg.trace) out.trajectories[i] = std::move(r.trajectory);
    } catch (const SamplerDivergence& e) {
      out.y.row(static_cast<Eigen::Index>(i)).setConstant(std::numeric_limits<double>::quiet_NaN());
      out.rows[i].error = "row " + std::to_string(i) + ": " + e.what();
    }
  };

  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) run_row(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run_row(i);
      });
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace cdm
