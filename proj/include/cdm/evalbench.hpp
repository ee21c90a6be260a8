#pragma once

// Metrics, ensembles over seeded splits, and ablation sweeps.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdm/data.hpp"
#include "cdm/errors.hpp"
#include "cdm/model.hpp"
#include "cdm/physics.hpp"
#include "cdm/samplers.hpp"
#include "cdm/training.hpp"

namespace cdm {

// ---------------------------------------------------------------------------
// Metrics

/// Root of the mean squared error over all entries.
inline double rmse(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw ShapeError("rmse", "prediction and truth shapes differ");
  if (pred.size() == 0) return 0.0;
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

/// Root mean square of normalized constraint residuals over all samples and
/// constraints, predictions in physical units.
inline double physics_rmse(const ConstraintSet& cs, const Matrix& x, const Matrix& y_pred) {
  if (x.rows() != y_pred.rows()) throw ShapeError("physics_rmse", "row count mismatch");
  if (cs.size() == 0 || x.rows() == 0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    acc += residuals(cs, x.row(i).transpose(), y_pred.row(i).transpose()).squaredNorm();
  return std::sqrt(acc / static_cast<double>(x.rows() * static_cast<Eigen::Index>(cs.size())));
}

/// Per-sample physics RMSE (one value per row).
inline std::vector<double> physics_rmse_per_sample(const ConstraintSet& cs, const Matrix& x,
                                                   const Matrix& y_pred) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out.push_back(std::sqrt(residuals(cs, x.row(i).transpose(), y_pred.row(i).transpose()).squaredNorm() /
                            static_cast<double>(cs.size())));
  return out;
}

// ---------------------------------------------------------------------------
// Methods

enum class Method { cdm_t_dense, cdm_t_sparse, cdm_0_const, cdm_0_adapt, nn, nn_projection };

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::cdm_t_dense, Method::cdm_t_sparse, Method::cdm_0_const,
                                     Method::cdm_0_adapt, Method::nn, Method::nn_projection};
  return m;
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::cdm_t_dense: return "cdm-t-dense";
    case Method::cdm_t_sparse: return "cdm-t-sparse";
    case Method::cdm_0_const: return "cdm-0-const";
    case Method::cdm_0_adapt: return "cdm-0-adapt";
    case Method::nn: return "nn";
    case Method::nn_projection: return "nn+projection";
  }
  return "unknown";
}

inline Method parse_method(const std::string& s) {
  for (Method m : all_methods())
    if (method_name(m) == s) return m;
  throw ConfigError("unknown method '" + s + "'");
}

inline bool is_cdm(Method m) { return m != Method::nn && m != Method::nn_projection; }

inline std::optional<SamplerKind> sampler_of(Method m) {
  switch (m) {
    case Method::cdm_t_dense: return SamplerKind::cdm_t_dense;
    case Method::cdm_t_sparse: return SamplerKind::cdm_t_sparse;
    case Method::cdm_0_const: return SamplerKind::cdm_0_const;
    case Method::cdm_0_adapt: return SamplerKind::cdm_0_adapt;
    default: return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Reports

struct SplitSpec {
  SplitFractions fractions;
  int n_splits = 10;
  std::uint64_t master_seed = 0;

  void validate() const {
    if (n_splits < 1) throw ConfigError("n_splits must be >= 1");
    if (std::abs(fractions.train + fractions.test + fractions.val - 1.0) > 1e-9)
      throw ConfigError("split fractions must sum to 1");
  }
};

struct SplitResult {
  int split = 0;
  bool ok = true;
  std::string error;
  double test_rmse = 0.0;
  double physics_rmse = 0.0;
  double max_sample_physics_rmse = 0.0;
  double evals_used = 0.0;    // mean model evaluations per test row
  double median_evals = 0.0;  // median evaluations per test row
  double converged_fraction = 0.0;
  std::size_t param_count = 0;
  std::size_t train_size = 0;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<double> residual_profile;  // fixed-point samplers, when requested
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and sample standard deviation (0 for a single value).
inline Stat mean_std(const std::vector<double>& v) {
  Stat s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0.0;
    for (double e : v) acc += (e - s.mean) * (e - s.mean);
    s.std = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct RunReport {
  std::string method;
  std::map<std::string, double> coordinates;
  std::vector<SplitResult> splits;
  std::map<std::string, Stat> aggregate;
  bool degenerate = false;  // a single split, std is meaningless
  bool partial = false;     // at least one split failed
  std::vector<double> residual_profile_mean;
  std::vector<double> residual_profile_std;

  const Stat& stat(const std::string& metric) const { return aggregate.at(metric); }

  /// Recomputes every aggregate from the per-split values.
  void recompute() {
    std::map<std::string, std::vector<double>> cols;
    partial = false;
    std::size_t ok = 0;
    for (const auto& s : splits) {
      if (!s.ok) {
        partial = true;
        continue;
      }
      ++ok;
      cols["test_rmse"].push_back(s.test_rmse);
      cols["physics_rmse"].push_back(s.physics_rmse);
      cols["evals_used"].push_back(s.evals_used);
      cols["median_evals"].push_back(s.median_evals);
      cols["param_count"].push_back(static_cast<double>(s.param_count));
    }
    aggregate.clear();
    for (auto& [k, v] : cols) aggregate[k] = mean_std(v);
    degenerate = ok <= 1;

    residual_profile_mean.clear();
    residual_profile_std.clear();
    std::size_t len = 0;
    for (const auto& s : splits)
      if (s.ok) len = std::max(len, s.residual_profile.size());
    for (std::size_t k = 0; k < len; ++k) {
      std::vector<double> at;
      for (const auto& s : splits)
        if (s.ok && !s.residual_profile.empty())
          at.push_back(s.residual_profile[std::min(k, s.residual_profile.size() - 1)]);
      const Stat st = mean_std(at);
      residual_profile_mean.push_back(st.mean);
      residual_profile_std.push_back(st.std);
    }
  }
};

inline nlohmann::json to_json(const SplitResult& s) {
  nlohmann::json j{{"split", s.split},
                   {"ok", s.ok},
                   {"test_rmse", s.test_rmse},
                   {"physics_rmse", s.physics_rmse},
                   {"max_sample_physics_rmse", s.max_sample_physics_rmse},
                   {"evals_used", s.evals_used},
                   {"median_evals", s.median_evals},
                   {"converged_fraction", s.converged_fraction},
                   {"param_count", s.param_count},
                   {"train_size", s.train_size},
                   {"train_report", {{"epochs_run", s.epochs_run},
                                     {"best_epoch", s.best_epoch},
                                     {"best_val_loss", s.best_val_loss}}}};
  if (!s.error.empty()) j["error"] = s.error;
  if (!s.residual_profile.empty()) j["residual_profile"] = s.residual_profile;
  return j;
}

inline SplitResult split_result_from_json(const nlohmann::json& j) {
  SplitResult s;
  s.split = j.at("split").get<int>();
  s.ok = j.at("ok").get<bool>();
  s.test_rmse = j.at("test_rmse").get<double>();
  s.physics_rmse = j.at("physics_rmse").get<double>();
  s.max_sample_physics_rmse = j.value("max_sample_physics_rmse", 0.0);
  s.evals_used = j.at("evals_used").get<double>();
  s.median_evals = j.value("median_evals", 0.0);
  s.converged_fraction = j.value("converged_fraction", 0.0);
  s.param_count = j.at("param_count").get<std::size_t>();
  s.train_size = j.value("train_size", std::size_t{0});
  if (j.contains("train_report")) {
    s.epochs_run = j["train_report"].value("epochs_run", 0);
    s.best_epoch = j["train_report"].value("best_epoch", 0);
    s.best_val_loss = j["train_report"].value("best_val_loss", 0.0);
  }
  s.error = j.value("error", std::string());
  if (j.contains("residual_profile")) s.residual_profile = j["residual_profile"].get<std::vector<double>>();
  return s;
}

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["coordinates"] = r.coordinates;
  j["degenerate"] = r.degenerate;
  j["partial"] = r.partial;
  for (const auto& [k, s] : r.aggregate) j["aggregate"][k] = {{"mean", s.mean}, {"std", s.std}};
  j["splits"] = nlohmann::json::array();
  for (const auto& s : r.splits) j["splits"].push_back(to_json(s));
  if (!r.residual_profile_mean.empty()) {
    j["residual_profile"]["mean"] = r.residual_profile_mean;
    j["residual_profile"]["std"] = r.residual_profile_std;
  }
  return j;
}

inline RunReport run_report_from_json(const nlohmann::json& j) {
  RunReport r;
  r.method = j.at("method").get<std::string>();
  r.coordinates = j.value("coordinates", std::map<std::string, double>());
  for (const auto& s : j.at("splits")) r.splits.push_back(split_result_from_json(s));
  r.degenerate = j.value("degenerate", false);
  r.partial = j.value("partial", false);
  if (j.contains("aggregate"))
    for (const auto& [k, v] : j["aggregate"].items())
      r.aggregate[k] = {v.at("mean").get<double>(), v.at("std").get<double>()};
  if (j.contains("residual_profile")) {
    r.residual_profile_mean = j["residual_profile"]["mean"].get<std::vector<double>>();
    r.residual_profile_std = j["residual_profile"]["std"].get<std::vector<double>>();
  }
  return r;
}

// ---------------------------------------------------------------------------
// Ensemble engine

struct ModelStore;

/// Everything a method needs beyond the data: training hyperparameters,
/// sampler overrides and evaluation options.
struct BenchConfig {
  TrainConfig train;
  SamplerConfig sampler;          // eta, eta_base, n_max, eps_conv, delta, init_sigma
  std::optional<int> schedule_T;  // overrides the method's ladder length
  std::optional<int> refine_K;    // overrides the method's refinement count
  double data_fraction = 0.0;     // 0: use the full train split
  bool match_regressor_params = true;
  bool record_profile = false;
  int jobs = 1;  // concurrent splits
  std::function<void(const std::string&)> log;
  EpochCallback on_epoch;
  std::shared_ptr<ModelStore> store;  // reuse trained models across calls
};

/// One trained model set for one split.
struct SplitModels {
  std::map<std::string, std::shared_ptr<CdmModel>> cdm;
  std::map<std::string, std::shared_ptr<RegressorModel>> regressor;
  std::map<std::string, TrainReport> reports;
};

struct PreparedSplit {
  Dataset train, val, test;  // physical units
  Standardizer standardizer;
  ConstraintSet constraints;
};

inline PreparedSplit prepare_split(const Dataset& data, const ConstraintSet& cs, const SplitSpec& spec,
                                   int split, double data_fraction) {
  const std::uint64_t seed = derive_seed(spec.master_seed, {stream::split, static_cast<std::uint64_t>(split)});
  const SplitIndices idx = make_split(static_cast<std::size_t>(data.size()), spec.fractions, seed);
  std::vector<std::size_t> train_rows = idx.train;
  if (data_fraction > 0.0) {
    const auto want = static_cast<std::size_t>(std::llround(data_fraction * static_cast<double>(data.size())));
    if (want < train_rows.size()) {
      Rng rng = substream(seed, {stream::subsample});
      std::shuffle(train_rows.begin(), train_rows.end(), rng);
      train_rows.resize(std::max<std::size_t>(1, want));
      std::sort(train_rows.begin(), train_rows.end());
    }
  }
  PreparedSplit p;
  p.train = data.subset(train_rows);
  p.val = data.subset(idx.val);
  p.test = data.subset(idx.test);
  if (p.train.size() == 0 || p.val.size() == 0 || p.test.size() == 0)
    throw ConfigError("split " + std::to_string(split) + " has an empty part");
  p.standardizer = Standardizer::fit(p.train);
  p.constraints = cs;
  if (cs.size() > 0) p.constraints.fit_scale(p.train.x, p.train.y);
  return p;
}

/// Trained models keyed by (split, training settings); shared between calls
/// that use the same dataset and split spec.
struct ModelStore {
  std::mutex mutex;
  std::map<std::pair<int, std::string>, std::shared_ptr<std::pair<PreparedSplit, SplitModels>>> entries;
};

namespace detail {

inline std::string model_key(Method m) {
  if (m == Method::cdm_t_dense || m == Method::cdm_t_sparse) return "cdm-t";
  if (m == Method::cdm_0_const || m == Method::cdm_0_adapt) return "cdm-0";
  return "nn";
}

inline std::uint64_t family_id(const std::string& key) {
  return key == "cdm-t" ? 11 : key == "cdm-0" ? 12 : 13;
}

}  // namespace detail

/// Trains (or reuses) the model behind `method` for one prepared split.
inline void ensure_model(Method method, const PreparedSplit& ps, const BenchConfig& cfg, int split,
                         const SplitSpec& spec, SplitModels& models) {
  const std::string key = detail::model_key(method);
  if (models.cdm.count(key) || models.regressor.count(key)) return;
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(spec.master_seed, {static_cast<std::uint64_t>(split), detail::family_id(key)});
  const Dataset tr = ps.standardizer.transform(ps.train);
  const Dataset va = ps.standardizer.transform(ps.val);
  if (cfg.log) cfg.log("split " + std::to_string(split) + ": training " + key);
  if (key == "nn") {
    if (cfg.match_regressor_params) {
      Rng r(0);
      const auto target = parameter_count(
          init_network(cdm_architecture(ps.train.dim_x(), ps.train.dim_y(), Variant::time_independent,
                                        tc.width_scale),
                       r));
      tc.width_scale = matched_regressor_scale(ps.train.dim_x(), ps.train.dim_y(), target);
    }
    const ConstraintSet* phys = ps.constraints.size() > 0 && tc.physics_weight > 0.0 ? &ps.constraints : nullptr;
    auto [m, rep] = train_regressor(tr, va, ps.standardizer, tc, phys, cfg.on_epoch);
    models.regressor[key] = std::make_shared<RegressorModel>(std::move(m));
    models.reports[key] = std::move(rep);
  } else {
    tc.variant = key == "cdm-t" ? Variant::time_dependent : Variant::time_independent;
    auto [m, rep] = train_cdm(tr, va, ps.standardizer, tc, cfg.on_epoch);
    models.cdm[key] = std::make_shared<CdmModel>(std::move(m));
    models.reports[key] = std::move(rep);
  }
}

inline SamplerConfig sampler_for(Method method, const BenchConfig& cfg) {
  SamplerConfig sc = cfg.sampler;
  const SamplerKind kind = *sampler_of(method);
  const SamplerConfig base = SamplerConfig::of(kind);
  sc.kind = kind;
  sc.T = base.T;
  sc.K = base.K;
  if (is_time_dependent(kind) && (cfg.schedule_T || cfg.refine_K)) {
    sc.kind = SamplerKind::cdm_t_custom;
    sc.T = cfg.schedule_T.value_or(base.T);
    sc.K = cfg.refine_K.value_or(base.K);
  }
  sc.trace = cfg.record_profile && !is_time_dependent(kind);
  return sc;
}

/// Evaluates `method` on the test part of a prepared split.
inline SplitResult evaluate_method(Method method, const PreparedSplit& ps, const BenchConfig& cfg,
                                   int split, const SplitSpec& spec, const SplitModels& models) {
  SplitResult r;
  r.split = split;
  r.train_size = static_cast<std::size_t>(ps.train.size());
  const std::string key = detail::model_key(method);
  const TrainReport& rep = models.reports.at(key);
  r.epochs_run = rep.epochs_run;
  r.best_epoch = rep.best_epoch;
  r.best_val_loss = rep.best_val_loss;

  Matrix pred;
  if (is_cdm(method)) {
    const CdmModel& m = *models.cdm.at(key);
    r.param_count = parameter_count(m.params);
    const SamplerConfig sc = sampler_for(method, cfg);
    const std::uint64_t seed =
        derive_seed(spec.master_seed, {static_cast<std::uint64_t>(split), stream::sampler,
                                       static_cast<std::uint64_t>(method)});
    BatchSampleResult bs = batch_sample(m, ps.test.x, sc, seed);
    if (bs.failures() > 0) {
      r.ok = false;
      r.error = bs.rows[0].error.empty() ? "sampler divergence" : bs.rows[0].error;
      for (const auto& row : bs.rows)
        if (!row.error.empty()) {
          r.error = row.error;
          break;
        }
      return r;
    }
    pred = std::move(bs.y);
    std::vector<double> evals;
    std::size_t conv = 0;
    for (const auto& row : bs.rows) {
      evals.push_back(row.evals);
      conv += row.converged ? 1 : 0;
    }
    r.evals_used = std::accumulate(evals.begin(), evals.end(), 0.0) / static_cast<double>(evals.size());
    std::vector<double> sorted = evals;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    r.median_evals = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    r.converged_fraction = static_cast<double>(conv) / static_cast<double>(bs.rows.size());
    if (sc.trace) {
      std::size_t len = 0;
      for (const auto& t : bs.trajectories) len = std::max(len, t.residual_norms.size());
      r.residual_profile.assign(len, 0.0);
      for (const auto& t : bs.trajectories)
        for (std::size_t k = 0; k < len; ++k)
          r.residual_profile[k] += t.residual_norms[std::min(k, t.residual_norms.size() - 1)];
      for (double& v : r.residual_profile) v /= static_cast<double>(bs.trajectories.size());
    }
  } else {
    const RegressorModel& m = *models.regressor.at(key);
    r.param_count = parameter_count(m.params);
    pred = m.standardizer.inverse_y(predict(m, m.standardizer.transform_x(ps.test.x)));
    if (method == Method::nn_projection) {
      if (ps.constraints.size() == 0) throw ConfigError("nn+projection needs a constraint set");
      for (Eigen::Index i = 0; i < pred.rows(); ++i)
        pred.row(i) = project(ps.constraints, ps.test.x.row(i).transpose(), pred.row(i).transpose()).transpose();
    }
    r.evals_used = 1.0;
    r.median_evals = 1.0;
    r.converged_fraction = 1.0;
  }
  r.test_rmse = rmse(ps.standardizer.transform_y(pred), ps.standardizer.transform_y(ps.test.y));
  if (ps.constraints.size() > 0) {
    r.physics_rmse = physics_rmse(ps.constraints, ps.test.x, pred);
    const auto per = physics_rmse_per_sample(ps.constraints, ps.test.x, pred);
    r.max_sample_physics_rmse = per.empty() ? 0.0 : *std::max_element(per.begin(), per.end());
  }
  return r;
}

/// A grid point: the configuration used plus the coordinates it is reported under.
struct GridPoint {
  std::map<std::string, double> coordinates;
  BenchConfig config;
};

/// Runs every (grid point, method) pair over all splits. Within a split,
/// models are reused across grid points whose training settings coincide
/// (inference-only sweeps train once per split).
inline std::vector<std::vector<RunReport>> run_grid(const std::vector<GridPoint>& grid,
                                                    const std::vector<Method>& methods,
                                                    const Dataset& data, const ConstraintSet& cs,
                                                    const SplitSpec& spec, int jobs = 1) {
  spec.validate();
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  if (methods.empty()) throw ConfigError("no methods requested");
  std::vector<std::vector<RunReport>> out(grid.size(), std::vector<RunReport>(methods.size()));
  for (std::size_t g = 0; g < grid.size(); ++g)
    for (std::size_t m = 0; m < methods.size(); ++m) {
      out[g][m].method = method_name(methods[m]);
      out[g][m].coordinates = grid[g].coordinates;
      out[g][m].splits.resize(static_cast<std::size_t>(spec.n_splits));
    }

  auto train_key = [](const BenchConfig& c) {
    const TrainConfig& t = c.train;
    std::ostringstream os;
    os.precision(17);
    os << t.batch_size << '|' << t.lr << '|' << t.min_epochs << '|' << t.max_epochs << '|' << t.patience << '|'
       << t.sigma_max << '|' << t.schedule_s << '|' << t.seed << '|' << t.physics_weight << '|' << t.val_probes
       << '|' << t.width_scale << '|' << c.data_fraction << '|' << c.match_regressor_params;
    return os.str();
  };

  const std::shared_ptr<ModelStore> store = grid.front().config.store;
  auto run_split = [&](int split) {
    std::map<std::string, std::shared_ptr<std::pair<PreparedSplit, SplitModels>>> cache;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const BenchConfig& cfg = grid[g].config;
      const std::string key = train_key(cfg);
      for (std::size_t m = 0; m < methods.size(); ++m) {
        SplitResult& slot = out[g][m].splits[static_cast<std::size_t>(split)];
        try {
          auto& entry = cache[key];
          if (!entry && store) {
            std::lock_guard lock(store->mutex);
            auto found = store->entries.find({split, key});
            if (found != store->entries.end()) entry = found->second;
          }
          if (!entry) {
            entry = std::make_shared<std::pair<PreparedSplit, SplitModels>>(
                prepare_split(data, cs, spec, split, cfg.data_fraction), SplitModels{});
            if (store) {
              std::lock_guard lock(store->mutex);
              store->entries[{split, key}] = entry;
            }
          }
          ensure_model(methods[m], entry->first, cfg, split, spec, entry->second);
          slot = evaluate_method(methods[m], entry->first, cfg, split, spec, entry->second);
        } catch (const Error& e) {
          slot = SplitResult{};
          slot.split = split;
          slot.ok = false;
          slot.error = e.what();
        }
      }
    }
  };

  jobs = std::max(1, std::min(jobs, spec.n_splits));
  if (jobs == 1) {
    for (int s = 0; s < spec.n_splits; ++s) run_split(s);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (int s = next++; s < spec.n_splits; s = next++) run_split(s);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& row : out)
    for (auto& rep : row) rep.recompute();
  return out;
}

/// Trains and evaluates `methods` once per split. Methods that share a model
/// family (cdm-t-dense/sparse, cdm-0-const/adapt, nn/nn+projection) share
/// one trained model per split.
inline std::vector<RunReport> run_ensembles(const std::vector<Method>& methods, const Dataset& data,
                                            const ConstraintSet& cs, const SplitSpec& spec,
                                            const BenchConfig& cfg) {
  return run_grid({GridPoint{{}, cfg}}, methods, data, cs, spec, cfg.jobs).front();
}

inline RunReport run_ensemble(Method method, const Dataset& data, const ConstraintSet& cs,
                              const SplitSpec& spec, const BenchConfig& cfg) {
  return run_ensembles({method}, data, cs, spec, cfg).front();
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepKind { sigma_max, schedule_T, refine_K, param_count, data_fraction, convergence_profile };

inline std::string sweep_name(SweepKind k) {
  switch (k) {
    case SweepKind::sigma_max: return "sigma_max";
    case SweepKind::schedule_T: return "schedule_T";
    case SweepKind::refine_K: return "refine_K";
    case SweepKind::param_count: return "param_count";
    case SweepKind::data_fraction: return "data_fraction";
    case SweepKind::convergence_profile: return "convergence_profile";
  }
  return "unknown";
}

inline SweepKind parse_sweep(const std::string& s) {
  for (auto k : {SweepKind::sigma_max, SweepKind::schedule_T, SweepKind::refine_K, SweepKind::param_count,
                 SweepKind::data_fraction, SweepKind::convergence_profile})
    if (sweep_name(k) == s) return k;
  throw ConfigError("unknown sweep '" + s + "'");
}

/// Default grids for each sweep.
inline std::vector<double> default_grid(SweepKind k) {
  switch (k) {
    case SweepKind::sigma_max: return {0.1, 0.2, 0.4, 0.7, 1.0};
    case SweepKind::schedule_T: return {3, 10, 30, 50, 130};
    case SweepKind::refine_K: return {1, 3, 10, 30, 130};
    case SweepKind::param_count: return {0.5, 0.75, 1.0, 1.5};
    case SweepKind::data_fraction: return {0.25, 0.4, 0.55, 0.7, 0.85};
    case SweepKind::convergence_profile: return {0};
  }
  return {};
}

/// Builds the grid points of a sweep over `values` around `base`. The
/// schedule_T sweep runs at K = 1 and the refine_K sweep at T = 3.
inline std::vector<GridPoint> sweep_grid(SweepKind kind, const std::vector<double>& values,
                                         const BenchConfig& base) {
  if (values.empty()) throw ConfigError("sweep grid is empty");
  std::vector<GridPoint> grid;
  for (double v : values) {
    GridPoint gp{{}, base};
    const std::string name = sweep_name(kind);
    switch (kind) {
      case SweepKind::sigma_max:
        gp.config.train.sigma_max = v;
        break;
      case SweepKind::schedule_T:
        gp.config.schedule_T = static_cast<int>(v);
        gp.config.refine_K = 1;
        break;
      case SweepKind::refine_K:
        gp.config.schedule_T = 3;
        gp.config.refine_K = static_cast<int>(v);
        break;
      case SweepKind::param_count:
        gp.config.train.width_scale = v;
        break;
      case SweepKind::data_fraction:
        gp.config.data_fraction = v;
        break;
      case SweepKind::convergence_profile:
        gp.config.record_profile = true;
        break;
    }
    if (kind != SweepKind::convergence_profile) gp.coordinates[name == "param_count" ? "width_scale" : name] = v;
    grid.push_back(std::move(gp));
  }
  return grid;
}

inline std::vector<std::vector<RunReport>> sweep(SweepKind kind, const std::vector<double>& values,
                                                 const std::vector<Method>& methods, const Dataset& data,
                                                 const ConstraintSet& cs, const SplitSpec& spec,
                                                 const BenchConfig& base) {
  auto reports = run_grid(sweep_grid(kind, values, base), methods, data, cs, spec, base.jobs);
  if (kind == SweepKind::param_count)
    for (auto& row : reports)
      for (auto& r : row)
        if (r.aggregate.count("param_count")) r.coordinates["param_count"] = r.stat("param_count").mean;
  return reports;
}

// ---------------------------------------------------------------------------
// Result files

/// One row per (grid point, method): coordinate, method, metric means/stds.
inline void write_curves_csv(const std::string& path, const std::string& coordinate,
                             const std::vector<std::vector<RunReport>>& reports) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << coordinate
      << ",method,test_rmse_mean,test_rmse_std,physics_rmse_mean,physics_rmse_std,evals_mean,n_ok\n";
  for (const auto& row : reports)
    for (const auto& r : row) {
      const auto it = r.coordinates.find(coordinate);
      const double coord = it == r.coordinates.end() ? 0.0 : it->second;
      auto get = [&](const char* k) { return r.aggregate.count(k) ? r.aggregate.at(k) : Stat{}; };
      std::size_t ok = 0;
      for (const auto& s : r.splits) ok += s.ok ? 1 : 0;
      out << format_double(coord) << ',' << r.method << ',' << format_double(get("test_rmse").mean) << ','
          << format_double(get("test_rmse").std) << ',' << format_double(get("physics_rmse").mean) << ','
          << format_double(get("physics_rmse").std) << ',' << format_double(get("evals_used").mean) << ','
          << ok << '\n';
    }
}

/// One row per method of a single ensemble run.
inline void write_summary_csv(const std::string& path, const std::vector<RunReport>& reports) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "method,test_rmse_mean,test_rmse_std,physics_rmse_mean,physics_rmse_std,evals_mean,median_evals_mean,"
         "param_count,n_ok\n";
  for (const auto& r : reports) {
    auto get = [&](const char* k) { return r.aggregate.count(k) ? r.aggregate.at(k) : Stat{}; };
    std::size_t ok = 0;
    for (const auto& s : r.splits) ok += s.ok ? 1 : 0;
    out << r.method << ',' << format_double(get("test_rmse").mean) << ',' << format_double(get("test_rmse").std)
        << ',' << format_double(get("physics_rmse").mean) << ',' << format_double(get("physics_rmse").std) << ','
        << format_double(get("evals_used").mean) << ',' << format_double(get("median_evals").mean) << ','
        << format_double(get("param_count").mean) << ',' << ok << '\n';
  }
}

/// Mean residual norm per iteration for fixed-point samplers.
inline void write_profile_csv(const std::string& path, const std::vector<RunReport>& reports) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "iteration,method,residual_mean,residual_std\n";
  for (const auto& r : reports)
    for (std::size_t k = 0; k < r.residual_profile_mean.size(); ++k)
      out << k + 1 << ',' << r.method << ',' << format_double(r.residual_profile_mean[k]) << ','
          << format_double(r.residual_profile_std[k]) << '\n';
}

}  // namespace cdm
