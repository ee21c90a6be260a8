// cdm: command-line front end.
//
//   cdm gen-data --out DIR [--n-samples 3000] [--seed S]
//   cdm train    --data CSV --method cdm-t|cdm-0|nn|nn-physics --out DIR [--config FILE] [--set k=v]...
//   cdm sample   --checkpoint FILE --sampler NAME --data CSV --out DIR [--trace]
//   cdm eval     --checkpoint FILE --method NAME --data CSV --out DIR
//   cdm eval     --data CSV --methods a,b,... --out DIR        (ensemble over splits)
//   cdm ablate   --data CSV --grid sigma_max=0.1,0.4,1.0 --out DIR [--jobs N]
//
// Exit codes: 0 success, 1 internal error, 2 usage, 3 data, 4 numerical.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cdm/checkpoint.hpp"
#include "cdm/config.hpp"
#include "cdm/data.hpp"
#include "cdm/evalbench.hpp"
#include "cdm/model.hpp"
#include "cdm/physics.hpp"
#include "cdm/samplers.hpp"
#include "cdm/training.hpp"

namespace fs = std::filesystem;
using namespace cdm;
using nlohmann::json;

namespace {

void log(const std::string& msg) { std::cerr << "[cdm] " << msg << '\n'; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path make_out_dir(const std::string& out) {
  if (out.empty()) throw ConfigError("--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

fs::path dataset_path(const std::string& data) {
  const fs::path p(data);
  return fs::is_directory(p) ? p / "dataset.csv" : p;
}

Dataset load_dataset(const std::string& data) {
  if (data.empty()) throw ConfigError("--data is required");
  return read_dataset_csv(dataset_path(data).string());
}

/// Explicit --constraints file, else constraints.txt beside the dataset.
ConstraintSet load_constraints(const std::string& explicit_path, const std::string& data, int dx, int dy,
                               bool required) {
  fs::path path = explicit_path;
  if (path.empty()) {
    const fs::path sibling = dataset_path(data).parent_path() / "constraints.txt";
    if (fs::exists(sibling)) path = sibling;
  }
  if (path.empty()) {
    if (required) throw ConfigError("this command needs a constraint file (--constraints)");
    return ConstraintSet(dx, dy, {});
  }
  return ConstraintSet(dx, dy, read_constraints_file(path.string(), dx, dy));
}

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.file, "flat key = value config file");
  cmd->add_option("--set", args.sets, "override one config key (key=value), repeatable");
}

RunConfig build_config(const ConfigArgs& args) {
  RunConfig cfg;
  if (!args.file.empty()) cfg.load_file(args.file);
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.apply_env();
  return cfg;
}

json run_metadata(const std::string& command, const RunConfig& cfg) {
  return {{"command", command}, {"version", kVersion}, {"seed", cfg.seed()}, {"config", cfg.values()}};
}

json constraint_json(const ConstraintSet& cs) {
  json a = json::array();
  for (std::size_t j = 0; j < cs.affine().size(); ++j)
    a.push_back({{"definition", format_constraint(cs.affine()[j])},
                 {"scale", cs.scale()[static_cast<Eigen::Index>(j)]}});
  return a;
}

int default_jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// ---------------------------------------------------------------------------
// gen-data

struct GenArgs {
  std::string out;
  std::size_t n_samples = 3000;
  std::uint64_t seed = 0;
  int jobs = 1;
};

int cmd_gen_data(const GenArgs& a) {
  const fs::path dir = make_out_dir(a.out);
  if (a.n_samples == 0) throw ConfigError("--n-samples must be positive");
  const BenchmarkSystem sys = default_benchmark();
  const SteadyStateSolverConfig solver;
  log("generating " + std::to_string(a.n_samples) + " samples (seed " + std::to_string(a.seed) + ")");
  const GeneratedData g = generate_dataset(sys, a.n_samples, a.seed, solver, 20, a.jobs);
  const double rate = static_cast<double>(g.rejected) / static_cast<double>(a.n_samples);
  log(std::to_string(g.rejected) + " solver rejections");
  if (rate > 0.01)
    throw SampleRejection("rejection rate " + format_double(rate) + " exceeds 1% (" + std::to_string(g.rejected) +
                          " of " + std::to_string(a.n_samples) + ")");

  write_dataset_csv((dir / "dataset.csv").string(), g.data);
  std::ostringstream cons;
  cons << "# benchmark constraints: y = (e, A, A+, A*, A2), x = (p, I, R)\n";
  for (const auto& c : sys.constraints.affine()) cons << format_constraint(c) << '\n';
  write_text(dir / "constraints.txt", cons.str());

  json box;
  for (std::size_t i = 0; i < sys.box.names.size(); ++i)
    box[sys.box.names[i]] = {{"lower", sys.box.lower[static_cast<Eigen::Index>(i)]},
                             {"upper", sys.box.upper[static_cast<Eigen::Index>(i)]},
                             {"sampling", "log-uniform"}};
  json cols_x = json::array(), cols_y = json::array();
  for (int i = 0; i < g.data.dim_x(); ++i) cols_x.push_back("x_" + std::to_string(i + 1));
  for (int i = 0; i < g.data.dim_y(); ++i) cols_y.push_back("y_" + std::to_string(i + 1));
  const json meta{
      {"command", "gen-data"},
      {"version", kVersion},
      {"seed", a.seed},
      {"n_samples", a.n_samples},
      {"rejected", g.rejected},
      {"input_dim", g.data.dim_x()},
      {"output_dim", g.data.dim_y()},
      {"input_columns", cols_x},
      {"output_columns", cols_y},
      {"inputs", sys.box.names},
      {"species", sys.network.species},
      {"reactions", sys.network.reactions},
      {"rate_constants",
       {"k1 = 0.5 I/R exp(-0.3 p)", "k2 = I/R", "k3 = 2/(1 + p)", "k4 = 0.5/R", "k5 = 0.2 sqrt(p)", "k6 = 0.1 p"}},
      {"box", box},
      {"constraints", constraint_json(sys.constraints)},
      {"solver",
       {{"march_rtol", solver.march_rtol},
        {"march_atol", solver.march_atol},
        {"march_tol", solver.march_tol},
        {"march_t_max", solver.march_t_max},
        {"march_max_steps", solver.march_max_steps},
        {"newton_tol", solver.newton_tol},
        {"newton_max_iter", solver.newton_max_iter}}}};
  write_json(dir / "metadata.json", meta);
  log("wrote " + (dir / "dataset.csv").string());
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data, method, out, constraints;
  ConfigArgs config;
};

int cmd_train(const TrainArgs& a) {
  static const std::vector<std::string> methods{"cdm-t", "cdm-0", "nn", "nn-physics"};
  if (std::find(methods.begin(), methods.end(), a.method) == methods.end())
    throw ConfigError("--method must be one of cdm-t, cdm-0, nn, nn-physics");
  RunConfig cfg = build_config(a.config);
  if (cfg.has("variant") && a.method.rfind("cdm-", 0) == 0 && cfg.text("variant") != a.method)
    throw ConfigError("config variant '" + cfg.text("variant") + "' contradicts --method " + a.method);
  BenchConfig bc = cfg.bench_config();
  const SplitSpec spec = cfg.split_spec();
  const fs::path dir = make_out_dir(a.out);
  write_text(dir / "config.txt", cfg.echo());

  const Dataset data = load_dataset(a.data);
  if (data.y.cols() == 0) throw DataError("training data has no y columns");
  const bool physics = a.method == "nn-physics";
  const ConstraintSet cs = load_constraints(a.constraints, a.data, data.dim_x(), data.dim_y(), physics);
  if (a.method == "nn") bc.train.physics_weight = 0.0;

  const Method family = a.method == "cdm-t"   ? Method::cdm_t_dense
                        : a.method == "cdm-0" ? Method::cdm_0_const
                                              : Method::nn;
  const PreparedSplit ps = prepare_split(data, physics ? cs : ConstraintSet(data.dim_x(), data.dim_y(), {}), spec,
                                         0, bc.data_fraction);
  log("split " + std::to_string(ps.train.size()) + "/" + std::to_string(ps.test.size()) + "/" +
      std::to_string(ps.val.size()) + " (train/test/val)");
  bc.log = log;
  bc.on_epoch = [](int epoch, double train_loss, double val_loss) {
    if (epoch % 250 == 0)
      log("epoch " + std::to_string(epoch) + " train " + format_double(train_loss) + " val " +
          format_double(val_loss));
  };
  const auto t0 = std::chrono::steady_clock::now();
  SplitModels models;
  ensure_model(family, ps, bc, 0, spec, models);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const TrainReport& rep = models.reports.begin()->second;
  json ckpt;
  std::size_t params = 0;
  if (!models.cdm.empty()) {
    ckpt = to_json(*models.cdm.begin()->second);
    params = parameter_count(models.cdm.begin()->second->params);
  } else {
    ckpt = to_json(*models.regressor.begin()->second);
    params = parameter_count(models.regressor.begin()->second->params);
  }
  save_checkpoint((dir / "checkpoint.json").string(), ckpt);
  write_json(dir / "train_report.json", {{"method", a.method},
                                         {"epochs_run", rep.epochs_run},
                                         {"best_epoch", rep.best_epoch},
                                         {"best_val_loss", rep.best_val_loss},
                                         {"parameter_count", params},
                                         {"train_loss_trace", rep.train_loss_trace},
                                         {"val_loss_trace", rep.val_loss_trace}});
  write_json(dir / "timing.json", {{"wall_time_seconds", wall}});
  json meta = run_metadata("train", cfg);
  meta["method"] = a.method;
  meta["data"] = dataset_path(a.data).filename().string();
  meta["rows"] = data.size();
  meta["split"] = {{"index", 0}, {"train", ps.train.size()}, {"test", ps.test.size()}, {"val", ps.val.size()}};
  if (physics) meta["constraints"] = constraint_json(ps.constraints);
  write_json(dir / "metadata.json", meta);
  log("trained " + a.method + ": " + std::to_string(rep.epochs_run) + " epochs, best " +
      std::to_string(rep.best_epoch) + ", val " + format_double(rep.best_val_loss));
  return 0;
}

// ---------------------------------------------------------------------------
// sample

struct SampleArgs {
  std::string checkpoint, sampler, data, out;
  bool trace = false;
  int jobs = 1;
  ConfigArgs config;
};

int cmd_sample(const SampleArgs& a) {
  RunConfig cfg = build_config(a.config);
  const SamplerKind kind = parse_sampler(a.sampler);
  SamplerConfig sc = cfg.sampler_config(kind);
  sc.trace = a.trace;
  if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const AnyModel any = load_checkpoint(a.checkpoint);
  if (!std::holds_alternative<CdmModel>(any))
    throw VariantMismatch("sample needs a cdm checkpoint; regressors are evaluated with eval");
  const CdmModel& m = std::get<CdmModel>(any);
  if (is_time_dependent(kind) != (m.variant == Variant::time_dependent))
    throw VariantMismatch(sampler_name(kind) + " sampler cannot drive a " + variant_tag(m.variant) + " checkpoint");

  const Dataset data = load_dataset(a.data);
  if (data.dim_x() != m.dim_x())
    throw DataError("data has " + std::to_string(data.dim_x()) + " x columns, checkpoint expects " +
                    std::to_string(m.dim_x()));
  const fs::path dir = make_out_dir(a.out);
  write_text(dir / "config.txt", cfg.echo());
  log("sampling " + std::to_string(data.size()) + " rows with " + sampler_name(kind));

  const BatchSampleResult res = batch_sample(m, data.x, sc, derive_seed(cfg.seed(), {stream::sampler}), a.jobs);
  write_dataset_csv((dir / "predictions.csv").string(), Dataset{data.x, res.y});

  std::ostringstream rows;
  rows << "row,evals,converged,final_residual,error\n";
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const RowSummary& r = res.rows[i];
    rows << i << ',' << r.evals << ',' << (r.converged ? 1 : 0) << ',' << format_double(r.final_residual) << ','
         << r.error << '\n';
    log("row " + std::to_string(i) + ": " + std::to_string(r.evals) + " evals" +
        (r.error.empty() ? "" : " (" + r.error + ")"));
  }
  write_text(dir / "sample_log.csv", rows.str());

  if (a.trace) {
    fs::create_directories(dir / "trajectories");
    for (std::size_t i = 0; i < res.trajectories.size(); ++i) {
      const Trajectory& t = res.trajectories[i];
      std::ostringstream os;
      os << "iteration,residual_norm,eta\n";
      for (std::size_t k = 0; k < t.residual_norms.size(); ++k)
        os << k + 1 << ',' << format_double(t.residual_norms[k]) << ','
           << (k < t.eta_trace.size() ? format_double(t.eta_trace[k]) : std::string()) << '\n';
      write_text(dir / "trajectories" / ("row_" + std::to_string(i) + ".csv"), os.str());
    }
  }

  json meta = run_metadata("sample", cfg);
  meta["checkpoint"] = fs::path(a.checkpoint).filename().string();
  meta["sampler"] = sampler_name(kind);
  meta["T"] = sc.T;
  meta["K"] = sc.K;
  meta["rows"] = data.size();
  meta["failures"] = res.failures();
  write_json(dir / "metadata.json", meta);
  if (res.failures() > 0) {
    std::string first;
    for (const auto& r : res.rows)
      if (!r.error.empty()) {
        first = r.error;
        break;
      }
    throw SamplerDivergence(0, std::to_string(res.failures()) + " rows failed, first: " + first);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint, method, methods, data, out, constraints, split = "test";
  int jobs = 0;
  ConfigArgs config;
};

std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_method(item));
  if (out.empty()) throw ConfigError("empty method list");
  return out;
}

int eval_checkpoint(const EvalArgs& a, const RunConfig& cfg, const fs::path& dir) {
  const AnyModel any = load_checkpoint(a.checkpoint);
  const bool is_cdm_ckpt = std::holds_alternative<CdmModel>(any);
  Method method;
  if (!a.method.empty()) {
    method = parse_method(a.method);
  } else if (is_cdm_ckpt) {
    method = std::get<CdmModel>(any).variant == Variant::time_dependent ? Method::cdm_t_dense : Method::cdm_0_const;
  } else {
    method = Method::nn;
  }
  if (is_cdm(method) != is_cdm_ckpt)
    throw VariantMismatch("method " + method_name(method) + " does not fit this checkpoint");
  if (is_cdm_ckpt) {
    const bool td = std::get<CdmModel>(any).variant == Variant::time_dependent;
    if (is_time_dependent(*sampler_of(method)) != td)
      throw VariantMismatch(method_name(method) + " cannot drive a " +
                            variant_tag(std::get<CdmModel>(any).variant) + " checkpoint");
  }
  if (a.split != "test" && a.split != "all") throw ConfigError("--split must be test or all");

  const Dataset data = load_dataset(a.data);
  if (data.y.cols() == 0) throw DataError("evaluation data has no y columns");
  const ConstraintSet cs = load_constraints(a.constraints, a.data, data.dim_x(), data.dim_y(),
                                            method == Method::nn_projection);
  BenchConfig bc = cfg.bench_config();
  bc.sampler = cfg.sampler_config(SamplerKind::cdm_0_const);
  const SplitSpec spec = cfg.split_spec();
  PreparedSplit ps;
  if (a.split == "test") {
    ps = prepare_split(data, cs, spec, 0, 0.0);
  } else {
    ps.train = ps.test = data;
    ps.constraints = cs;
    if (cs.size() > 0) ps.constraints.fit_scale(data.x, data.y);
  }
  SplitModels models;
  const std::string key = detail::model_key(method);
  if (is_cdm_ckpt) {
    models.cdm[key] = std::make_shared<CdmModel>(std::get<CdmModel>(any));
    ps.standardizer = std::get<CdmModel>(any).standardizer;
  } else {
    models.regressor[key] = std::make_shared<RegressorModel>(std::get<RegressorModel>(any));
    ps.standardizer = std::get<RegressorModel>(any).standardizer;
  }
  models.reports[key] = TrainReport{};
  RunReport rep;
  rep.method = method_name(method);
  rep.splits.push_back(evaluate_method(method, ps, bc, 0, spec, models));
  rep.recompute();
  json out = to_json(rep);
  out["checkpoint"] = fs::path(a.checkpoint).filename().string();
  out["rows"] = ps.test.size();
  if (ps.constraints.size() > 0) out["constraints"] = constraint_json(ps.constraints);
  write_json(dir / "report.json", out);
  const SplitResult& s = rep.splits.front();
  if (!s.ok) throw SamplerDivergence(0, s.error);
  log(rep.method + ": test RMSE " + format_double(s.test_rmse) + ", physics RMSE " + format_double(s.physics_rmse) +
      ", max per-sample physics RMSE " + format_double(s.max_sample_physics_rmse));
  return 0;
}

int eval_ensemble(const EvalArgs& a, const RunConfig& cfg, const fs::path& dir) {
  const std::vector<Method> methods = a.methods.empty() ? all_methods() : parse_methods(a.methods);
  const Dataset data = load_dataset(a.data);
  const bool need_cs = std::any_of(methods.begin(), methods.end(), [](Method m) { return !is_cdm(m); });
  const ConstraintSet cs = load_constraints(a.constraints, a.data, data.dim_x(), data.dim_y(), need_cs);
  BenchConfig bc = cfg.bench_config();
  bc.jobs = a.jobs > 0 ? a.jobs : default_jobs();
  bc.log = log;
  const auto reports = run_ensembles(methods, data, cs, cfg.split_spec(), bc);
  json j = run_metadata("eval", cfg);
  j["reports"] = json::array();
  for (const auto& r : reports) j["reports"].push_back(to_json(r));
  write_json(dir / "report.json", j);
  write_summary_csv((dir / "summary.csv").string(), reports);
  for (const auto& r : reports)
    if (r.aggregate.count("test_rmse"))
      log(r.method + ": test RMSE " + format_double(r.stat("test_rmse").mean) + " +- " +
          format_double(r.stat("test_rmse").std) + ", physics RMSE " + format_double(r.stat("physics_rmse").mean));
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  RunConfig cfg = build_config(a.config);
  if (!a.checkpoint.empty() && !a.methods.empty()) throw ConfigError("--checkpoint and --methods are exclusive");
  const fs::path dir = make_out_dir(a.out);
  write_text(dir / "config.txt", cfg.echo());
  return a.checkpoint.empty() ? eval_ensemble(a, cfg, dir) : eval_checkpoint(a, cfg, dir);
}

// ---------------------------------------------------------------------------
// ablate

struct AblateArgs {
  std::string data, out, sweep, grid, methods, constraints;
  int jobs = 0;
  ConfigArgs config;
};

std::vector<Method> default_sweep_methods(SweepKind k) {
  switch (k) {
    case SweepKind::sigma_max: return {Method::cdm_t_dense, Method::cdm_0_const};
    case SweepKind::schedule_T:
    case SweepKind::refine_K: return {Method::cdm_t_dense};
    case SweepKind::convergence_profile: return {Method::cdm_0_const, Method::cdm_0_adapt};
    default: return all_methods();
  }
}

int cmd_ablate(const AblateArgs& a) {
  RunConfig cfg = build_config(a.config);
  std::string kind_name = a.sweep;
  std::vector<double> values;
  if (!a.grid.empty()) {
    const auto eq = a.grid.find('=');
    if (eq == std::string::npos) throw ConfigError("--grid expects name=v1,v2,...");
    const std::string name = a.grid.substr(0, eq);
    if (!kind_name.empty() && kind_name != name) throw ConfigError("--sweep and --grid disagree");
    kind_name = name;
    std::stringstream ss(a.grid.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) values.push_back(parse_double(item));
    if (values.empty()) throw ConfigError("--grid has no values");
  }
  if (kind_name.empty()) throw ConfigError("--sweep or --grid is required");
  const SweepKind kind = parse_sweep(kind_name);
  if (values.empty()) values = default_grid(kind);
  const std::vector<Method> methods = a.methods.empty() ? default_sweep_methods(kind) : parse_methods(a.methods);

  const fs::path dir = make_out_dir(a.out);
  write_text(dir / "config.txt", cfg.echo());
  const Dataset data = load_dataset(a.data);
  const bool need_cs = std::any_of(methods.begin(), methods.end(), [](Method m) { return !is_cdm(m); });
  const ConstraintSet cs = load_constraints(a.constraints, a.data, data.dim_x(), data.dim_y(), need_cs);
  BenchConfig bc = cfg.bench_config();
  bc.jobs = a.jobs > 0 ? a.jobs : default_jobs();
  bc.log = log;
  const auto reports = sweep(kind, values, methods, data, cs, cfg.split_spec(), bc);

  const std::string coordinate = kind == SweepKind::param_count ? "param_count" : sweep_name(kind);
  json j = run_metadata("ablate", cfg);
  j["sweep"] = sweep_name(kind);
  j["grid"] = values;
  j["reports"] = json::array();
  for (const auto& row : reports) {
    json r = json::array();
    for (const auto& rep : row) r.push_back(to_json(rep));
    j["reports"].push_back(r);
  }
  write_json(dir / "report.json", j);
  if (kind == SweepKind::convergence_profile)
    write_profile_csv((dir / "curves.csv").string(), reports.front());
  else
    write_curves_csv((dir / "curves.csv").string(), coordinate, reports);
  log("wrote " + (dir / "curves.csv").string());
  return 0;
}

int exit_code(ErrorClass c) {
  switch (c) {
    case ErrorClass::usage: return 2;
    case ErrorClass::data: return 3;
    case ErrorClass::numerical: return 4;
  }
  return 1;
}

int report_error(const std::string& cls, const std::string& kind, const std::string& msg, const std::string& out,
                 int code) {
  const json j{{"error", {{"class", cls}, {"kind", kind}, {"message", msg}, {"exit_code", code}}}};
  std::cerr << j.dump() << '\n';
  if (!out.empty()) {
    std::error_code ec;
    fs::create_directories(out, ec);
    std::ofstream f(fs::path(out) / "error.json");
    if (f) f << j.dump(2) << '\n';
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional denoising surrogates: data generation, training, sampling and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "generate the synthetic steady-state benchmark");
  c_gen->add_option("--out", gen.out, "output directory")->required();
  c_gen->add_option("--n-samples", gen.n_samples, "number of samples")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "dataset seed")->capture_default_str();
  c_gen->add_option("--jobs", gen.jobs, "solver threads")->capture_default_str();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train one model on split 0 of a dataset");
  c_train->add_option("--data", train.data, "dataset CSV or directory")->required();
  c_train->add_option("--method", train.method, "cdm-t, cdm-0, nn or nn-physics")->required();
  c_train->add_option("--out", train.out, "run directory")->required();
  c_train->add_option("--constraints", train.constraints, "constraint definition file");
  add_config_options(c_train, train.config);

  SampleArgs samp;
  auto* c_sample = app.add_subcommand("sample", "draw predictions from a trained denoiser");
  c_sample->add_option("--checkpoint", samp.checkpoint, "checkpoint JSON")->required();
  c_sample->add_option("--sampler", samp.sampler, "cdm-t-dense, cdm-t-sparse, cdm-t-custom, cdm-0-const, cdm-0-adapt")
      ->required();
  c_sample->add_option("--data", samp.data, "CSV whose x columns are the conditions")->required();
  c_sample->add_option("--out", samp.out, "run directory")->required();
  c_sample->add_flag("--trace", samp.trace, "write per-row trajectories");
  c_sample->add_option("--jobs", samp.jobs, "row threads")->capture_default_str();
  add_config_options(c_sample, samp.config);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint, or an ensemble of methods over splits");
  c_eval->add_option("--checkpoint", ev.checkpoint, "checkpoint JSON");
  c_eval->add_option("--method", ev.method, "method applied to the checkpoint (e.g. nn+projection)");
  c_eval->add_option("--methods,--method-matrix", ev.methods, "comma-separated methods for an ensemble run");
  c_eval->add_option("--data", ev.data, "dataset CSV or directory")->required();
  c_eval->add_option("--out", ev.out, "run directory")->required();
  c_eval->add_option("--constraints", ev.constraints, "constraint definition file");
  c_eval->add_option("--split", ev.split, "test (split 0) or all rows")->capture_default_str();
  c_eval->add_option("--jobs", ev.jobs, "concurrent splits (default: all cores)");
  add_config_options(c_eval, ev.config);

  AblateArgs ab;
  auto* c_ablate = app.add_subcommand("ablate", "run an ablation sweep over seeded splits");
  c_ablate->add_option("--data", ab.data, "dataset CSV or directory")->required();
  c_ablate->add_option("--out", ab.out, "run directory")->required();
  c_ablate->add_option("--sweep", ab.sweep,
                       "sigma_max, schedule_T, refine_K, param_count, data_fraction or convergence_profile");
  c_ablate->add_option("--grid", ab.grid, "sweep values, e.g. sigma_max=0.1,0.4,1.0");
  c_ablate->add_option("--methods,--method-matrix", ab.methods, "comma-separated methods");
  c_ablate->add_option("--constraints", ab.constraints, "constraint definition file");
  c_ablate->add_option("--jobs", ab.jobs, "concurrent splits (default: all cores)");
  add_config_options(c_ablate, ab.config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", "parse_error", e.what(), "", 2);
  }

  const std::string out = c_gen->parsed()      ? gen.out
                          : c_train->parsed()  ? train.out
                          : c_sample->parsed() ? samp.out
                          : c_eval->parsed()   ? ev.out
                                               : ab.out;
  try {
    if (c_gen->parsed()) return cmd_gen_data(gen);
    if (c_train->parsed()) return cmd_train(train);
    if (c_sample->parsed()) return cmd_sample(samp);
    if (c_eval->parsed()) return cmd_eval(ev);
    if (c_ablate->parsed()) return cmd_ablate(ab);
  } catch (const Error& e) {
    static const char* names[] = {"usage", "data", "numerical"};
    return report_error(names[static_cast<int>(e.error_class())], e.kind(), e.what(), out,
                        exit_code(e.error_class()));
  } catch (const std::exception& e) {
    return report_error("internal", "internal_error", e.what(), out, 1);
  }
  return 0;
}
