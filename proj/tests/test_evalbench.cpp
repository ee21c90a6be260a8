#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "cdm/evalbench.hpp"

using namespace cdm;

namespace {

struct Fixture {
  BenchmarkSystem sys = default_benchmark();
  Dataset data;
  Fixture() { data = generate_dataset(sys, 120, 5).data; }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

BenchConfig tiny_config() {
  BenchConfig c;
  c.train.min_epochs = 2;
  c.train.max_epochs = 2;
  c.train.batch_size = 32;
  c.train.width_scale = 0.5;
  c.train.val_probes = 2;
  c.sampler.n_max = 50;
  return c;
}

SplitSpec two_splits() {
  SplitSpec s;
  s.n_splits = 2;
  s.master_seed = 77;
  return s;
}

std::string read_all(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Metrics, RmseOfKnownDifference) {
  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 1, 2, 3, 6;
  EXPECT_DOUBLE_EQ(rmse(a, b), 1.0);
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_THROW(rmse(a, Matrix::Zero(2, 3)), ShapeError);
}

TEST(Metrics, RmseIsPermutationInvariant) {
  Matrix p = Matrix::Random(6, 3), t = Matrix::Random(6, 3);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.setIdentity();
  std::swap(perm.indices()[0], perm.indices()[4]);
  std::swap(perm.indices()[2], perm.indices()[5]);
  EXPECT_NEAR(rmse(perm * p, perm * t), rmse(p, t), 1e-15);
}

TEST(Metrics, PhysicsRmseNormalizesByScale) {
  AffineConstraint c{"sum", Vector::Ones(2), 1.0, Vector::Zero(1)};
  ConstraintSet cs(1, 2, {c});
  cs.set_scale(Vector::Constant(1, 2.0));
  Matrix x = Matrix::Zero(2, 1), y(2, 2);
  y << 1.0, 0.0,  // residual 0
      2.0, 1.0;   // residual 2 -> normalized 1
  EXPECT_DOUBLE_EQ(physics_rmse(cs, x, y), std::sqrt(0.5));
  const auto per = physics_rmse_per_sample(cs, x, y);
  EXPECT_EQ(per, (std::vector<double>{0.0, 1.0}));
}

TEST(Stats, MeanAndSampleStd) {
  const Stat s = mean_std({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0});
  EXPECT_DOUBLE_EQ(s.mean, 5.0);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(32.0 / 7.0));
  EXPECT_EQ(mean_std({3.0}).std, 0.0);
}

TEST(Report, SingleSplitIsFlaggedDegenerate) {
  RunReport r;
  r.splits.resize(1);
  r.splits[0].test_rmse = 0.1;
  r.recompute();
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.stat("test_rmse").std, 0.0);
  r.splits.push_back(r.splits[0]);
  r.splits[1].test_rmse = 0.3;
  r.recompute();
  EXPECT_FALSE(r.degenerate);
  EXPECT_DOUBLE_EQ(r.stat("test_rmse").mean, 0.2);
}

TEST(Report, FailedSplitsAreExcludedAndMarkPartial) {
  RunReport r;
  r.splits.resize(3);
  r.splits[0].test_rmse = 1.0;
  r.splits[1].ok = false;
  r.splits[1].test_rmse = 100.0;
  r.splits[2].test_rmse = 3.0;
  r.recompute();
  EXPECT_TRUE(r.partial);
  EXPECT_DOUBLE_EQ(r.stat("test_rmse").mean, 2.0);
}

TEST(Report, JsonRoundTripReproducesAggregates) {
  RunReport r;
  r.method = "cdm-0-const";
  r.coordinates["sigma_max"] = 0.4;
  for (int i = 0; i < 3; ++i) {
    SplitResult s;
    s.split = i;
    s.test_rmse = 0.01 * (i + 1);
    s.physics_rmse = 1e-3 / (i + 1);
    s.evals_used = 100 + i;
    s.residual_profile = {1.0, 0.5 / (i + 1)};
    r.splits.push_back(s);
  }
  r.recompute();
  RunReport back = run_report_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(r).dump());
  back.recompute();
  EXPECT_EQ(back.stat("test_rmse").mean, r.stat("test_rmse").mean);
  EXPECT_EQ(back.residual_profile_mean, r.residual_profile_mean);
}

TEST(Methods, NamesRoundTrip) {
  for (Method m : all_methods()) EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_EQ(method_name(Method::nn_projection), "nn+projection");
  EXPECT_THROW(parse_method("gp"), ConfigError);
  EXPECT_FALSE(sampler_of(Method::nn).has_value());
  EXPECT_EQ(*sampler_of(Method::cdm_0_adapt), SamplerKind::cdm_0_adapt);
}

TEST(Sweeps, GridsCarryTheirCoordinate) {
  const BenchConfig base;
  const auto t = sweep_grid(SweepKind::schedule_T, {3, 50}, base);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(*t[1].config.schedule_T, 50);
  EXPECT_EQ(*t[1].config.refine_K, 1);
  EXPECT_EQ(t[1].coordinates.at("schedule_T"), 50.0);
  const auto k = sweep_grid(SweepKind::refine_K, {10}, base);
  EXPECT_EQ(*k[0].config.schedule_T, 3);
  EXPECT_EQ(sweep_grid(SweepKind::sigma_max, {0.4}, base)[0].config.train.sigma_max, 0.4);
  EXPECT_THROW(sweep_grid(SweepKind::sigma_max, {}, base), ConfigError);
  EXPECT_EQ(parse_sweep("data_fraction"), SweepKind::data_fraction);
}

TEST(Splits, PreparedSplitFitsOnTrainOnly) {
  const auto& f = fixture();
  const PreparedSplit ps = prepare_split(f.data, f.sys.constraints, two_splits(), 0, 0.0);
  EXPECT_EQ(ps.train.size() + ps.val.size() + ps.test.size(), f.data.size());
  const Standardizer st = Standardizer::fit(ps.train);
  EXPECT_EQ(st.mean_y, ps.standardizer.mean_y);
  const PreparedSplit sub = prepare_split(f.data, f.sys.constraints, two_splits(), 0, 0.25);
  EXPECT_EQ(sub.train.size(), 30);
  EXPECT_EQ(sub.test.x, ps.test.x);
}

TEST(Ensemble, RunsEveryMethodOnEverySplit) {
  const auto& f = fixture();
  const auto reports = run_ensembles(all_methods(), f.data, f.sys.constraints, two_splits(), tiny_config());
  ASSERT_EQ(reports.size(), all_methods().size());
  for (const auto& r : reports) {
    ASSERT_EQ(r.splits.size(), 2u);
    for (const auto& s : r.splits) EXPECT_TRUE(s.ok) << r.method << ": " << s.error;
    EXPECT_FALSE(r.degenerate);
    EXPECT_TRUE(std::isfinite(r.stat("test_rmse").mean));
  }
  const auto& dense = reports[0];
  EXPECT_EQ(dense.stat("evals_used").mean, 1300.0);
  EXPECT_LE(reports[2].stat("evals_used").mean, 50.0);
  EXPECT_LT(reports[5].stat("physics_rmse").mean, 1e-8);
  // sibling methods share the trained model
  EXPECT_EQ(reports[0].splits[0].param_count, reports[1].splits[0].param_count);
  EXPECT_EQ(reports[4].splits[1].best_val_loss, reports[5].splits[1].best_val_loss);
}

TEST(Ensemble, ThreadCountAndModelStoreDoNotChangeResults) {
  const auto& f = fixture();
  const std::vector<Method> methods{Method::cdm_0_const, Method::nn};
  BenchConfig cfg = tiny_config();
  const auto serial = run_ensembles(methods, f.data, f.sys.constraints, two_splits(), cfg);
  cfg.jobs = 2;
  cfg.store = std::make_shared<ModelStore>();
  const auto parallel = run_ensembles(methods, f.data, f.sys.constraints, two_splits(), cfg);
  EXPECT_EQ(cfg.store->entries.size(), 2u);
  const auto cached = run_ensembles(methods, f.data, f.sys.constraints, two_splits(), cfg);
  for (std::size_t m = 0; m < methods.size(); ++m) {
    EXPECT_EQ(to_json(serial[m]).dump(), to_json(parallel[m]).dump());
    EXPECT_EQ(to_json(serial[m]).dump(), to_json(cached[m]).dump());
  }
}

TEST(Ensemble, FailuresAreRecordedPerSplit) {
  const auto& f = fixture();
  const ConstraintSet none(3, 5, {});
  const auto r = run_ensemble(Method::nn_projection, f.data, none, two_splits(), tiny_config());
  EXPECT_TRUE(r.partial);
  EXPECT_FALSE(r.splits[0].ok);
  EXPECT_NE(r.splits[0].error.find("constraint"), std::string::npos);
}

TEST(Files, CurvesHaveOneRowPerPointAndMethod) {
  const auto& f = fixture();
  const auto reports = sweep(SweepKind::sigma_max, {0.2, 1.0}, {Method::cdm_0_const}, f.data,
                             f.sys.constraints, two_splits(), tiny_config());
  const auto path = (std::filesystem::temp_directory_path() / "cdm_curves_test.csv").string();
  write_curves_csv(path, "sigma_max", reports);
  const std::string text = read_all(path);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(text.substr(0, 17), "sigma_max,method,");
  EXPECT_NE(text.find("\n0.2,cdm-0-const,"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(Files, ProfileRowsFollowIterations) {
  RunReport r;
  r.method = "cdm-0-const";
  r.splits.resize(2);
  r.splits[0].residual_profile = {1.0, 0.5};
  r.splits[1].residual_profile = {3.0};
  r.recompute();
  EXPECT_EQ(r.residual_profile_mean, (std::vector<double>{2.0, 1.75}));
  const auto path = (std::filesystem::temp_directory_path() / "cdm_profile_test.csv").string();
  write_profile_csv(path, {r});
  EXPECT_EQ(read_all(path), "iteration,method,residual_mean,residual_std\n1,cdm-0-const,2," +
                                format_double(std::sqrt(2.0)) + "\n2,cdm-0-const,1.75," +
                                format_double(std::sqrt(3.125)) + "\n");
  std::filesystem::remove(path);
}
