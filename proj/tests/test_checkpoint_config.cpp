#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cdm/checkpoint.hpp"
#include "cdm/config.hpp"

using namespace cdm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("cdm_ckpt_" + std::to_string(::getpid()))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

Standardizer some_standardizer() {
  Dataset d;
  d.x = Matrix::Random(20, 3);
  d.y = Matrix::Random(20, 5) * 3.0;
  return Standardizer::fit(d);
}

CdmModel some_cdm(Variant v) {
  Rng rng(9);
  CdmModel m = make_cdm(cdm_architecture(3, 5, v), v, some_standardizer(), rng);
  m.schedule = {0.4, 0.008};
  return m;
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir;
  for (Variant v : {Variant::time_dependent, Variant::time_independent}) {
    const CdmModel m = some_cdm(v);
    save_checkpoint(dir / "a.json", to_json(m));
    const CdmModel back = std::get<CdmModel>(load_checkpoint(dir / "a.json"));
    save_checkpoint(dir / "b.json", to_json(back));
    EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
    EXPECT_EQ(flatten(back.params), flatten(m.params));
    EXPECT_EQ(back.variant, v);
    EXPECT_EQ(back.schedule.sigma_max, 0.4);
    EXPECT_EQ(back.standardizer.std_y, m.standardizer.std_y);
  }
}

TEST(Checkpoint, LoadedModelGivesIdenticalOutputs) {
  TempDir dir;
  const CdmModel m = some_cdm(Variant::time_dependent);
  save_checkpoint(dir / "m.json", to_json(m));
  const CdmModel back = std::get<CdmModel>(load_checkpoint(dir / "m.json"));
  const Vector y = Vector::LinSpaced(5, -1, 1), x = Vector::Constant(3, 0.2);
  EXPECT_EQ(denoise(m, y, x, 0.3).y_hat, denoise(back, y, x, 0.3).y_hat);
}

TEST(Checkpoint, VariantTagAndNoiseBranchPresence) {
  const json t = to_json(some_cdm(Variant::time_dependent));
  const json z = to_json(some_cdm(Variant::time_independent));
  EXPECT_EQ(t.at("variant"), "cdm-t");
  EXPECT_EQ(z.at("variant"), "cdm-0");
  EXPECT_TRUE(t.at("params").contains("noise_mlp"));
  EXPECT_FALSE(z.at("params").contains("noise_mlp"));
}

TEST(Checkpoint, RegressorRoundTrip) {
  TempDir dir;
  Rng rng(4);
  RegressorModel r = make_regressor(regressor_architecture(3, 5, 1.3), some_standardizer(), rng);
  r.physics_weight = 2.5;
  const json j = to_json(r);
  EXPECT_EQ(j.at("variant"), "nn-physics");
  save_checkpoint(dir / "r.json", j);
  const RegressorModel back = std::get<RegressorModel>(load_checkpoint(dir / "r.json"));
  EXPECT_EQ(back.physics_weight, 2.5);
  const Matrix x = Matrix::Random(4, 3);
  EXPECT_EQ(predict(back, x), predict(r, x));
}

TEST(Checkpoint, CorruptFilesRaiseDataError) {
  TempDir dir;
  {
    std::ofstream(dir / "bad.json") << "{ not json";
  }
  EXPECT_THROW(load_checkpoint(dir / "bad.json"), DataError);
  EXPECT_THROW(load_checkpoint(dir / "missing.json"), DataError);

  json j = to_json(some_cdm(Variant::time_independent));
  j["variant"] = "cdm-t";
  EXPECT_THROW(model_from_json(j), DataError);
  j = to_json(some_cdm(Variant::time_independent));
  j["version"] = 99;
  EXPECT_THROW(model_from_json(j), DataError);
  j = to_json(some_cdm(Variant::time_independent));
  j["params"]["decoder"][0]["bias"].erase(0);
  EXPECT_THROW(model_from_json(j), DataError);
  j = to_json(some_cdm(Variant::time_independent));
  j["standardizer"]["mean_y"] = std::vector<double>{0.0};
  EXPECT_THROW(model_from_json(j), DataError);
}

TEST(Config, DefaultsMatchReferenceSettings) {
  const RunConfig c;
  const TrainConfig t = c.train_config();
  EXPECT_EQ(t.batch_size, 128);
  EXPECT_EQ(t.lr, 1e-3);
  EXPECT_EQ(t.min_epochs, 4500);
  EXPECT_EQ(t.patience, 20);
  EXPECT_EQ(t.sigma_max, 1.0);
  EXPECT_EQ(t.schedule_s, 0.008);
  const SamplerConfig s = c.sampler_config(SamplerKind::cdm_0_const);
  EXPECT_EQ(s.eta, 0.1);
  EXPECT_EQ(s.n_max, 1300);
  EXPECT_EQ(s.eps_conv, 1e-5);
  const SplitSpec sp = c.split_spec();
  EXPECT_EQ(sp.n_splits, 10);
  EXPECT_EQ(sp.fractions.train, 0.85);
}

TEST(Config, LoadsFileWithComments) {
  RunConfig c;
  std::istringstream in("# run\nsigma_max = 0.4\n\n  seed=12  # trailing\nvariant = cdm-t\n");
  c.load(in, "test.cfg");
  EXPECT_EQ(c.real("sigma_max"), 0.4);
  EXPECT_EQ(c.seed(), 12u);
  EXPECT_EQ(c.train_config().variant, Variant::time_dependent);
  EXPECT_NE(c.echo().find("sigma_max = 0.4\n"), std::string::npos);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  RunConfig c;
  EXPECT_THROW(c.set("sigma", "1"), ConfigError);
  EXPECT_THROW(c.set("batch_size", "12.5"), ConfigError);
  EXPECT_THROW(c.set("seed", "-3"), ConfigError);
  EXPECT_THROW(c.set("match_regressor_params", "yes"), ConfigError);
  std::istringstream in("lr = 0.01\nbogus = 1\n");
  try {
    c.load(in, "x.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:2"), std::string::npos);
  }
}

TEST(Config, CustomLadderNeedsBothSettings) {
  RunConfig c;
  EXPECT_THROW(c.sampler_config(SamplerKind::cdm_t_custom), ConfigError);
  c.set("schedule_T", "50");
  c.set("refine_K", "1");
  const SamplerConfig s = c.sampler_config(SamplerKind::cdm_t_custom);
  EXPECT_EQ(s.T, 50);
  EXPECT_EQ(s.K, 1);
}

TEST(Config, EnvironmentSeedOverridesFile) {
  RunConfig c;
  c.set("seed", "5");
  ::setenv("CDM_SEED", "42", 1);
  c.apply_env();
  ::unsetenv("CDM_SEED");
  EXPECT_EQ(c.seed(), 42u);
  EXPECT_EQ(c.train_config().seed, 42u);
}

TEST(Config, EchoListsEveryDefaultSorted) {
  const std::string e = RunConfig{}.echo();
  EXPECT_EQ(e.find("batch_size = 128\n"), 0u);
  EXPECT_EQ(e.find("variant"), std::string::npos);
  std::size_t lines = 0;
  for (const auto& [k, key] : RunConfig::keys()) lines += key.default_value.empty() ? 0 : 1;
  EXPECT_EQ(static_cast<std::size_t>(std::count(e.begin(), e.end(), '\n')), lines);
}
