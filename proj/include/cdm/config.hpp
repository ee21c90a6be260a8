#pragma once

// Flat key=value run configuration shared by the command-line tools.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cdm/data.hpp"
#include "cdm/errors.hpp"
#include "cdm/evalbench.hpp"
#include "cdm/samplers.hpp"
#include "cdm/training.hpp"

namespace cdm {

inline constexpr const char* kVersion = "0.1.0";

class RunConfig {
 public:
  enum class Type { real, integer, seed, text, flag };

  struct Key {
    Type type;
    std::string default_value;
    std::string help;
  };

  /// Every recognized key with its default.
  static const std::map<std::string, Key>& keys() {
    static const std::map<std::string, Key> k{
        {"variant", {Type::text, "", "cdm-t or cdm-0; must agree with --method when set"}},
        {"sigma_max", {Type::real, "1", "maximum noise level"}},
        {"schedule_s", {Type::real, "0.008", "sine schedule offset"}},
        {"batch_size", {Type::integer, "128", "mini-batch size"}},
        {"lr", {Type::real, "0.001", "Adam learning rate"}},
        {"min_epochs", {Type::integer, "4500", "epochs before early stopping may trigger"}},
        {"max_epochs", {Type::integer, "20000", "hard epoch cap"}},
        {"patience", {Type::integer, "20", "early-stopping patience in epochs"}},
        {"physics_weight", {Type::real, "1", "constraint penalty weight of the physics regressor"}},
        {"seed", {Type::seed, "0", "master seed"}},
        {"val_probes", {Type::integer, "16", "frozen noise probes per validation sample"}},
        {"width_scale", {Type::real, "1", "common factor on hidden widths"}},
        {"match_regressor_params", {Type::flag, "1", "size the regressor to the CDM parameter count"}},
        {"eta", {Type::real, "0.1", "constant fixed-point step"}},
        {"eta_base", {Type::real, "1", "adaptive fixed-point step base"}},
        {"n_max", {Type::integer, "1300", "fixed-point evaluation budget"}},
        {"eps_conv", {Type::real, "1e-05", "fixed-point convergence threshold"}},
        {"delta", {Type::real, "1e-08", "adaptive step denominator guard"}},
        {"init_sigma", {Type::real, "", "initial state scale (defaults to sigma_max)"}},
        {"schedule_T", {Type::integer, "", "ladder length for cdm-t-custom"}},
        {"refine_K", {Type::integer, "", "refinements per level for cdm-t-custom"}},
        {"n_splits", {Type::integer, "10", "ensemble splits"}},
        {"train_fraction", {Type::real, "0.85", "train share of each split"}},
        {"test_fraction", {Type::real, "0.105", "test share of each split"}},
        {"val_fraction", {Type::real, "0.045", "validation share of each split"}},
        {"data_fraction", {Type::real, "0", "train subsample as a share of all samples (0 = full)"}},
    };
    return k;
  }

  RunConfig() {
    for (const auto& [name, key] : keys())
      if (!key.default_value.empty()) values_[name] = key.default_value;
  }

  void set(const std::string& name, const std::string& value) {
    const auto it = keys().find(name);
    if (it == keys().end()) throw ConfigError("unknown config key '" + name + "'");
    if (value.empty()) {
      values_.erase(name);
      return;
    }
    check_type(name, it->second.type, value);
    values_[name] = value;
  }

  /// Parses `key = value` lines; '#' starts a comment.
  void load(std::istream& in, const std::string& source) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
      try {
        set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    load(in, path);
  }

  /// CDM_SEED, when set, replaces the configured seed.
  void apply_env() {
    if (const char* s = std::getenv("CDM_SEED"); s && *s) set("seed", s);
  }

  bool has(const std::string& name) const { return values_.count(name) > 0; }

  std::string text(const std::string& name) const {
    const auto it = values_.find(name);
    return it == values_.end() ? std::string() : it->second;
  }
  double real(const std::string& name) const { return parse_double(require(name)); }
  int integer(const std::string& name) const { return std::stoi(require(name)); }
  std::uint64_t seed() const { return std::stoull(require("seed")); }
  bool flag(const std::string& name) const { return require(name) == "1"; }

  std::optional<double> optional_real(const std::string& name) const {
    return has(name) ? std::optional<double>(real(name)) : std::nullopt;
  }
  std::optional<int> optional_integer(const std::string& name) const {
    return has(name) ? std::optional<int>(integer(name)) : std::nullopt;
  }

  TrainConfig train_config() const {
    TrainConfig c;
    c.batch_size = integer("batch_size");
    c.lr = real("lr");
    c.min_epochs = integer("min_epochs");
    c.max_epochs = integer("max_epochs");
    c.patience = integer("patience");
    c.sigma_max = real("sigma_max");
    c.schedule_s = real("schedule_s");
    c.seed = seed();
    c.physics_weight = real("physics_weight");
    c.val_probes = integer("val_probes");
    c.width_scale = real("width_scale");
    if (has("variant")) c.variant = parse_variant(text("variant"));
    c.validate();
    return c;
  }

  /// Sampler settings. Ladder length and refinement count apply to the
  /// custom schedule sampler only; the dense and sparse presets are fixed.
  SamplerConfig sampler_config(SamplerKind kind) const {
    SamplerConfig c = SamplerConfig::of(kind);
    if (kind == SamplerKind::cdm_t_custom) {
      if (!has("schedule_T") || !has("refine_K"))
        throw ConfigError("cdm-t-custom needs schedule_T and refine_K");
      c.T = integer("schedule_T");
      c.K = integer("refine_K");
    }
    c.eta = real("eta");
    c.eta_base = real("eta_base");
    c.n_max = integer("n_max");
    c.eps_conv = real("eps_conv");
    c.delta = real("delta");
    c.init_sigma = optional_real("init_sigma");
    c.validate();
    return c;
  }

  SplitSpec split_spec() const {
    SplitSpec s;
    s.fractions = {real("train_fraction"), real("test_fraction"), real("val_fraction")};
    s.n_splits = integer("n_splits");
    s.master_seed = seed();
    s.validate();
    return s;
  }

  BenchConfig bench_config() const {
    BenchConfig b;
    b.train = train_config();
    b.sampler = sampler_config(SamplerKind::cdm_0_const);
    b.schedule_T = optional_integer("schedule_T");
    b.refine_K = optional_integer("refine_K");
    b.data_fraction = real("data_fraction");
    b.match_regressor_params = flag("match_regressor_params");
    if (b.data_fraction < 0.0 || b.data_fraction > 1.0) throw ConfigError("data_fraction must lie in [0, 1]");
    return b;
  }

  /// Effective configuration, one sorted `key = value` line per set key.
  std::string echo() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
    return os.str();
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  }

  const std::string& require(const std::string& name) const {
    const auto it = values_.find(name);
    if (it == values_.end()) throw ConfigError("config key '" + name + "' is not set");
    return it->second;
  }

  static void check_type(const std::string& name, Type type, const std::string& v) {
    try {
      std::size_t used = 0;
      switch (type) {
        case Type::real:
          parse_double(v);
          return;
        case Type::integer:
          std::stoi(v, &used);
          break;
        case Type::seed:
          if (v.front() == '-') throw std::invalid_argument("negative");
          std::stoull(v, &used);
          break;
        case Type::flag:
          if (v != "0" && v != "1") throw std::invalid_argument("flag");
          return;
        case Type::text:
          return;
      }
      if (used != v.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("bad value '" + v + "' for config key '" + name + "'");
    }
  }
};

}  // namespace cdm
