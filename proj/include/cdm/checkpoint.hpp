#pragma once

// JSON checkpoints for trained denoisers and regressors. Doubles are written
// in shortest round-trip form, so save -> load -> save is byte-identical.

#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdm/errors.hpp"
#include "cdm/model.hpp"

namespace cdm {

using json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

namespace ckpt {

inline json vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vec(const json& j, const std::string& what) {
  if (!j.is_array()) throw DataError("checkpoint field '" + what + "' is not an array");
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json layer(const DenseLayer& l) {
  return {{"name", l.name},
          {"activation", l.activation == Activation::gelu ? "gelu" : "identity"},
          {"in", l.in_dim()},
          {"out", l.out_dim()},
          {"weights", std::vector<double>(l.weights.data(), l.weights.data() + l.weights.size())},
          {"bias", vec(l.bias)}};
}

inline DenseLayer layer(const json& j) {
  DenseLayer l;
  l.name = j.at("name").get<std::string>();
  const std::string act = j.at("activation").get<std::string>();
  if (act != "gelu" && act != "identity") throw DataError("layer " + l.name + ": unknown activation " + act);
  l.activation = act == "gelu" ? Activation::gelu : Activation::identity;
  const int in = j.at("in").get<int>(), out = j.at("out").get<int>();
  const auto w = j.at("weights").get<std::vector<double>>();
  if (w.size() != static_cast<std::size_t>(in) * static_cast<std::size_t>(out))
    throw DataError("layer " + l.name + ": weight count does not match shape");
  l.weights = Eigen::Map<const Matrix>(w.data(), out, in);
  l.bias = vec(j.at("bias"), l.name + ".bias");
  if (l.bias.size() != out) throw DataError("layer " + l.name + ": bias length does not match shape");
  return l;
}

inline json layers(const std::vector<DenseLayer>& ls) {
  json a = json::array();
  for (const auto& l : ls) a.push_back(layer(l));
  return a;
}

inline std::vector<DenseLayer> layers(const json& j) {
  std::vector<DenseLayer> out;
  for (const auto& l : j) out.push_back(layer(l));
  return out;
}

inline json params(const NetworkParams& p) {
  json j{{"encoder_x", layers(p.encoder_x)},
         {"decoder_norm", {{"gain", vec(p.decoder_norm.gain)},
                           {"offset", vec(p.decoder_norm.offset)},
                           {"epsilon", p.decoder_norm.epsilon}}},
         {"decoder", layers(p.decoder_layers)},
         {"y_stream_masked", p.y_stream_masked}};
  if (p.has_y_stream()) j["encoder_y"] = layers(p.encoder_y);
  if (p.noise_mlp) {
    j["noise_mlp"] = layers(*p.noise_mlp);
    j["embed_dim"] = p.embed_dim;
  }
  return j;
}

inline NetworkParams params(const json& j) {
  NetworkParams p;
  if (j.contains("encoder_y")) p.encoder_y = layers(j["encoder_y"]);
  p.encoder_x = layers(j.at("encoder_x"));
  if (j.contains("noise_mlp")) {
    p.noise_mlp = layers(j["noise_mlp"]);
    p.embed_dim = j.at("embed_dim").get<int>();
  }
  const json& ln = j.at("decoder_norm");
  p.decoder_norm.gain = vec(ln.at("gain"), "decoder_norm.gain");
  p.decoder_norm.offset = vec(ln.at("offset"), "decoder_norm.offset");
  p.decoder_norm.epsilon = ln.at("epsilon").get<double>();
  p.decoder_layers = layers(j.at("decoder"));
  p.y_stream_masked = j.value("y_stream_masked", false);
  return p;
}

inline json arch(const Architecture& a) {
  return {{"dim_x", a.dim_x},           {"dim_y", a.dim_y},
          {"width_y", a.width_y},       {"width_x", a.width_x},
          {"width_noise", a.width_noise}, {"embed_dim", a.embed_dim},
          {"width_decoder", a.width_decoder}, {"y_stream", a.y_stream},
          {"time_dependent", a.time_dependent}, {"reconstruct_x", a.reconstruct_x}};
}

inline Architecture arch(const json& j) {
  Architecture a;
  a.dim_x = j.at("dim_x").get<int>();
  a.dim_y = j.at("dim_y").get<int>();
  a.width_y = j.at("width_y").get<int>();
  a.width_x = j.at("width_x").get<int>();
  a.width_noise = j.at("width_noise").get<int>();
  a.embed_dim = j.at("embed_dim").get<int>();
  a.width_decoder = j.at("width_decoder").get<int>();
  a.y_stream = j.at("y_stream").get<bool>();
  a.time_dependent = j.at("time_dependent").get<bool>();
  a.reconstruct_x = j.at("reconstruct_x").get<bool>();
  return a;
}

inline json standardizer(const Standardizer& s) {
  return {{"mean_x", vec(s.mean_x)}, {"std_x", vec(s.std_x)}, {"mean_y", vec(s.mean_y)}, {"std_y", vec(s.std_y)}};
}

inline Standardizer standardizer(const json& j) {
  return {vec(j.at("mean_x"), "mean_x"), vec(j.at("std_x"), "std_x"), vec(j.at("mean_y"), "mean_y"),
          vec(j.at("std_y"), "std_y")};
}

// Rejects parameter tensors that disagree with the declared architecture.
inline void check_consistent(const NetworkParams& p, const Architecture& a) {
  Rng rng(0);
  const NetworkParams ref = init_network(a, rng);
  const auto got = tensors(p);
  const auto want = tensors(ref);
  if (got.size() != want.size() || p.time_dependent() != ref.time_dependent() ||
      p.has_y_stream() != ref.has_y_stream())
    throw DataError("checkpoint parameters do not match the declared architecture");
  for (std::size_t i = 0; i < got.size(); ++i)
    if (got[i].size() != want[i].size())
      throw DataError("checkpoint tensor " + std::to_string(i) + " has the wrong size");
}

}  // namespace ckpt

inline json to_json(const CdmModel& m) {
  return {{"format", "cdm-checkpoint"},
          {"version", kCheckpointVersion},
          {"kind", "cdm"},
          {"variant", variant_tag(m.variant)},
          {"architecture", ckpt::arch(m.arch)},
          {"schedule", {{"sigma_max", m.schedule.sigma_max}, {"s", m.schedule.s}}},
          {"standardizer", ckpt::standardizer(m.standardizer)},
          {"parameter_count", parameter_count(m.params)},
          {"params", ckpt::params(m.params)}};
}

inline json to_json(const RegressorModel& m) {
  return {{"format", "cdm-checkpoint"},
          {"version", kCheckpointVersion},
          {"kind", "regressor"},
          {"variant", m.physics_weight > 0.0 ? "nn-physics" : "nn"},
          {"physics_weight", m.physics_weight},
          {"architecture", ckpt::arch(m.arch)},
          {"standardizer", ckpt::standardizer(m.standardizer)},
          {"parameter_count", parameter_count(m.params)},
          {"params", ckpt::params(m.params)}};
}

using AnyModel = std::variant<CdmModel, RegressorModel>;

inline AnyModel model_from_json(const json& j) {
  try {
    if (j.value("format", std::string()) != "cdm-checkpoint") throw DataError("not a checkpoint file");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw DataError("unsupported checkpoint version " + j.at("version").dump());
    const Architecture a = ckpt::arch(j.at("architecture"));
    NetworkParams p = ckpt::params(j.at("params"));
    ckpt::check_consistent(p, a);
    const Standardizer st = ckpt::standardizer(j.at("standardizer"));
    if (st.mean_x.size() != a.dim_x || st.mean_y.size() != a.dim_y)
      throw DataError("standardizer dimensions do not match the architecture");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "cdm") {
      CdmModel m;
      m.variant = parse_variant(j.at("variant").get<std::string>());
      if ((m.variant == Variant::time_dependent) != p.time_dependent())
        throw DataError("variant tag disagrees with the stored parameters");
      m.params = std::move(p);
      m.arch = a;
      m.standardizer = st;
      m.schedule = {j.at("schedule").at("sigma_max").get<double>(), j.at("schedule").at("s").get<double>()};
      return m;
    }
    if (kind == "regressor") {
      RegressorModel m;
      m.params = std::move(p);
      m.arch = a;
      m.standardizer = st;
      m.physics_weight = j.value("physics_weight", 0.0);
      return m;
    }
    throw DataError("unknown checkpoint kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(1) << '\n';
}

inline AnyModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace cdm
