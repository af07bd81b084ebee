#include "dgpo/checkpoint.hpp"

#include <fstream>

#include "dgpo/errors.hpp"

namespace dgpo::nn {

nlohmann::json arch_to_json(const MlpArch& a) {
  return {{"data_dim", a.data_dim},   {"output_dim", a.output_dim},
          {"hidden", a.hidden},       {"activation", to_string(a.activation)},
          {"time_dim", a.time_dim},   {"cond_rows", a.cond_rows},
          {"cond_dim", a.cond_dim}};
}

MlpArch arch_from_json(const nlohmann::json& j) {
  MlpArch a;
  a.data_dim = j.at("data_dim").get<std::size_t>();
  a.output_dim = j.at("output_dim").get<std::size_t>();
  a.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  a.activation = activation_from_string(j.at("activation").get<std::string>());
  a.time_dim = j.at("time_dim").get<std::size_t>();
  a.cond_rows = j.at("cond_rows").get<std::size_t>();
  a.cond_dim = j.at("cond_dim").get<std::size_t>();
  return a;
}

nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  return {{"format", "dgpo-checkpoint"},
          {"version", kCheckpointVersion},
          {"arch", arch_to_json(ck.params.arch)},
          {"values", ck.params.values},
          {"rng_state", ck.rng_state}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "dgpo-checkpoint") {
      throw InputError("not a dgpo checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw InputError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ck;
    ck.params.arch = arch_from_json(j.at("arch"));
    ck.params.values = j.at("values").get<std::vector<double>>();
    ck.rng_state = j.value("rng_state", std::string{});
    ck.params.validate();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ck).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace dgpo::nn
