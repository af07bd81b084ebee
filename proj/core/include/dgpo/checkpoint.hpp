#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "dgpo/params.hpp"

namespace dgpo::nn {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  std::string rng_state;
};

nlohmann::json arch_to_json(const MlpArch& arch);
MlpArch arch_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

/// JSON container with doubles in shortest round-trip form; loading reproduces every bit.
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dgpo::nn
