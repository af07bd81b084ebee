#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dgpo/config.hpp"

namespace dgpo::cli {

enum class Subcommand { pretrain, posttrain, eval, ablate, plot };

std::string to_string(Subcommand c);

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct RunSpec {
  Subcommand command = Subcommand::posttrain;
  std::filesystem::path config;  // empty = all defaults
  std::filesystem::path out = "runs";
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

/// Content hash of the library sources this binary was built from.
std::string code_hash();

int cmd_pretrain(const RunSpec& run, std::ostream& log);
int cmd_posttrain(const RunSpec& run, std::ostream& log);
int cmd_eval(const RunSpec& run, std::ostream& log);
int cmd_ablate(const RunSpec& run, std::ostream& log);
int cmd_plot(const RunSpec& run, std::ostream& log);
int run_command(const RunSpec& run, std::ostream& log);

// Ablation bookkeeping -------------------------------------------------------

struct VariantOutcome {
  std::string name;
  std::vector<train::MetricsRecord> metrics;
  bool failed = false;
  std::string error;

  double final_reward() const { return metrics.back().mean_reward; }
  double final_sliced_w2() const { return metrics.back().sliced_w2; }
};

struct OrderingCheck {
  std::string name;
  std::string claim;
  bool evaluated = false;  // false when a required variant is missing
  bool held = false;
  std::string detail;
};

/// Reward tolerance for the timestep-clip comparison.
inline constexpr double kClipRewardMatch = 0.02;

/// Directional comparisons between the canonical variants `dgpo`,
/// `dgpo-sde`, `dgpo-offline`, `dpo` and `dgpo-noclip`; `base` is the
/// iteration-0 evaluation of the reference model.
std::vector<OrderingCheck> check_orderings(const std::map<std::string, VariantOutcome>& variants,
                                           const train::MetricsRecord& base);

/// Sliced-W2 of the no-clip run at matched reward: its final row when the
/// final rewards agree within kClipRewardMatch, otherwise the eval row whose
/// reward is closest to `target_reward` if that one is within tolerance.
std::optional<double> matched_sliced_w2(const std::vector<train::MetricsRecord>& rows, double target_reward);

}  // namespace dgpo::cli
