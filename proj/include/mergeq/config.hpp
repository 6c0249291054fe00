#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mergeq/dqn.hpp"
#include "mergeq/env.hpp"
#include "mergeq/sim.hpp"

namespace mergeq {

// Everything a run needs, overridable via `key = value` config files and
// repeated --set flags. Unknown keys are rejected by name.
struct AppConfig {
  RoadConfig road;
  DriverParams drivers;
  RewardParams reward;
  EpisodeConfig episode;
  Hyperparams hp;
  PolicySpec policy;

  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  // for compare; must be set explicitly
  int eval_episodes = 60;
  std::string out_dir = "out";
  std::string weights_path;

  void validate() const;
};

void set_config_key(AppConfig& cfg, const std::string& key,
                    const std::string& value);

AppConfig parse_config_text(const std::string& text);
AppConfig load_config_file(const std::filesystem::path& path);

}  // namespace mergeq
