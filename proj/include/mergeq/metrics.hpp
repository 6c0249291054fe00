#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mergeq {

inline constexpr char kMetricsHeader[] =
    "run_id,policy,seed,episode,step,action,reward,q_max,wall_ms";

struct MetricsRow {
  std::string run_id;
  std::string policy;
  std::uint64_t seed = 0;
  int episode = 0;
  int step = 0;
  int action = 0;
  double reward = 0.0;
  double q_max = 0.0;
  double wall_ms = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;

  bool operator==(const MetricsLog&) const = default;
};

void write_metrics_csv(const MetricsLog& log, const std::filesystem::path& path);
MetricsLog read_metrics_csv(const std::filesystem::path& path);

}  // namespace mergeq
