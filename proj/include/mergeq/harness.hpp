#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mergeq/config.hpp"
#include "mergeq/dqn.hpp"
#include "mergeq/metrics.hpp"

namespace mergeq {

struct RunPaths {
  std::filesystem::path weights;
  std::filesystem::path metrics;
};

std::string run_id_for(PolicyKind policy, std::uint64_t seed);

RunPaths train_run(const AppConfig& cfg, PolicyKind policy, std::uint64_t seed);

MetricsLog eval_run(const std::filesystem::path& weights_file,
                    const AppConfig& cfg, int episodes, std::uint64_t seed);

// Episode-level reward totals in episode order; log rows must be grouped by
// episode as train/eval emit them.
std::vector<double> episode_totals(const MetricsLog& log);

struct TailStats {
  double mean = 0.0;
  double stddev = 0.0;  // population form
  int episodes = 0;
};

// Stats over the last quarter (at least one) of the episode totals.
TailStats tail_stats(const std::vector<double>& totals);

struct RunSummary {
  std::string run_id;
  std::string policy;
  std::uint64_t seed = 0;
  double tail_reward_mean = 0.0;
  double tail_reward_stddev = 0.0;
  double eval_reward_mean = 0.0;
  double runtime_seconds = 0.0;
  std::string weights_file;
  std::string metrics_file;
  std::string eval_metrics_file;
};

struct PolicyAggregate {
  std::string policy;
  double tail_reward_mean = 0.0;
  double tail_reward_stddev = 0.0;
  double eval_reward_mean = 0.0;
  double total_runtime_seconds = 0.0;
};

struct CompareReport {
  std::vector<std::uint64_t> seeds;
  std::vector<RunSummary> runs;
  PolicyAggregate eps_greedy;
  PolicyAggregate boltzmann;
  std::string verdict;
};

CompareReport compare_policies(const AppConfig& cfg,
                               const std::vector<std::uint64_t>& seeds);

void write_compare_report(const CompareReport& report,
                          const std::filesystem::path& path);

}  // namespace mergeq
