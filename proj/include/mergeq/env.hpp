#pragma once

#include <cstdint>
#include <vector>

#include "mergeq/sim.hpp"

namespace mergeq {

// Ego-centric snapshot taken after each rollout settles.
struct State {
  double d_c = 0.0;   // distance from the target to the blockage line
  double d_f = 0.0;   // clear gap to whatever is ahead in the target's lane
  double v_eh = 0.0;  // target speed
  double x_p = 0.0;   // target longitudinal position
  int y_p = 0;        // target lane
  std::vector<double> lane_avg;

  bool operator==(const State&) const = default;
};

enum class ObsMode { scalar, full5 };

int obs_width(ObsMode mode);

struct RewardParams {
  double r_merge_ok = 1.0;
  double r_fail = -2.0;
  double r_merge_slow = -1.0;
  double theta_avg = 0.5;
  double theta_min = 0.2;
  double theta_lane = 0.3;
  double r_congestion = -0.5;

  void validate() const;
  bool operator==(const RewardParams&) const = default;
};

struct EpisodeConfig {
  int steps_per_episode = 50;
  ObsMode obs_mode = ObsMode::scalar;
  int density = 14;  // baseline vehicles per lane; scaled by the demand walk
  std::uint64_t seed = 0;
  int max_ticks = 240;
  // Traffic demand drifts over the episode: a multiplier starts uniform in
  // [demand_min, demand_max] and random-walks by at most demand_step per
  // decision, so consecutive rollouts see correlated but changing density.
  double demand_min = 0.5;
  double demand_max = 1.9;
  double demand_step = 0.3;

  void validate() const;
  bool operator==(const EpisodeConfig&) const = default;
};

double compute_reward(const RolloutOutcome& outcome, const RewardParams& p,
                      double v_max);

std::vector<double> encode_observation(const State& s, ObsMode mode,
                                       const RoadConfig& road,
                                       const DriverParams& params);

struct StepResult {
  std::vector<double> obs;
  double reward = 0.0;
  bool done = false;
  RolloutOutcome info;
};

class MergeEnv {
 public:
  MergeEnv(RoadConfig road, DriverParams params, RewardParams reward,
           EpisodeConfig cfg);

  std::vector<double> reset(std::uint64_t episode_seed);
  StepResult step(int action);

  int action_count() const { return road_.merge_point_count; }
  int obs_width() const { return mergeq::obs_width(cfg_.obs_mode); }
  int steps_taken() const { return steps_taken_; }
  bool done() const { return steps_taken_ >= cfg_.steps_per_episode; }
  const State& state() const { return state_; }
  double demand_multiplier() const { return demand_; }

  const RoadConfig& road() const { return road_; }
  const DriverParams& params() const { return params_; }
  const EpisodeConfig& config() const { return cfg_; }

 private:
  RoadConfig road_;
  DriverParams params_;
  RewardParams reward_;
  EpisodeConfig cfg_;

  std::uint64_t episode_key_ = 0;
  int steps_taken_ = 0;
  bool ready_ = false;
  double demand_ = 1.0;
  Rng demand_rng_;
  State state_;

  SimWorld spawn_world(std::uint64_t world_seed) const;
  State capture_state(const SimWorld& w) const;
};

}  // namespace mergeq
