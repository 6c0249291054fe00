#include "mergeq/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mergeq/errors.hpp"

namespace mergeq {

int obs_width(ObsMode mode) { return mode == ObsMode::scalar ? 1 : 5; }

void RewardParams::validate() const {
  if (!(r_merge_ok > 0.0)) throw ConfigError("r_merge_ok: must be positive");
  if (!(r_fail < r_merge_slow))
    throw ConfigError("r_fail: must be below r_merge_slow");
  if (!(r_merge_slow < 0.0)) throw ConfigError("r_merge_slow: must be negative");
  if (!(theta_min > 0.0 && theta_min < theta_avg && theta_avg <= 1.0))
    throw ConfigError("theta_min/theta_avg: need 0 < theta_min < theta_avg <= 1");
  if (!(theta_lane > 0.0 && theta_lane <= 1.0))
    throw ConfigError("theta_lane: must be in (0, 1]");
}

void EpisodeConfig::validate() const {
  if (steps_per_episode < 1)
    throw ConfigError("steps_per_episode: must be at least 1");
  if (density < 0) throw ConfigError("density: must be non-negative");
  if (max_ticks < 1) throw ConfigError("max_ticks: must be at least 1");
  if (!(demand_min > 0.0 && demand_min <= demand_max))
    throw ConfigError("demand_min/demand_max: need 0 < demand_min <= demand_max");
  if (demand_step < 0.0) throw ConfigError("demand_step: must be non-negative");
}

double compute_reward(const RolloutOutcome& outcome, const RewardParams& p,
                      double v_max) {
  double r;
  if (!outcome.merged) {
    r = p.r_fail;
  } else {
    const double v = outcome.merge_speed.value_or(0.0);
    const double lo = p.theta_min * v_max;
    const double hi = p.theta_avg * v_max;
    if (v >= hi)
      r = p.r_merge_ok;
    else if (v < lo)
      r = p.r_merge_slow;
    else
      r = p.r_merge_slow + (v - lo) / (hi - lo) * (p.r_merge_ok - p.r_merge_slow);
  }
  if (!outcome.lane_avg_speeds.empty()) {
    const double slowest =
        *std::min_element(outcome.lane_avg_speeds.begin(),
                          outcome.lane_avg_speeds.end());
    if (slowest < p.theta_lane * v_max) r += p.r_congestion;
  }
  return r;
}

std::vector<double> encode_observation(const State& s, ObsMode mode,
                                       const RoadConfig& road,
                                       const DriverParams& params) {
  const auto unit = [](double x) { return std::clamp(x, 0.0, 1.0); };
  if (mode == ObsMode::scalar) {
    double sum = 0.0;
    for (double v : s.lane_avg) sum += v;
    const double mean = s.lane_avg.empty() ? params.v_max
                                           : sum / s.lane_avg.size();
    return {unit(mean / params.v_max)};
  }
  return {unit(s.d_c / road.road_length),
          unit(s.d_f / road.road_length),
          unit(s.v_eh / params.v_max),
          unit(s.x_p / road.road_length),
          unit(static_cast<double>(s.y_p) / (road.lane_count - 1))};
}

MergeEnv::MergeEnv(RoadConfig road, DriverParams params, RewardParams reward,
                   EpisodeConfig cfg)
    : road_(road), params_(params), reward_(reward), cfg_(cfg) {
  road_.validate();
  params_.validate();
  reward_.validate();
  cfg_.validate();
}

SimWorld MergeEnv::spawn_world(std::uint64_t world_seed) const {
  const int max_density = max_spawn_density(road_, params_);
  const double scaled = std::round(cfg_.density * demand_);
  const int density =
      std::clamp(static_cast<int>(scaled), 0, max_density);
  return spawn_traffic(road_, params_, density, world_seed);
}

State MergeEnv::capture_state(const SimWorld& w) const {
  const Vehicle& t = w.target();
  State s;
  s.x_p = t.pos;
  s.y_p = t.lane;
  s.v_eh = t.speed;
  s.d_c = std::max(0.0, road_.roadblock_pos - t.pos);

  double ahead = road_.road_length - t.pos;
  if (t.lane == road_.roadblock_lane)
    ahead = road_.roadblock_pos - t.pos;
  for (const auto& v : w.vehicles) {
    if (v.id == t.id || v.lane != t.lane || v.pos <= t.pos) continue;
    ahead = std::min(ahead, v.pos - v.length - t.pos);
  }
  s.d_f = std::max(0.0, ahead);
  s.lane_avg = all_lane_average_speeds(w);
  return s;
}

std::vector<double> MergeEnv::reset(std::uint64_t episode_seed) {
  episode_key_ = mix_seed(cfg_.seed, episode_seed);
  steps_taken_ = 0;
  ready_ = true;
  demand_rng_ = Rng(mix_seed(episode_key_, std::uint64_t{1} << 32));
  demand_ = demand_rng_.uniform(cfg_.demand_min, cfg_.demand_max);

  const SimWorld w = spawn_world(mix_seed(episode_key_, 0));
  state_ = capture_state(w);
  return encode_observation(state_, cfg_.obs_mode, road_, params_);
}

StepResult MergeEnv::step(int action) {
  if (!ready_) throw std::logic_error("step before reset");
  if (done()) throw std::logic_error("step on a finished episode");
  if (action < 0 || action >= road_.merge_point_count)
    throw std::invalid_argument("action " + std::to_string(action) +
                                " out of range [0, " +
                                std::to_string(road_.merge_point_count) + ")");

  const double delta = demand_rng_.uniform(-cfg_.demand_step, cfg_.demand_step);
  demand_ = std::clamp(demand_ + delta, cfg_.demand_min, cfg_.demand_max);

  SimWorld w = spawn_world(mix_seed(episode_key_, steps_taken_ + 1));
  StepResult res;
  res.info = run_rollout(w, road_.merge_position(action), cfg_.max_ticks);
  res.reward = compute_reward(res.info, reward_, params_.v_max);
  state_ = capture_state(w);
  res.obs = encode_observation(state_, cfg_.obs_mode, road_, params_);
  ++steps_taken_;
  res.done = done();
  return res;
}

}  // namespace mergeq
