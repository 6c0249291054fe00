#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mergeq/rng.hpp"

namespace mergeq {

struct RoadConfig {
  int lane_count = 3;
  double road_length = 300.0;
  double roadblock_pos = 280.0;   // end of the blocked lane
  int roadblock_lane = 0;
  double merge_spacing = 20.0;    // distance between consecutive merge points
  int merge_point_count = 12;

  // Merge position of action k, k in [0, merge_point_count).
  double merge_position(int k) const { return merge_spacing * (k + 1); }

  void validate() const;  // throws ConfigError, names the offending field

  bool operator==(const RoadConfig&) const = default;
};

struct DriverParams {
  double v_max = 15.0;          // units/s
  double accel = 2.6;           // units/s^2
  double decel = 4.5;           // units/s^2, comfortable braking
  double sigma = 0.2;           // driver imperfection, in [0,1]
  double reaction_time = 1.0;   // s
  double min_gap = 2.5;         // units, bumper-to-bumper clearance floor
  double dt = 0.5;              // s per tick

  void validate() const;

  bool operator==(const DriverParams&) const = default;
};

struct Vehicle {
  int id = 0;
  int lane = 0;
  double pos = 0.0;     // front bumper
  double speed = 0.0;
  double length = 5.0;
  bool is_target = false;

  bool operator==(const Vehicle&) const = default;
};

// Full simulation state. A value: copying yields an independent world that
// replays identically (the rng stream is part of the state).
struct SimWorld {
  RoadConfig config;
  DriverParams params;
  std::vector<Vehicle> vehicles;  // kept sorted by (lane, pos)
  double clock = 0.0;
  Rng rng{0};

  const Vehicle* find(int id) const;
  Vehicle* find(int id);
  const Vehicle& target() const;  // throws std::logic_error if absent

  bool operator==(const SimWorld&) const = default;
};

struct RolloutOutcome {
  bool merged = false;
  std::optional<double> merge_pos;
  std::optional<double> merge_speed;
  std::vector<double> lane_avg_speeds;  // at termination
  double target_final_pos = 0.0;
  int ticks_elapsed = 0;

  bool operator==(const RolloutOutcome&) const = default;
};

// Largest background density per lane that spawn_traffic can place without
// violating the min-gap invariant.
int max_spawn_density(const RoadConfig& config, const DriverParams& params);

// Builds a world with the target vehicle at the start of the blocked lane
// (pos 0, speed v_max) and `density` background vehicles per lane at random
// non-overlapping positions in [0, roadblock_pos/2], speeds uniform in
// [0.5*v_max, v_max]. Throws ConfigError when density cannot be placed.
SimWorld spawn_traffic(const RoadConfig& config, const DriverParams& params,
                       int density, std::uint64_t seed);

// One synchronous car-following tick:
//   v_safe = v_l + (g - v_l*tau_r) / ((v + v_l)/(2b) + tau_r)
//   v_des  = min(v + a*dt, v_safe, v_max)
//   v'     = max(0, v_des - sigma*a*eta*dt),  eta ~ U[0,1) from world.rng
// where g is the usable gap (clearance beyond min_gap) to the leader. A
// vehicle in the blocked lane treats the roadblock as a stationary leader of
// zero length at roadblock_pos. Vehicles fully past road_length despawn.
void krauss_step(SimWorld& world);

// Moves the vehicle into target_lane iff the lead gap is at least
// min_gap + v*tau_r and the lag gap at least min_gap + v_lag*tau_r there.
// Position and speed are unchanged; rejected attempts leave the world as-is.
// Throws std::invalid_argument for unknown ids or non-adjacent lanes.
bool attempt_lane_change(SimWorld& world, int vehicle_id, int target_lane);

// Arithmetic mean of speeds in `lane`; an empty lane reads v_max.
double lane_average_speed(const SimWorld& world, int lane);

std::vector<double> all_lane_average_speeds(const SimWorld& world);

using TickObserver = std::function<void(const SimWorld&)>;

// Advances the world until the target merges, is stuck at the roadblock for
// 5 consecutive ticks, or max_ticks elapse. Once the target's pos reaches
// merge_point it attempts a change toward an adjacent open lane every tick.
// Background vehicles in the blocked lane merge out on their own once within
// two merge spacings of the roadblock. merge_point must be one of the
// configured merge positions.
RolloutOutcome run_rollout(SimWorld& world, double merge_point, int max_ticks,
                           const TickObserver& on_tick = {});

struct SweepReport {
  int rollouts = 0;
  int overlap_violations = 0;
  int speed_violations = 0;
  int roadblock_violations = 0;
  int order_violations = 0;
  int determinism_violations = 0;

  int total() const {
    return overlap_violations + speed_violations + roadblock_violations +
           order_violations + determinism_violations;
  }
};

// Runs `rollouts` seeded rollouts over randomized densities and merge points,
// checking the safety invariants every tick and replaying each rollout to
// confirm bit equality.
SweepReport invariant_sweep(const RoadConfig& config,
                            const DriverParams& params, int rollouts,
                            std::uint64_t seed);

}  // namespace mergeq
