#include "mergeq/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "mergeq/errors.hpp"

namespace mergeq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool before(const Vehicle& a, const Vehicle& b) {
  if (a.lane != b.lane) return a.lane < b.lane;
  return a.pos < b.pos;
}

void sort_vehicles(SimWorld& w) {
  std::stable_sort(w.vehicles.begin(), w.vehicles.end(), before);
}

// Index range [first, last) of a lane's vehicles in the sorted vector.
std::pair<int, int> lane_span(const SimWorld& w, int lane) {
  int first = 0;
  int n = static_cast<int>(w.vehicles.size());
  while (first < n && w.vehicles[first].lane < lane) ++first;
  int last = first;
  while (last < n && w.vehicles[last].lane == lane) ++last;
  return {first, last};
}

}  // namespace

void RoadConfig::validate() const {
  if (lane_count < 2) throw ConfigError("lane_count: must be at least 2");
  if (road_length <= 0.0) throw ConfigError("road_length: must be positive");
  if (roadblock_pos <= 0.0 || roadblock_pos > road_length)
    throw ConfigError("roadblock_pos: must satisfy 0 < roadblock_pos <= road_length");
  if (roadblock_lane < 0 || roadblock_lane >= lane_count)
    throw ConfigError("roadblock_lane: out of range");
  if (merge_spacing <= 0.0) throw ConfigError("merge_spacing: must be positive");
  if (merge_point_count < 1) throw ConfigError("merge_point_count: must be at least 1");
  if (merge_point_count * merge_spacing > roadblock_pos)
    throw ConfigError("merge_point_count: merge points must all lie before the roadblock");
}

void DriverParams::validate() const {
  if (v_max <= 0.0) throw ConfigError("v_max: must be positive");
  if (accel <= 0.0) throw ConfigError("accel: must be positive");
  if (decel <= 0.0) throw ConfigError("decel: must be positive");
  if (sigma < 0.0 || sigma > 1.0) throw ConfigError("sigma: must be in [0,1]");
  if (reaction_time <= 0.0) throw ConfigError("reaction_time: must be positive");
  if (min_gap <= 0.0) throw ConfigError("min_gap: must be positive");
  if (dt <= 0.0) throw ConfigError("dt: must be positive");
}

const Vehicle* SimWorld::find(int id) const {
  for (const auto& v : vehicles)
    if (v.id == id) return &v;
  return nullptr;
}

Vehicle* SimWorld::find(int id) {
  for (auto& v : vehicles)
    if (v.id == id) return &v;
  return nullptr;
}

const Vehicle& SimWorld::target() const {
  for (const auto& v : vehicles)
    if (v.is_target) return v;
  throw std::logic_error("world has no target vehicle");
}

int max_spawn_density(const RoadConfig& config, const DriverParams& params) {
  const double spacing = Vehicle{}.length + params.min_gap;
  const double hi = config.roadblock_pos / 2.0;
  // Blocked lane: background sits ahead of the target parked at pos 0.
  const int blocked = static_cast<int>(std::floor((hi - spacing) / spacing)) + 1;
  const int open = static_cast<int>(std::floor(hi / spacing)) + 1;
  return std::max(0, std::min(blocked, open));
}

SimWorld spawn_traffic(const RoadConfig& config, const DriverParams& params,
                       int density, std::uint64_t seed) {
  config.validate();
  params.validate();
  if (density < 0) throw ConfigError("density: must be non-negative");

  SimWorld w;
  w.config = config;
  w.params = params;
  w.rng = Rng(seed);

  Vehicle target;
  target.id = 0;
  target.lane = config.roadblock_lane;
  target.pos = 0.0;
  target.speed = params.v_max;
  target.is_target = true;
  w.vehicles.push_back(target);

  const double spacing = target.length + params.min_gap;
  const double hi = config.roadblock_pos / 2.0;
  int next_id = 1;
  for (int lane = 0; lane < config.lane_count; ++lane) {
    if (density == 0) continue;
    const double lo = (lane == config.roadblock_lane) ? spacing : 0.0;
    const double slack = hi - lo - (density - 1) * spacing;
    if (slack < 0.0)
      throw ConfigError("density: cannot place " + std::to_string(density) +
                        " vehicles in lane " + std::to_string(lane) +
                        " without violating min_gap");
    std::vector<double> offsets(density);
    for (auto& u : offsets) u = w.rng.uniform(0.0, slack);
    std::sort(offsets.begin(), offsets.end());
    for (int i = 0; i < density; ++i) {
      Vehicle v;
      v.id = next_id++;
      v.lane = lane;
      v.pos = lo + offsets[i] + i * spacing;
      v.speed = w.rng.uniform(0.5 * params.v_max, params.v_max);
      w.vehicles.push_back(v);
    }
  }
  sort_vehicles(w);
  return w;
}

void krauss_step(SimWorld& w) {
  const auto& p = w.params;
  const auto& cfg = w.config;
  const std::vector<Vehicle> old = w.vehicles;

  // Front-to-back per lane: the leader's new position is known when the
  // follower moves, so the hard cap below keeps clearance >= min_gap exactly.
  for (int lane = 0; lane < cfg.lane_count; ++lane) {
    auto [first, last] = lane_span(w, lane);
    for (int i = last - 1; i >= first; --i) {
      const Vehicle& was = old[i];
      Vehicle& v = w.vehicles[i];

      double v_safe = kInf;
      double cap = kInf;
      if (i + 1 < last) {
        const Vehicle& lead_old = old[i + 1];
        const Vehicle& lead_new = w.vehicles[i + 1];
        const double g = lead_old.pos - lead_old.length - was.pos - p.min_gap;
        v_safe = lead_old.speed +
                 (g - lead_old.speed * p.reaction_time) /
                     ((was.speed + lead_old.speed) / (2.0 * p.decel) + p.reaction_time);
        cap = (lead_new.pos - lead_new.length - p.min_gap - was.pos) / p.dt;
      }
      if (lane == cfg.roadblock_lane) {
        // Roadblock as a stationary zero-length leader at roadblock_pos.
        const double g = cfg.roadblock_pos - was.pos - p.min_gap;
        const double blocked_safe =
            g / (was.speed / (2.0 * p.decel) + p.reaction_time);
        v_safe = std::min(v_safe, blocked_safe);
        cap = std::min(cap, (cfg.roadblock_pos - p.min_gap - was.pos) / p.dt);
      }

      const double eta = w.rng.uniform();
      const double v_des =
          std::min({was.speed + p.accel * p.dt, v_safe, p.v_max});
      const double v_new = std::max(
          0.0, std::min(v_des - p.sigma * p.accel * eta * p.dt, cap));
      v.speed = v_new;
      v.pos = was.pos + v_new * p.dt;
    }
  }

  std::erase_if(w.vehicles, [&](const Vehicle& v) {
    return !v.is_target && v.pos - v.length > cfg.road_length;
  });
  w.clock += p.dt;
}

namespace {

struct GapCheck {
  bool accepted = false;
  double lead_gap = -kInf;
};

GapCheck check_lane_entry(const SimWorld& w, const Vehicle& v, int target_lane) {
  const auto& p = w.params;
  const Vehicle* leader = nullptr;
  const Vehicle* lagger = nullptr;
  for (const auto& other : w.vehicles) {
    if (other.lane != target_lane || other.id == v.id) continue;
    if (other.pos >= v.pos) {
      if (!leader || other.pos < leader->pos) leader = &other;
    } else {
      if (!lagger || other.pos > lagger->pos) lagger = &other;
    }
  }

  double lead_gap = leader ? leader->pos - leader->length - v.pos : kInf;
  if (target_lane == w.config.roadblock_lane) {
    if (v.pos > w.config.roadblock_pos) return {};
    lead_gap = std::min(lead_gap, w.config.roadblock_pos - v.pos);
  }
  const double lag_gap = lagger ? v.pos - v.length - lagger->pos : kInf;

  const bool ok =
      lead_gap >= p.min_gap + v.speed * p.reaction_time &&
      (!lagger || lag_gap >= p.min_gap + lagger->speed * p.reaction_time);
  return {ok, lead_gap};
}

// Best adjacent open lane accepting the vehicle, or -1. Prefers the larger
// lead gap; on equality, the lower lane index.
int pick_merge_lane(const SimWorld& w, const Vehicle& v) {
  int best = -1;
  double best_gap = -kInf;
  for (int lane : {v.lane - 1, v.lane + 1}) {
    if (lane < 0 || lane >= w.config.lane_count) continue;
    if (lane == w.config.roadblock_lane) continue;
    const GapCheck c = check_lane_entry(w, v, lane);
    if (c.accepted && c.lead_gap > best_gap) {
      best = lane;
      best_gap = c.lead_gap;
    }
  }
  return best;
}

}  // namespace

bool attempt_lane_change(SimWorld& w, int vehicle_id, int target_lane) {
  Vehicle* v = w.find(vehicle_id);
  if (!v) throw std::invalid_argument("unknown vehicle id " + std::to_string(vehicle_id));
  if (std::abs(target_lane - v->lane) != 1 || target_lane < 0 ||
      target_lane >= w.config.lane_count)
    throw std::invalid_argument("target lane " + std::to_string(target_lane) +
                                " not adjacent to lane " + std::to_string(v->lane));
  const GapCheck c = check_lane_entry(w, *v, target_lane);
  if (!c.accepted) return false;
  v->lane = target_lane;
  sort_vehicles(w);
  return true;
}

double lane_average_speed(const SimWorld& w, int lane) {
  if (lane < 0 || lane >= w.config.lane_count)
    throw std::invalid_argument("lane " + std::to_string(lane) + " out of range");
  double sum = 0.0;
  int count = 0;
  for (const auto& v : w.vehicles) {
    if (v.lane != lane) continue;
    sum += v.speed;
    ++count;
  }
  return count == 0 ? w.params.v_max : sum / count;
}

std::vector<double> all_lane_average_speeds(const SimWorld& w) {
  std::vector<double> avgs(w.config.lane_count);
  for (int lane = 0; lane < w.config.lane_count; ++lane)
    avgs[lane] = lane_average_speed(w, lane);
  return avgs;
}

RolloutOutcome run_rollout(SimWorld& w, double merge_point, int max_ticks,
                           const TickObserver& on_tick) {
  const auto& cfg = w.config;
  const double k = merge_point / cfg.merge_spacing;
  if (merge_point <= 0.0 || std::abs(k - std::round(k)) > 1e-9 ||
      std::round(k) < 1 || std::round(k) > cfg.merge_point_count)
    throw std::invalid_argument("merge_point " + std::to_string(merge_point) +
                                " is not a configured merge position");

  RolloutOutcome out;
  const int target_id = w.target().id;
  const double bg_merge_from = cfg.roadblock_pos - 2.0 * cfg.merge_spacing;
  int stuck_ticks = 0;

  for (int tick = 0; tick < max_ticks; ++tick) {
    krauss_step(w);
    out.ticks_elapsed = tick + 1;
    bool finished = false;

    const Vehicle& t = *w.find(target_id);
    if (t.pos >= merge_point) {
      const int lane = pick_merge_lane(w, t);
      if (lane >= 0) {
        attempt_lane_change(w, target_id, lane);
        const Vehicle& merged = *w.find(target_id);
        out.merged = true;
        out.merge_pos = merged.pos;
        out.merge_speed = merged.speed;
        finished = true;
      }
    }

    if (!finished) {
      // Background traffic in the blocked lane merges out near the roadblock.
      auto [first, last] = lane_span(w, cfg.roadblock_lane);
      std::vector<int> movers;
      for (int i = last - 1; i >= first; --i) {
        const Vehicle& v = w.vehicles[i];
        if (!v.is_target && v.pos >= bg_merge_from) movers.push_back(v.id);
      }
      for (int id : movers) {
        const Vehicle& v = *w.find(id);
        const int lane = pick_merge_lane(w, v);
        if (lane >= 0) attempt_lane_change(w, id, lane);
      }

      const Vehicle& after = *w.find(target_id);
      if (after.lane == cfg.roadblock_lane && after.speed == 0.0 &&
          after.pos >= cfg.roadblock_pos - 2.0 * w.params.min_gap) {
        if (++stuck_ticks >= 5) finished = true;
      } else {
        stuck_ticks = 0;
      }
    }

    if (on_tick) on_tick(w);
    if (finished) break;
  }

  const Vehicle& t = *w.find(target_id);
  out.target_final_pos = t.pos;
  out.lane_avg_speeds = all_lane_average_speeds(w);
  return out;
}

SweepReport invariant_sweep(const RoadConfig& config,
                            const DriverParams& params, int rollouts,
                            std::uint64_t seed) {
  SweepReport report;
  const int max_density = max_spawn_density(config, params);

  for (int r = 0; r < rollouts; ++r) {
    const std::uint64_t rollout_seed = mix_seed(seed, r);
    Rng pick(mix_seed(rollout_seed, 0xA5));
    const int density = static_cast<int>(pick.uniform_int(max_density + 1));
    const int action = static_cast<int>(
        pick.uniform_int(static_cast<std::uint32_t>(config.merge_point_count)));
    const double merge_point = config.merge_position(action);

    SimWorld world = spawn_traffic(config, params, density, rollout_seed);
    SimWorld replay = world;

    int bad_overlap = 0, bad_speed = 0, bad_roadblock = 0, bad_order = 0;
    std::map<int, std::pair<int, double>> prev_state;  // id -> (lane, pos)
    for (const auto& v : world.vehicles) prev_state[v.id] = {v.lane, v.pos};

    auto observer = [&](const SimWorld& w) {
      for (std::size_t i = 0; i < w.vehicles.size(); ++i) {
        const auto& v = w.vehicles[i];
        if (v.speed < 0.0 || v.speed > params.v_max + 1e-9) ++bad_speed;
        if (v.lane == config.roadblock_lane && v.pos > config.roadblock_pos + 1e-9)
          ++bad_roadblock;
        if (i + 1 < w.vehicles.size()) {
          const auto& next = w.vehicles[i + 1];
          if (next.lane == v.lane &&
              v.pos + params.min_gap > next.pos - next.length + 1e-9)
            ++bad_overlap;
        }
      }
      // Vehicles that stayed in their lane must keep their relative order.
      for (int lane = 0; lane < config.lane_count; ++lane) {
        double prev_pos = -kInf;
        for (const auto& v : w.vehicles) {
          if (v.lane != lane) continue;
          auto it = prev_state.find(v.id);
          if (it == prev_state.end() || it->second.first != lane) continue;
          if (it->second.second < prev_pos) ++bad_order;
          prev_pos = it->second.second;
        }
      }
      prev_state.clear();
      for (const auto& v : w.vehicles) prev_state[v.id] = {v.lane, v.pos};
    };

    const int max_ticks = 240;
    RolloutOutcome a = run_rollout(world, merge_point, max_ticks, observer);
    RolloutOutcome b = run_rollout(replay, merge_point, max_ticks);

    ++report.rollouts;
    report.overlap_violations += bad_overlap;
    report.speed_violations += bad_speed;
    report.roadblock_violations += bad_roadblock;
    report.order_violations += bad_order;
    if (!(a == b) || !(world == replay)) ++report.determinism_violations;
  }
  return report;
}

}  // namespace mergeq
