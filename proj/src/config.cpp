#include "mergeq/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "mergeq/errors.hpp"

namespace mergeq {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return "";
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
  T v{};
  const char* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ConfigError(key + ": cannot parse '" + value + "'");
  return v;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& value) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("seeds: empty entry in '" + value + "'");
    out.push_back(parse_value<std::uint64_t>("seeds", item));
  }
  if (out.empty()) throw ConfigError("seeds: list is empty");
  return out;
}

ObsMode parse_obs_mode(const std::string& value) {
  if (value == "scalar") return ObsMode::scalar;
  if (value == "full5") return ObsMode::full5;
  throw ConfigError("obs_mode: unknown value '" + value +
                    "' (expected scalar or full5)");
}

}  // namespace

void set_config_key(AppConfig& cfg, const std::string& key,
                    const std::string& value) {
  auto i = [&] { return parse_value<int>(key, value); };
  auto d = [&] { return parse_value<double>(key, value); };
  auto u = [&] { return parse_value<std::uint64_t>(key, value); };

  if (key == "lane_count") cfg.road.lane_count = i();
  else if (key == "road_length") cfg.road.road_length = d();
  else if (key == "roadblock_pos") cfg.road.roadblock_pos = d();
  else if (key == "roadblock_lane") cfg.road.roadblock_lane = i();
  else if (key == "merge_spacing") cfg.road.merge_spacing = d();
  else if (key == "merge_point_count") cfg.road.merge_point_count = i();
  else if (key == "v_max") cfg.drivers.v_max = d();
  else if (key == "accel") cfg.drivers.accel = d();
  else if (key == "decel") cfg.drivers.decel = d();
  else if (key == "sigma") cfg.drivers.sigma = d();
  else if (key == "reaction_time") cfg.drivers.reaction_time = d();
  else if (key == "min_gap") cfg.drivers.min_gap = d();
  else if (key == "dt") cfg.drivers.dt = d();
  else if (key == "steps_per_episode") {
    cfg.episode.steps_per_episode = i();
    cfg.hp.steps_per_episode = cfg.episode.steps_per_episode;
  } else if (key == "obs_mode") cfg.episode.obs_mode = parse_obs_mode(value);
  else if (key == "density") cfg.episode.density = i();
  else if (key == "max_ticks") cfg.episode.max_ticks = i();
  else if (key == "demand_min") cfg.episode.demand_min = d();
  else if (key == "demand_max") cfg.episode.demand_max = d();
  else if (key == "demand_step") cfg.episode.demand_step = d();
  else if (key == "r_merge_ok") cfg.reward.r_merge_ok = d();
  else if (key == "r_fail") cfg.reward.r_fail = d();
  else if (key == "r_merge_slow") cfg.reward.r_merge_slow = d();
  else if (key == "theta_avg") cfg.reward.theta_avg = d();
  else if (key == "theta_min") cfg.reward.theta_min = d();
  else if (key == "theta_lane") cfg.reward.theta_lane = d();
  else if (key == "r_congestion") cfg.reward.r_congestion = d();
  else if (key == "gamma") cfg.hp.gamma = d();
  else if (key == "lr") cfg.hp.lr = d();
  else if (key == "batch_size") cfg.hp.batch_size = i();
  else if (key == "warmup") cfg.hp.warmup = i();
  else if (key == "episodes") cfg.hp.episodes = i();
  else if (key == "replay_capacity")
    cfg.hp.replay_capacity = parse_value<std::size_t>(key, value);
  else if (key == "target_sync") cfg.hp.target_sync = i();
  else if (key == "policy") cfg.policy.kind = parse_policy(value);
  else if (key == "epsilon") cfg.policy.epsilon = d();
  else if (key == "tau") cfg.policy.tau = d();
  else if (key == "seed") cfg.seed = u();
  else if (key == "seeds") cfg.seeds = parse_seed_list(value);
  else if (key == "eval_episodes") cfg.eval_episodes = i();
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "weights_path") cfg.weights_path = value;
  else throw ConfigError("unknown key '" + key + "'");
}

void AppConfig::validate() const {
  road.validate();
  drivers.validate();
  reward.validate();
  episode.validate();
  hp.validate();
  policy.validate();
  if (eval_episodes < 1) throw ConfigError("eval_episodes: must be at least 1");
  if (out_dir.empty()) throw ConfigError("out_dir: must not be empty");
}

AppConfig parse_config_text(const std::string& text) {
  AppConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + stripped + "'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    try {
      set_config_key(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

AppConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace mergeq
