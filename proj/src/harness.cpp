#include "mergeq/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>

#include <json.hpp>

#include "mergeq/errors.hpp"
#include "mergeq/net.hpp"

namespace mergeq {

std::string run_id_for(PolicyKind policy, std::uint64_t seed) {
  return policy_name(policy) + "-s" + std::to_string(seed);
}

RunPaths train_run(const AppConfig& cfg, PolicyKind policy, std::uint64_t seed) {
  cfg.validate();
  EpisodeConfig ecfg = cfg.episode;
  ecfg.seed = seed;
  MergeEnv env(cfg.road, cfg.drivers, cfg.reward, ecfg);

  PolicySpec chosen = cfg.policy;
  chosen.kind = policy;

  TrainResult tr = train(env, chosen, cfg.hp, seed);
  const std::string run_id = run_id_for(policy, seed);
  for (auto& row : tr.log.rows) row.run_id = run_id;

  std::filesystem::create_directories(cfg.out_dir);
  RunPaths paths;
  paths.weights = std::filesystem::path(cfg.out_dir) / (run_id + "-weights.mrw1");
  paths.metrics = std::filesystem::path(cfg.out_dir) / (run_id + "-metrics.csv");
  save_weights(tr.weights, paths.weights);
  write_metrics_csv(tr.log, paths.metrics);
  return paths;
}

MetricsLog eval_run(const std::filesystem::path& weights_file,
                    const AppConfig& cfg, int episodes, std::uint64_t seed) {
  cfg.validate();
  if (episodes < 1) throw ConfigError("eval_episodes: must be at least 1");
  const Weights w = load_weights(weights_file);

  const int want_in = obs_width(cfg.episode.obs_mode);
  if (w.layers.front().in != want_in)
    throw ConfigError("weights: input width " +
                      std::to_string(w.layers.front().in) + ", obs_mode '" +
                      (cfg.episode.obs_mode == ObsMode::scalar ? "scalar" : "full5") +
                      "' expects " + std::to_string(want_in));
  if (w.layers.back().out != cfg.road.merge_point_count)
    throw ConfigError("weights: output width " +
                      std::to_string(w.layers.back().out) + ", expected " +
                      std::to_string(cfg.road.merge_point_count) + " actions");

  EpisodeConfig ecfg = cfg.episode;
  ecfg.seed = seed;
  MergeEnv env(cfg.road, cfg.drivers, cfg.reward, ecfg);

  MetricsLog log;
  log.rows.reserve(static_cast<std::size_t>(episodes) * ecfg.steps_per_episode);
  for (int ep = 0; ep < episodes; ++ep) {
    std::vector<double> obs = env.reset(static_cast<std::uint64_t>(ep));
    for (int st = 0; st < ecfg.steps_per_episode; ++st) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::vector<double> q = forward(w, obs);
      const int a = argmax_lowest(q);
      StepResult sr = env.step(a);
      MetricsRow row;
      row.policy = "eval";
      row.seed = seed;
      row.episode = ep;
      row.step = st;
      row.action = a;
      row.reward = sr.reward;
      row.q_max = *std::max_element(q.begin(), q.end());
      row.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      log.rows.push_back(std::move(row));
      obs = std::move(sr.obs);
    }
  }
  return log;
}

std::vector<double> episode_totals(const MetricsLog& log) {
  std::vector<double> totals;
  int current = -1;
  for (const auto& r : log.rows) {
    if (r.episode != current) {
      totals.push_back(0.0);
      current = r.episode;
    }
    totals.back() += r.reward;
  }
  return totals;
}

TailStats tail_stats(const std::vector<double>& totals) {
  TailStats s;
  if (totals.empty()) return s;
  const int n = static_cast<int>(totals.size());
  s.episodes = std::max(1, n / 4);
  const auto first = totals.end() - s.episodes;
  double sum = 0.0;
  for (auto it = first; it != totals.end(); ++it) sum += *it;
  s.mean = sum / s.episodes;
  double var = 0.0;
  for (auto it = first; it != totals.end(); ++it)
    var += (*it - s.mean) * (*it - s.mean);
  s.stddev = std::sqrt(var / s.episodes);
  return s;
}

namespace {

double mean_of(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return xs.empty() ? 0.0 : sum / xs.size();
}

RunSummary run_one(const AppConfig& cfg, PolicyKind policy, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();

  const RunPaths paths = train_run(cfg, policy, seed);
  // Both policies sharing a seed are evaluated under identical conditions.
  const std::uint64_t eval_seed = mix_seed(seed, 0xEA1);
  MetricsLog eval_log = eval_run(paths.weights, cfg, cfg.eval_episodes, eval_seed);

  RunSummary s;
  s.run_id = run_id_for(policy, seed);
  s.policy = policy_name(policy);
  s.seed = seed;
  for (auto& row : eval_log.rows) row.run_id = s.run_id + "-eval";
  const auto eval_path =
      std::filesystem::path(cfg.out_dir) / (s.run_id + "-eval.csv");
  write_metrics_csv(eval_log, eval_path);

  const MetricsLog train_log = read_metrics_csv(paths.metrics);
  const TailStats tail = tail_stats(episode_totals(train_log));
  s.tail_reward_mean = tail.mean;
  s.tail_reward_stddev = tail.stddev;
  s.eval_reward_mean = mean_of(episode_totals(eval_log));
  s.weights_file = paths.weights.string();
  s.metrics_file = paths.metrics.string();
  s.eval_metrics_file = eval_path.string();
  s.runtime_seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  return s;
}

// Pools episode rewards across every run of one policy, straight from the
// CSVs, so the report stays recomputable from the files alone.
PolicyAggregate aggregate(const std::vector<RunSummary>& runs,
                          PolicyKind policy) {
  PolicyAggregate a;
  a.policy = policy_name(policy);
  std::vector<double> tail_pool;
  std::vector<double> eval_pool;
  for (const auto& r : runs) {
    if (r.policy != a.policy) continue;
    const auto totals = episode_totals(read_metrics_csv(r.metrics_file));
    const int keep = std::max(1, static_cast<int>(totals.size()) / 4);
    tail_pool.insert(tail_pool.end(), totals.end() - keep, totals.end());
    const auto evals = episode_totals(read_metrics_csv(r.eval_metrics_file));
    eval_pool.insert(eval_pool.end(), evals.begin(), evals.end());
    a.total_runtime_seconds += r.runtime_seconds;
  }
  a.tail_reward_mean = mean_of(tail_pool);
  double var = 0.0;
  for (double t : tail_pool)
    var += (t - a.tail_reward_mean) * (t - a.tail_reward_mean);
  a.tail_reward_stddev = tail_pool.empty() ? 0.0 : std::sqrt(var / tail_pool.size());
  a.eval_reward_mean = mean_of(eval_pool);
  return a;
}

}  // namespace

CompareReport compare_policies(const AppConfig& cfg,
                               const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("seeds: list is empty");
  cfg.validate();

  std::vector<std::future<RunSummary>> jobs;
  for (const std::uint64_t seed : seeds)
    for (const PolicyKind kind : {PolicyKind::eps_greedy, PolicyKind::boltzmann})
      jobs.push_back(std::async(std::launch::async, run_one, cfg, kind, seed));

  CompareReport report;
  report.seeds = seeds;
  for (auto& j : jobs) report.runs.push_back(j.get());

  report.eps_greedy = aggregate(report.runs, PolicyKind::eps_greedy);
  report.boltzmann = aggregate(report.runs, PolicyKind::boltzmann);
  if (report.eps_greedy.eval_reward_mean > report.boltzmann.eval_reward_mean)
    report.verdict = "eps_greedy";
  else if (report.boltzmann.eval_reward_mean > report.eps_greedy.eval_reward_mean)
    report.verdict = "boltzmann";
  else
    report.verdict = "tie";
  return report;
}

void write_compare_report(const CompareReport& report,
                          const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["seeds"] = report.seeds;
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : report.runs) {
    nlohmann::ordered_json jr;
    jr["run_id"] = r.run_id;
    jr["policy"] = r.policy;
    jr["seed"] = r.seed;
    jr["tail_reward_mean"] = r.tail_reward_mean;
    jr["tail_reward_stddev"] = r.tail_reward_stddev;
    jr["eval_reward_mean"] = r.eval_reward_mean;
    jr["runtime_seconds"] = r.runtime_seconds;
    jr["weights_file"] = r.weights_file;
    jr["metrics_file"] = r.metrics_file;
    jr["eval_metrics_file"] = r.eval_metrics_file;
    j["runs"].push_back(std::move(jr));
  }
  for (const auto* agg : {&report.eps_greedy, &report.boltzmann}) {
    nlohmann::ordered_json ja;
    ja["tail_reward_mean"] = agg->tail_reward_mean;
    ja["tail_reward_stddev"] = agg->tail_reward_stddev;
    ja["eval_reward_mean"] = agg->eval_reward_mean;
    ja["total_runtime_seconds"] = agg->total_runtime_seconds;
    j["policies"][agg->policy] = std::move(ja);
  }
  j["verdict"] = report.verdict;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
}

}  // namespace mergeq
