#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mergeq/config.hpp"
#include "mergeq/errors.hpp"
#include "mergeq/harness.hpp"
#include "mergeq/net.hpp"

using namespace mergeq;
namespace fs = std::filesystem;

namespace {

// Small but real training setup: everything defaulted except scale.
AppConfig desk_config(const fs::path& out_dir) {
  AppConfig cfg;
  cfg.episode.density = 6;
  cfg.hp.episodes = 4;
  cfg.hp.warmup = 20;
  cfg.eval_episodes = 2;
  cfg.out_dir = out_dir.string();
  return cfg;
}

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

MetricsRow row_of(int episode, int step, double reward) {
  MetricsRow r;
  r.run_id = "r";
  r.policy = "p";
  r.seed = 1;
  r.episode = episode;
  r.step = step;
  r.action = step % 12;
  r.reward = reward;
  r.q_max = reward / 2;
  r.wall_ms = 0.25;
  return r;
}

std::string strip_wall_ms(const fs::path& csv) {
  std::ifstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const auto cut = line.rfind(',');
    out << line.substr(0, cut) << '\n';
  }
  return out.str();
}

}  // namespace

TEST_CASE("run ids name the policy and seed") {
  CHECK(run_id_for(PolicyKind::eps_greedy, 3) == "eps_greedy-s3");
  CHECK(run_id_for(PolicyKind::boltzmann, 12) == "boltzmann-s12");
}

TEST_CASE("episode totals group rows in emission order") {
  MetricsLog log;
  log.rows = {row_of(0, 0, 1.0), row_of(0, 1, 0.5), row_of(0, 2, -1.0),
              row_of(1, 0, 0.0), row_of(1, 1, 2.0), row_of(1, 2, 0.25)};
  CHECK(episode_totals(log) == std::vector<double>{0.5, 2.25});
}

TEST_CASE("tail stats cover the last quarter of episodes") {
  CHECK(tail_stats({1, 2, 3, 4}).episodes == 1);
  CHECK(tail_stats({1, 2, 3, 4}).mean == 4.0);

  const TailStats t8 = tail_stats({0, 0, 0, 0, 0, 0, 2, 4});
  CHECK(t8.episodes == 2);
  CHECK(t8.mean == 3.0);
  CHECK(t8.stddev == 1.0);

  CHECK(tail_stats({7}).episodes == 1);
  CHECK(tail_stats({7}).mean == 7.0);
  CHECK(tail_stats({7}).stddev == 0.0);
}

TEST_CASE("metrics CSV round trips and keeps its exact header") {
  const fs::path path = fs::temp_directory_path() / "mergeq_metrics_rt.csv";
  MetricsLog log;
  log.rows = {row_of(0, 0, 0.1), row_of(0, 1, -2.5)};
  write_metrics_csv(log, path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "run_id,policy,seed,episode,step,action,reward,q_max,wall_ms");

  CHECK(read_metrics_csv(path) == log);
  fs::remove(path);
}

TEST_CASE("metrics reader rejects malformed files with line numbers") {
  const fs::path path = fs::temp_directory_path() / "mergeq_metrics_bad.csv";
  {
    std::ofstream out(path);
    out << "run_id,policy,seed,episode\n";
  }
  CHECK_THROWS_AS(read_metrics_csv(path), FormatError);
  {
    std::ofstream out(path);
    out << "run_id,policy,seed,episode,step,action,reward,q_max,wall_ms\n";
    out << "r,p,1,0,0,3,1.0,0.5\n";
  }
  try {
    read_metrics_csv(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("config text: overrides, comments, and unknown keys") {
  AppConfig cfg = parse_config_text(
      "# experiment setup\n"
      "density = 9\n"
      "epsilon = 0.25\n"
      "steps_per_episode = 10\n"
      "\n"
      "eval_episodes = 3\n");
  CHECK(cfg.episode.density == 9);
  CHECK(cfg.policy.epsilon == 0.25);
  CHECK(cfg.episode.steps_per_episode == 10);
  CHECK(cfg.hp.steps_per_episode == 10);
  CHECK(cfg.eval_episodes == 3);

  try {
    parse_config_text("densty = 9\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("densty") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("density = lots\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("density\n"), ConfigError);
}

TEST_CASE("config defaults match the experiment scale") {
  AppConfig cfg;
  CHECK(cfg.hp.episodes == 400);
  CHECK(cfg.hp.steps_per_episode == 50);
  CHECK(cfg.hp.gamma == 0.99);
  CHECK(cfg.hp.batch_size == 32);
  CHECK(cfg.hp.replay_capacity == 10000);
  CHECK(cfg.policy.epsilon == 0.1);
  CHECK(cfg.policy.tau == 1.0);
  CHECK(cfg.episode.steps_per_episode == 50);
}

TEST_CASE("train_run writes weights plus a full metrics file") {
  const fs::path dir = fresh_dir("mergeq_harness_train");
  AppConfig cfg = desk_config(dir);
  const RunPaths paths = train_run(cfg, PolicyKind::eps_greedy, 3);
  CHECK(fs::exists(paths.weights));
  CHECK(fs::exists(paths.metrics));
  CHECK(paths.weights.filename() == "eps_greedy-s3-weights.mrw1");

  const MetricsLog log = read_metrics_csv(paths.metrics);
  CHECK(log.rows.size() == 4u * 50u);
  for (const auto& row : log.rows) {
    CHECK(row.run_id == "eps_greedy-s3");
    CHECK(row.policy == "eps_greedy");
    CHECK(row.seed == 3);
  }
  fs::remove_all(dir);
}

TEST_CASE("train_run reruns byte-identically except wall clock") {
  const fs::path dir_a = fresh_dir("mergeq_harness_rerun_a");
  const fs::path dir_b = fresh_dir("mergeq_harness_rerun_b");
  AppConfig cfg_a = desk_config(dir_a);
  AppConfig cfg_b = desk_config(dir_b);
  const RunPaths a = train_run(cfg_a, PolicyKind::boltzmann, 5);
  const RunPaths b = train_run(cfg_b, PolicyKind::boltzmann, 5);

  std::ifstream wa(a.weights, std::ios::binary);
  std::ifstream wb(b.weights, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(wa)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(wb)), {});
  CHECK(bytes_a == bytes_b);

  CHECK(strip_wall_ms(a.metrics) == strip_wall_ms(b.metrics));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("eval on a zero-weight model always picks action 0") {
  const fs::path dir = fresh_dir("mergeq_harness_zero");
  Weights w = init_network(Topology{{1, 24, 24, 12}}, 1);
  for (Layer& layer : w.layers) {
    std::fill(layer.w.begin(), layer.w.end(), 0.0);
    std::fill(layer.b.begin(), layer.b.end(), 0.0);
  }
  const fs::path wpath = dir / "zero.mrw1";
  save_weights(w, wpath);

  AppConfig cfg = desk_config(dir);
  const MetricsLog log = eval_run(wpath, cfg, 2, 9);
  CHECK(log.rows.size() == 100);
  for (const auto& row : log.rows) {
    CHECK(row.action == 0);
    CHECK(row.policy == "eval");
    CHECK(row.q_max == 0.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("eval never mutates the weights file and repeats exactly") {
  const fs::path dir = fresh_dir("mergeq_harness_eval");
  AppConfig cfg = desk_config(dir);
  const RunPaths paths = train_run(cfg, PolicyKind::eps_greedy, 2);

  std::ifstream before_f(paths.weights, std::ios::binary);
  const std::string before((std::istreambuf_iterator<char>(before_f)), {});

  const MetricsLog a = eval_run(paths.weights, cfg, 3, 4);
  const MetricsLog b = eval_run(paths.weights, cfg, 3, 4);
  CHECK(a.rows.size() == 150);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    MetricsRow lhs = a.rows[i];
    MetricsRow rhs = b.rows[i];
    lhs.wall_ms = rhs.wall_ms = 0.0;
    CHECK(lhs == rhs);
  }

  std::ifstream after_f(paths.weights, std::ios::binary);
  const std::string after((std::istreambuf_iterator<char>(after_f)), {});
  CHECK(before == after);
  fs::remove_all(dir);
}

TEST_CASE("eval rejects weights whose shape disagrees with the env") {
  const fs::path dir = fresh_dir("mergeq_harness_shape");
  const fs::path wide = dir / "wide.mrw1";
  save_weights(init_network(Topology{{5, 24, 24, 12}}, 1), wide);

  AppConfig cfg = desk_config(dir);
  try {
    eval_run(wide, cfg, 1, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("width") != std::string::npos);
  }

  const fs::path narrow_out = dir / "narrow.mrw1";
  save_weights(init_network(Topology{{1, 24, 4}}, 1), narrow_out);
  CHECK_THROWS_AS(eval_run(narrow_out, cfg, 1, 1), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("compare requires at least one seed") {
  AppConfig cfg = desk_config(fs::temp_directory_path() / "mergeq_unused");
  CHECK_THROWS_AS(compare_policies(cfg, {}), ConfigError);
}

TEST_CASE("compare aggregates are recomputable from the emitted CSVs") {
  const fs::path dir = fresh_dir("mergeq_harness_compare");
  AppConfig cfg = desk_config(dir);
  const CompareReport report = compare_policies(cfg, {1, 2});

  REQUIRE(report.runs.size() == 4);
  CHECK(report.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK((report.verdict == "eps_greedy" || report.verdict == "boltzmann" ||
         report.verdict == "tie"));

  for (const std::string policy : {"eps_greedy", "boltzmann"}) {
    std::vector<double> tail_pool;
    std::vector<double> eval_pool;
    for (const auto& run : report.runs) {
      if (run.policy != policy) continue;
      const MetricsLog train_log = read_metrics_csv(run.metrics_file);
      const auto totals = episode_totals(train_log);
      const std::size_t tail_from = totals.size() - totals.size() / 4;
      for (std::size_t i = tail_from; i < totals.size(); ++i)
        tail_pool.push_back(totals[i]);
      for (double t : episode_totals(read_metrics_csv(run.eval_metrics_file)))
        eval_pool.push_back(t);
    }
    double tail_mean = 0.0;
    for (double v : tail_pool) tail_mean += v;
    tail_mean /= static_cast<double>(tail_pool.size());
    double eval_mean = 0.0;
    for (double v : eval_pool) eval_mean += v;
    eval_mean /= static_cast<double>(eval_pool.size());

    const PolicyAggregate& agg =
        policy == "eps_greedy" ? report.eps_greedy : report.boltzmann;
    CHECK(agg.tail_reward_mean == doctest::Approx(tail_mean).epsilon(1e-12));
    CHECK(agg.eval_reward_mean == doctest::Approx(eval_mean).epsilon(1e-12));
  }

  const fs::path report_path = dir / "compare_report.json";
  write_compare_report(report, report_path);
  std::ifstream in(report_path);
  const auto parsed = nlohmann::json::parse(in);
  CHECK(parsed["seeds"].size() == 2);
  CHECK(parsed["runs"].size() == 4);
  CHECK(parsed["policies"].contains("eps_greedy"));
  CHECK(parsed["policies"].contains("boltzmann"));
  CHECK(parsed["verdict"] == report.verdict);
  fs::remove_all(dir);
}

TEST_CASE("self-comparison of one policy yields symmetric aggregates") {
  const fs::path dir = fresh_dir("mergeq_harness_self");
  AppConfig cfg = desk_config(dir);
  const CompareReport report = compare_policies(cfg, {7});

  // Same seed, same hyperparameters: each policy trains once; re-running the
  // comparison must reproduce identical aggregates.
  const CompareReport again = compare_policies(cfg, {7});
  CHECK(report.eps_greedy.tail_reward_mean == again.eps_greedy.tail_reward_mean);
  CHECK(report.boltzmann.tail_reward_mean == again.boltzmann.tail_reward_mean);
  CHECK(report.eps_greedy.eval_reward_mean == again.eps_greedy.eval_reward_mean);
  CHECK(report.boltzmann.eval_reward_mean == again.boltzmann.eval_reward_mean);
  CHECK(report.verdict == again.verdict);
  fs::remove_all(dir);
}
