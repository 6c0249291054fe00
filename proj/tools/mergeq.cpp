#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "mergeq/config.hpp"
#include "mergeq/errors.hpp"
#include "mergeq/harness.hpp"
#include "mergeq/net.hpp"
#include "mergeq/service.hpp"
#include "mergeq/sim.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

mergeq::AppConfig build_config(const std::string& config_path,
                               const std::vector<std::string>& overrides) {
  mergeq::AppConfig cfg;
  if (!config_path.empty()) cfg = mergeq::load_config_file(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw mergeq::ConfigError("--set expects key=value, got '" + kv + "'");
    mergeq::set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

double mean_episode_reward(const mergeq::MetricsLog& log) {
  const auto totals = mergeq::episode_totals(log);
  double sum = 0.0;
  for (double t : totals) sum += t;
  return totals.empty() ? 0.0 : sum / totals.size();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"traffic-merge RL toolkit: train and compare DQN merge policies, "
               "serve decisions over TCP, and check the simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;

  auto add_config_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file of key = value lines");
    cmd->add_option("--set", overrides, "override one config key (key=value)");
  };

  auto* train_cmd = app.add_subcommand("train", "train one policy, write weights + metrics");
  std::string train_policy;
  std::uint64_t train_seed = 0;
  std::string train_out;
  train_cmd->add_option("--policy", train_policy, "eps_greedy or boltzmann")->required();
  auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "run seed");
  train_cmd->add_option("--out", train_out, "output directory");
  add_config_flags(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate saved weights greedily");
  std::string eval_weights;
  int eval_episodes = 0;
  std::uint64_t eval_seed = 0;
  std::string eval_out;
  eval_cmd->add_option("--weights", eval_weights, "weights file")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "evaluation episodes");
  auto* eval_seed_opt = eval_cmd->add_option("--seed", eval_seed, "evaluation seed");
  eval_cmd->add_option("--out", eval_out, "write the evaluation metrics CSV here");
  add_config_flags(eval_cmd);

  auto* compare_cmd = app.add_subcommand("compare", "train + evaluate both policies over seeds");
  std::string compare_seeds;
  std::string compare_out;
  compare_cmd->add_option("--seeds", compare_seeds, "comma-separated seed list");
  compare_cmd->add_option("--out", compare_out, "output directory");
  add_config_flags(compare_cmd);

  auto* serve_cmd = app.add_subcommand("serve", "serve decisions for saved weights");
  std::string serve_weights;
  std::string serve_bind = "127.0.0.1:7777";
  std::uint64_t serve_seed = 0;
  double serve_delay = 0.0;
  double serve_jitter = 0.0;
  serve_cmd->add_option("--weights", serve_weights, "weights file")->required();
  serve_cmd->add_option("--bind", serve_bind, "host:port (port 0 = ephemeral)");
  serve_cmd->add_option("--seed", serve_seed, "base seed for boltzmann sampling");
  serve_cmd->add_option("--delay-ms", serve_delay, "fixed reply delay");
  serve_cmd->add_option("--jitter-ms", serve_jitter, "uniform extra reply delay");

  auto* decide_cmd = app.add_subcommand("decide", "request one action from a server");
  std::string decide_addr;
  std::vector<double> decide_obs;
  std::string decide_mode = "greedy";
  double decide_tau = 1.0;
  std::uint64_t decide_seed = 0;
  std::int64_t decide_id = 1;
  int decide_timeout = 1000;
  decide_cmd->add_option("--addr", decide_addr, "server host:port")->required();
  decide_cmd->add_option("--obs", decide_obs, "comma-separated observation")
      ->required()
      ->delimiter(',');
  decide_cmd->add_option("--mode", decide_mode, "greedy or boltzmann");
  decide_cmd->add_option("--tau", decide_tau, "boltzmann temperature");
  auto* decide_seed_opt = decide_cmd->add_option("--seed", decide_seed, "sampling seed");
  decide_cmd->add_option("--id", decide_id, "request id");
  decide_cmd->add_option("--timeout-ms", decide_timeout, "response timeout");

  auto* simcheck_cmd = app.add_subcommand("simcheck", "run the simulator invariant sweep");
  std::uint64_t simcheck_seed = 1;
  int simcheck_rollouts = 1000;
  simcheck_cmd->add_option("--seed", simcheck_seed, "sweep seed");
  simcheck_cmd->add_option("--rollouts", simcheck_rollouts, "rollouts to run");
  add_config_flags(simcheck_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) {
      mergeq::AppConfig cfg = build_config(config_path, overrides);
      if (!train_out.empty()) cfg.out_dir = train_out;
      if (train_seed_opt->count() > 0) cfg.seed = train_seed;
      const mergeq::PolicyKind kind = mergeq::parse_policy(train_policy);
      const auto paths = mergeq::train_run(cfg, kind, cfg.seed);
      const auto log = mergeq::read_metrics_csv(paths.metrics);
      const auto tail = mergeq::tail_stats(mergeq::episode_totals(log));
      std::cout << "weights: " << paths.weights.string() << "\n"
                << "metrics: " << paths.metrics.string() << " (" << log.rows.size()
                << " rows)\n"
                << "tail mean episode reward: " << tail.mean << " over "
                << tail.episodes << " episodes\n";
    } else if (*eval_cmd) {
      mergeq::AppConfig cfg = build_config(config_path, overrides);
      if (eval_seed_opt->count() > 0) cfg.seed = eval_seed;
      const int episodes = eval_episodes > 0 ? eval_episodes : cfg.eval_episodes;
      mergeq::MetricsLog log =
          mergeq::eval_run(eval_weights, cfg, episodes, cfg.seed);
      if (!eval_out.empty()) {
        for (auto& row : log.rows)
          row.run_id = "eval-s" + std::to_string(cfg.seed);
        mergeq::write_metrics_csv(log, eval_out);
        std::cout << "metrics: " << eval_out << "\n";
      }
      std::cout << "mean episode reward: " << mean_episode_reward(log)
                << " over " << episodes << " episodes\n";
    } else if (*compare_cmd) {
      mergeq::AppConfig cfg = build_config(config_path, overrides);
      if (!compare_out.empty()) cfg.out_dir = compare_out;
      if (!compare_seeds.empty()) mergeq::set_config_key(cfg, "seeds", compare_seeds);
      const auto report = mergeq::compare_policies(cfg, cfg.seeds);
      std::filesystem::create_directories(cfg.out_dir);
      const auto report_path =
          std::filesystem::path(cfg.out_dir) / "compare_report.json";
      mergeq::write_compare_report(report, report_path);
      std::cout << "eps_greedy eval mean: " << report.eps_greedy.eval_reward_mean
                << "\n"
                << "boltzmann eval mean: " << report.boltzmann.eval_reward_mean
                << "\n"
                << "verdict: " << report.verdict << "\n"
                << "report: " << report_path.string() << "\n";
    } else if (*serve_cmd) {
      const auto [host, port] = mergeq::parse_host_port(serve_bind);
      mergeq::ServerOptions opt;
      opt.host = host;
      opt.port = port;
      opt.seed = serve_seed;
      opt.delay_fixed_ms = serve_delay;
      opt.delay_jitter_ms = serve_jitter;
      mergeq::DecisionServer server(mergeq::load_weights(serve_weights), opt);
      server.start();
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "serving on " << host << ":" << server.port() << std::endl;
      while (!g_interrupted)
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      std::cout << "served " << server.decisions_served() << " decisions, "
                << server.errors_sent() << " errors\n";
    } else if (*decide_cmd) {
      const auto [host, port] = mergeq::parse_host_port(decide_addr);
      mergeq::DecisionRequest req;
      req.id = decide_id;
      req.obs = decide_obs;
      req.mode = decide_mode;
      req.tau = decide_tau;
      if (decide_seed_opt->count() > 0) req.seed = decide_seed;
      const auto wire = mergeq::request_decision(host, port, req, decide_timeout);
      if (wire.response.error) {
        std::cerr << "server error " << wire.response.error->code << ": "
                  << wire.response.error->msg << "\n";
        return 1;
      }
      std::cout << wire.response.action << "\n";
    } else if (*simcheck_cmd) {
      mergeq::AppConfig cfg = build_config(config_path, overrides);
      if (simcheck_rollouts < 1)
        throw mergeq::ConfigError("rollouts: must be at least 1");
      const auto report = mergeq::invariant_sweep(cfg.road, cfg.drivers,
                                                  simcheck_rollouts, simcheck_seed);
      std::cout << "rollouts: " << report.rollouts << "\n"
                << "overlap violations: " << report.overlap_violations << "\n"
                << "speed violations: " << report.speed_violations << "\n"
                << "roadblock violations: " << report.roadblock_violations << "\n"
                << "order violations: " << report.order_violations << "\n"
                << "determinism violations: " << report.determinism_violations
                << "\n";
      if (report.total() != 0) {
        std::cout << "FAIL\n";
        return 1;
      }
      std::cout << "PASS\n";
    }
  } catch (const mergeq::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
