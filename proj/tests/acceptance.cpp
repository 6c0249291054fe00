// Acceptance gate: every release-blocking requirement as one runnable check.
// Usage: acceptance [criterion numbers...]; no arguments runs all nine.
// Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mergeq/config.hpp"
#include "mergeq/dqn.hpp"
#include "mergeq/errors.hpp"
#include "mergeq/harness.hpp"
#include "mergeq/metrics.hpp"
#include "mergeq/net.hpp"
#include "mergeq/rng.hpp"
#include "mergeq/service.hpp"
#include "mergeq/sim.hpp"

using namespace mergeq;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---- criterion 1: exact parameter count ----

Outcome check_param_count() {
  const int n = param_count(Topology{{1, 24, 24, 12}});
  return {n == 948, "param_count([1,24,24,12]) = " + std::to_string(n) +
                        ", expected 948"};
}

// ---- criteria 2 and 3 share one comparison experiment ----

struct ComparisonRun {
  CompareReport report;
  fs::path out_dir;
};

ComparisonRun run_comparison(const std::vector<std::uint64_t>& seeds) {
  ComparisonRun run;
  run.out_dir = fs::temp_directory_path() / "mergeq_acceptance_compare";
  fs::remove_all(run.out_dir);
  fs::create_directories(run.out_dir);
  AppConfig cfg;
  cfg.out_dir = run.out_dir.string();
  run.report = compare_policies(cfg, seeds);
  write_compare_report(run.report, run.out_dir / "compare_report.json");
  return run;
}

Outcome check_experiment_scale(const ComparisonRun& run) {
  const AppConfig cfg;
  const std::size_t want = static_cast<std::size_t>(cfg.hp.episodes) *
                           static_cast<std::size_t>(cfg.hp.steps_per_episode);
  double worst_seconds = 0.0;
  for (const auto& r : run.report.runs) {
    const MetricsLog log = read_metrics_csv(r.metrics_file);
    if (log.rows.size() != want)
      return {false, r.run_id + " logged " + std::to_string(log.rows.size()) +
                         " rows, expected " + std::to_string(want)};
    worst_seconds = std::max(worst_seconds, r.runtime_seconds);
  }
  std::ostringstream detail;
  detail << run.report.runs.size() << " runs x " << want
         << " rows, slowest run " << worst_seconds << "s (budget 300s)";
  return {worst_seconds < 300.0, detail.str()};
}

Outcome check_policy_comparison(const ComparisonRun& run) {
  double eps_mean = 0.0;
  double boltz_mean = 0.0;
  int wins = 0;
  std::ostringstream detail;
  for (std::uint64_t seed : run.report.seeds) {
    std::optional<double> eps, boltz;
    for (const auto& r : run.report.runs) {
      if (r.seed != seed) continue;
      if (r.policy == "eps_greedy") eps = r.eval_reward_mean;
      if (r.policy == "boltzmann") boltz = r.eval_reward_mean;
    }
    if (!eps || !boltz) return {false, "missing runs for a seed"};
    if (*eps > *boltz) ++wins;
    eps_mean += *eps;
    boltz_mean += *boltz;
    detail << " s" << seed << ":" << (*eps > *boltz ? "+" : *eps == *boltz ? "=" : "-");
  }
  const auto n = static_cast<double>(run.report.seeds.size());
  std::ostringstream out;
  out << "eps-greedy eval wins " << wins << "/" << run.report.seeds.size()
      << " seeds (need >= 4);" << detail.str() << "  mean eval "
      << eps_mean / n << " vs " << boltz_mean / n;
  return {wins >= 4, out.str()};
}

// ---- criterion 4: gradient oracle ----

double loss_at(const Weights& w, const std::vector<double>& x, int action,
               double target) {
  const double q = forward(w, x)[action];
  return (target - q) * (target - q);
}

bool near_relu_kink(const Weights& w, const std::vector<double>& x) {
  std::vector<double> act = x;
  for (std::size_t l = 0; l + 1 < w.layers.size(); ++l) {
    const Layer& layer = w.layers[l];
    std::vector<double> next(layer.out);
    for (int o = 0; o < layer.out; ++o) {
      double z = layer.b[o];
      for (int i = 0; i < layer.in; ++i) z += layer.w[o * layer.in + i] * act[i];
      if (std::abs(z) < 1e-4) return true;
      next[o] = z > 0.0 ? z : 0.0;
    }
    act = std::move(next);
  }
  return false;
}

Outcome check_gradients() {
  const std::vector<Topology> topologies = {
      Topology{{1, 4, 3}},  Topology{{2, 5, 5, 3}}, Topology{{3, 2}},
      Topology{{1, 6, 12}}, Topology{{4, 3, 3, 2}}};
  Rng rng(4242);
  double worst = 0.0;
  int nets = 0;
  while (nets < 20) {
    const Topology& topo = topologies[nets % topologies.size()];
    Weights w = init_network(topo, rng.next_u64());
    std::vector<double> x(topo.layer_widths.front());
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    if (near_relu_kink(w, x)) continue;
    const int action = static_cast<int>(
        rng.uniform_int(static_cast<std::uint32_t>(topo.layer_widths.back())));
    const double target = rng.uniform(-2.0, 2.0);

    const Weights g = gradients(w, x, action, target);
    const double h = 1e-6;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      Layer& layer = w.layers[l];
      for (std::size_t i = 0; i < layer.w.size() + layer.b.size(); ++i) {
        double& param = i < layer.w.size() ? layer.w[i]
                                           : layer.b[i - layer.w.size()];
        const double analytic = i < layer.w.size()
                                    ? g.layers[l].w[i]
                                    : g.layers[l].b[i - layer.w.size()];
        const double saved = param;
        param = saved + h;
        const double up = loss_at(w, x, action, target);
        param = saved - h;
        const double down = loss_at(w, x, action, target);
        param = saved;
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic - numeric) /
                                    std::max(1.0, std::abs(numeric)));
      }
    }
    ++nets;
  }
  std::ostringstream detail;
  detail << nets << " networks, max relative error " << worst
         << " (tolerance 1e-4)";
  return {worst < 1e-4, detail.str()};
}

// ---- criterion 5: simulator invariant sweep ----

Outcome check_sim_invariants() {
  const SweepReport rep = invariant_sweep(RoadConfig{}, DriverParams{}, 1000, 1);
  std::ostringstream detail;
  detail << rep.rollouts << " rollouts: " << rep.overlap_violations
         << " overlap, " << rep.speed_violations << " speed, "
         << rep.roadblock_violations << " roadblock, " << rep.order_violations
         << " ordering, " << rep.determinism_violations
         << " determinism violations";
  return {rep.rollouts == 1000 && rep.total() == 0, detail.str()};
}

// ---- criterion 6: exploration policy properties ----

Outcome check_policy_properties() {
  Rng rng(606);

  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> q(12);
    for (double& v : q) v = rng.uniform(-4.0, 4.0);

    const auto p = boltzmann_probs(q, 1.0);
    double sum = 0.0;
    for (double v : p) sum += v;
    if (std::abs(sum - 1.0) > 1e-9)
      return {false, "softmax sum deviates by " + std::to_string(sum - 1.0)};

    const double shift = rng.uniform(-30.0, 30.0);
    std::vector<double> shifted(12);
    for (int i = 0; i < 12; ++i) shifted[i] = q[i] + shift;
    const auto ps = boltzmann_probs(shifted, 1.0);
    for (int i = 0; i < 12; ++i)
      if (std::abs(p[i] - ps[i]) > 1e-12)
        return {false, "softmax is not shift-invariant"};

    const double alpha = rng.uniform(0.1, 4.0);
    const double beta = rng.uniform(-10.0, 10.0);
    std::vector<double> mapped(12);
    for (int i = 0; i < 12; ++i) mapped[i] = alpha * q[i] + beta;
    Rng a(1), b(1);
    if (select_action_eps_greedy(q, 0.0, a) !=
        select_action_eps_greedy(mapped, 0.0, b))
      return {false, "greedy selection is not affine-invariant"};
  }

  std::vector<double> q(12, 0.0);
  q[5] = 50.0;
  std::vector<int> counts(12, 0);
  const int draws = 12000;
  for (int i = 0; i < draws; ++i)
    ++counts[select_action_eps_greedy(q, 1.0, rng)];
  const double expected = draws / 12.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;

  std::ostringstream detail;
  detail << "sum/shift/affine over 200 trials ok; eps=1 chi2 = " << chi2
         << " over " << draws << " draws (p>0.01 bound 24.725)";
  return {chi2 < 24.725, detail.str()};
}

// ---- criterion 7: replay buffer behavior ----

Outcome check_replay_buffer() {
  ReplayBuffer fifo(2);
  for (int i = 1; i <= 3; ++i) {
    Transition t;
    t.s = {0.0};
    t.s_next = {0.0};
    t.r = i;
    fifo.push(t);
  }
  if (fifo.size() != 2 || fifo.at(0).r != 2 || fifo.at(1).r != 3)
    return {false, "FIFO eviction kept the wrong entries"};

  ReplayBuffer buf(100);
  for (int i = 0; i < 100; ++i) {
    Transition t;
    t.s = {0.0};
    t.s_next = {0.0};
    t.r = i;
    buf.push(t);
  }
  Rng rng(707);
  std::vector<int> hits(100, 0);
  const int draws = 4000;
  for (int d = 0; d < draws; ++d)
    for (const auto& t : buf.sample(10, rng)) ++hits[static_cast<int>(t.r)];
  double lo = 1.0, hi = 0.0;
  for (int h : hits) {
    const double freq = static_cast<double>(h) / draws;
    lo = std::min(lo, freq);
    hi = std::max(hi, freq);
  }
  std::ostringstream detail;
  detail << "FIFO ok; inclusion frequency in [" << lo << ", " << hi
         << "] (want 0.1 +- 0.02)";
  return {lo >= 0.08 && hi <= 0.12, detail.str()};
}

// ---- criterion 8: weight persistence ----

Outcome check_persistence() {
  const fs::path dir = fs::temp_directory_path() / "mergeq_acceptance_weights";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path a = dir / "a.mrw1";
  const fs::path b = dir / "b.mrw1";

  const Weights w = init_network(Topology{{1, 24, 24, 12}}, 31415);
  save_weights(w, a);
  const Weights r1 = load_weights(a);
  save_weights(r1, b);
  const Weights r2 = load_weights(b);
  if (!(r1 == r2)) return {false, "stored values changed across a round trip"};

  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
  if (bytes_a != bytes_b) return {false, "file bytes changed across a round trip"};

  int rejected = 0;
  {
    std::ofstream out(a, std::ios::binary);
    out << "WRNG" << std::string(12, '\0');
  }
  try {
    load_weights(a);
  } catch (const FormatError&) {
    ++rejected;
  }
  save_weights(w, a);
  fs::resize_file(a, fs::file_size(a) / 2);
  try {
    load_weights(a);
  } catch (const FormatError&) {
    ++rejected;
  }
  save_weights(w, a);
  {
    std::ofstream out(a, std::ios::binary | std::ios::app);
    out << "zz";
  }
  try {
    load_weights(a);
  } catch (const FormatError&) {
    ++rejected;
  }
  fs::remove_all(dir);

  std::ostringstream detail;
  detail << "round trip bit-exact; " << rejected
         << "/3 corrupt files rejected with format errors";
  return {rejected == 3, detail.str()};
}

// ---- criterion 9: service equivalence and latency ----

Outcome check_service() {
  const fs::path dir = fs::temp_directory_path() / "mergeq_acceptance_service";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path wpath = dir / "served.mrw1";
  save_weights(init_network(Topology{{1, 24, 24, 12}}, 2026), wpath);
  const Weights w = load_weights(wpath);

  DecisionServer server(w);
  server.start();
  DecisionClient client("127.0.0.1", server.port());

  Rng rng(909);
  std::vector<std::int64_t> rtts;
  rtts.reserve(1000);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    DecisionRequest req;
    req.id = i;
    req.obs = {rng.uniform()};
    const auto [res, rtt] = client.roundtrip(req);
    if (res.error.has_value()) {
      server.stop();
      fs::remove_all(dir);
      return {false, "request " + std::to_string(i) + " failed: " +
                         res.error->msg};
    }
    const auto q = forward(w, req.obs);
    if (res.action != argmax_lowest(q) || res.q != q) ++mismatches;
    rtts.push_back(rtt);
  }
  server.stop();
  fs::remove_all(dir);

  std::sort(rtts.begin(), rtts.end());
  const std::int64_t p99 = rtts[989];
  std::ostringstream detail;
  detail << mismatches << "/1000 wire decisions differ from in-process"
         << " inference; loopback p99 " << p99 << "us (budget 5000us)";
  return {mismatches == 0 && p99 < 5000, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    try {
      const int n = std::stoi(argv[i]);
      if (n < 1 || n > 9) throw std::out_of_range("criterion");
      wanted.insert(n);
    } catch (const std::exception&) {
      std::fprintf(stderr, "usage: %s [criterion 1..9]...\n", argv[0]);
      return 2;
    }
  }
  if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  std::optional<ComparisonRun> comparison;
  if (wanted.count(2) || wanted.count(3)) {
    const std::vector<std::uint64_t> seeds =
        wanted.count(3) ? std::vector<std::uint64_t>{1, 2, 3, 4, 5}
                        : std::vector<std::uint64_t>{1};
    comparison = run_comparison(seeds);
  }

  bool all_pass = true;
  for (int n : wanted) {
    Outcome outcome;
    try {
      switch (n) {
        case 1: outcome = check_param_count(); break;
        case 2: outcome = check_experiment_scale(*comparison); break;
        case 3: outcome = check_policy_comparison(*comparison); break;
        case 4: outcome = check_gradients(); break;
        case 5: outcome = check_sim_invariants(); break;
        case 6: outcome = check_policy_properties(); break;
        case 7: outcome = check_replay_buffer(); break;
        case 8: outcome = check_persistence(); break;
        case 9: outcome = check_service(); break;
      }
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::printf("C%d %s: %s\n", n, outcome.pass ? "PASS" : "FAIL",
                outcome.detail.c_str());
    all_pass = all_pass && outcome.pass;
  }
  return all_pass ? 0 : 1;
}
