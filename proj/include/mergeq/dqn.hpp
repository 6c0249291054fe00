#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mergeq/env.hpp"
#include "mergeq/metrics.hpp"
#include "mergeq/net.hpp"
#include "mergeq/rng.hpp"

namespace mergeq {

struct Transition {
  std::vector<double> s;
  int a = 0;
  double r = 0.0;
  std::vector<double> s_next;
  bool done = false;

  bool operator==(const Transition&) const = default;
};

// Fixed-capacity FIFO store; index 0 is always the oldest surviving entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::vector<Transition> sample(std::size_t k, Rng& rng) const;

  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  const Transition& at(std::size_t i) const;

 private:
  std::vector<Transition> ring_;
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::uint64_t inserted_ = 0;
};

enum class PolicyKind { eps_greedy, boltzmann };

std::string policy_name(PolicyKind kind);
PolicyKind parse_policy(const std::string& name);

struct PolicySpec {
  PolicyKind kind = PolicyKind::eps_greedy;
  double epsilon = 0.1;
  double tau = 1.0;

  void validate() const;
};

struct Hyperparams {
  double gamma = 0.99;
  double lr = 1e-3;
  int batch_size = 32;
  int warmup = 100;
  int episodes = 400;
  int steps_per_episode = 50;
  std::size_t replay_capacity = 10000;
  int target_sync = 0;  // copy weights into a frozen target every K steps; 0 = single weight set

  void validate() const;
};

int argmax_lowest(std::span<const double> q);
int select_action_eps_greedy(std::span<const double> q, double epsilon, Rng& rng);
std::vector<double> boltzmann_probs(std::span<const double> q, double tau);
int select_action_boltzmann(std::span<const double> q, double tau, Rng& rng);

double td_target(const Transition& t, double gamma, const Weights& w);

struct TrainResult {
  Weights weights;
  MetricsLog log;
};

TrainResult train(MergeEnv& env, const PolicySpec& policy,
                  const Hyperparams& hp, std::uint64_t seed);

}  // namespace mergeq
