#include "mergeq/dqn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "mergeq/errors.hpp"

namespace mergeq {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay_capacity: must be at least 1");
  ring_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (ring_.size() < capacity_) {
    ring_.push_back(std::move(t));
  } else {
    ring_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
  ++inserted_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= ring_.size()) throw std::out_of_range("replay index");
  if (ring_.size() < capacity_) return ring_[i];
  return ring_[(head_ + i) % capacity_];
}

std::vector<Transition> ReplayBuffer::sample(std::size_t k, Rng& rng) const {
  if (k > ring_.size())
    throw std::invalid_argument("sample of " + std::to_string(k) +
                                " from buffer of " + std::to_string(ring_.size()));
  // Floyd's subset sampling: uniform k-subsets in O(k) draws.
  std::vector<std::size_t> picked;
  picked.reserve(k);
  for (std::size_t j = ring_.size() - k; j < ring_.size(); ++j) {
    const std::size_t t = static_cast<std::size_t>(rng.uniform_int(j + 1));
    if (std::find(picked.begin(), picked.end(), t) != picked.end())
      picked.push_back(j);
    else
      picked.push_back(t);
  }
  std::vector<Transition> batch;
  batch.reserve(k);
  for (std::size_t idx : picked) batch.push_back(at(idx));
  return batch;
}

std::string policy_name(PolicyKind kind) {
  return kind == PolicyKind::eps_greedy ? "eps_greedy" : "boltzmann";
}

PolicyKind parse_policy(const std::string& name) {
  if (name == "eps_greedy") return PolicyKind::eps_greedy;
  if (name == "boltzmann") return PolicyKind::boltzmann;
  throw ConfigError("policy: unknown value '" + name +
                    "' (expected eps_greedy or boltzmann)");
}

void PolicySpec::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw ConfigError("epsilon: must be in [0, 1]");
  if (!(tau > 0.0)) throw ConfigError("tau: must be positive");
}

void Hyperparams::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma: must be in [0, 1)");
  if (!(lr > 0.0)) throw ConfigError("lr: must be positive");
  if (batch_size < 1) throw ConfigError("batch_size: must be at least 1");
  if (static_cast<std::size_t>(batch_size) > replay_capacity)
    throw ConfigError("batch_size: must not exceed replay_capacity");
  if (warmup < 0) throw ConfigError("warmup: must be non-negative");
  if (episodes < 1) throw ConfigError("episodes: must be at least 1");
  if (steps_per_episode < 1)
    throw ConfigError("steps_per_episode: must be at least 1");
  if (target_sync < 0) throw ConfigError("target_sync: must be non-negative");
}

int argmax_lowest(std::span<const double> q) {
  if (q.empty()) throw std::invalid_argument("argmax of empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(q.size()); ++i)
    if (q[i] > q[best]) best = i;
  return best;
}

int select_action_eps_greedy(std::span<const double> q, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("epsilon must be in [0, 1]");
  if (epsilon > 0.0 && rng.uniform() < epsilon)
    return static_cast<int>(rng.uniform_int(q.size()));
  return argmax_lowest(q);
}

std::vector<double> boltzmann_probs(std::span<const double> q, double tau) {
  if (q.empty()) throw std::invalid_argument("empty q vector");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  const double m = *std::max_element(q.begin(), q.end());
  std::vector<double> p(q.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    p[i] = std::exp((q[i] - m) / tau);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

int select_action_boltzmann(std::span<const double> q, double tau, Rng& rng) {
  const auto p = boltzmann_probs(q, tau);
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cum += p[i];
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

double td_target(const Transition& t, double gamma, const Weights& w) {
  if (t.done) return t.r;
  const auto q_next = forward(w, t.s_next);
  return t.r + gamma * *std::max_element(q_next.begin(), q_next.end());
}

TrainResult train(MergeEnv& env, const PolicySpec& policy,
                  const Hyperparams& hp, std::uint64_t seed) {
  policy.validate();
  hp.validate();
  if (hp.steps_per_episode != env.config().steps_per_episode)
    throw ConfigError("steps_per_episode: agent (" +
                      std::to_string(hp.steps_per_episode) +
                      ") and environment (" +
                      std::to_string(env.config().steps_per_episode) +
                      ") disagree");

  Topology topo;
  topo.layer_widths = {env.obs_width(), 24, 24, env.action_count()};
  Weights w = init_network(topo, mix_seed(seed, 0xA11CE));
  Weights frozen = w;
  Rng agent_rng(mix_seed(seed, 0xB0B));
  ReplayBuffer buf(hp.replay_capacity);

  TrainResult out;
  out.log.rows.reserve(static_cast<std::size_t>(hp.episodes) *
                       hp.steps_per_episode);
  const std::string pname = policy_name(policy.kind);
  std::uint64_t total_steps = 0;

  for (int ep = 0; ep < hp.episodes; ++ep) {
    std::vector<double> obs = env.reset(static_cast<std::uint64_t>(ep));
    for (int st = 0; st < hp.steps_per_episode; ++st) {
      const auto t0 = std::chrono::steady_clock::now();

      const std::vector<double> q = forward(w, obs);
      const int a = policy.kind == PolicyKind::eps_greedy
                        ? select_action_eps_greedy(q, policy.epsilon, agent_rng)
                        : select_action_boltzmann(q, policy.tau, agent_rng);
      StepResult sr = env.step(a);
      buf.push({obs, a, sr.reward, sr.obs, sr.done});
      ++total_steps;

      if (total_steps > static_cast<std::uint64_t>(hp.warmup) &&
          buf.size() >= static_cast<std::size_t>(hp.batch_size)) {
        const auto batch = buf.sample(static_cast<std::size_t>(hp.batch_size),
                                      agent_rng);
        const Weights& target_net = hp.target_sync > 0 ? frozen : w;
        std::vector<double> targets(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i)
          targets[i] = td_target(batch[i], hp.gamma, target_net);
        for (std::size_t i = 0; i < batch.size(); ++i)
          sgd_step(w, batch[i].s, batch[i].a, targets[i], hp.lr);
        if (hp.target_sync > 0 &&
            total_steps % static_cast<std::uint64_t>(hp.target_sync) == 0)
          frozen = w;
      }

      const double wall_ms =
          std::chrono::duration<double, std::milli>(
              std::chrono::steady_clock::now() - t0)
              .count();
      MetricsRow row;
      row.policy = pname;
      row.seed = seed;
      row.episode = ep;
      row.step = st;
      row.action = a;
      row.reward = sr.reward;
      row.q_max = *std::max_element(q.begin(), q.end());
      row.wall_ms = wall_ms;
      out.log.rows.push_back(std::move(row));

      obs = std::move(sr.obs);
    }
  }
  out.weights = std::move(w);
  return out;
}

}  // namespace mergeq
