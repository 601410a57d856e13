#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "xlight/agent.hpp"
#include "xlight/gpi.hpp"
#include "xlight/sim.hpp"

namespace xlight {

struct TrainConfig {
  std::vector<std::string> scenario_paths;
  int episodes = 100;
  std::uint64_t seed = 1;
  int interval_s = 15;
  ModelConfig model;
  PpoConfig ppo;
  RewardWeights reward;
  std::string out_dir;  // empty: no CSV/checkpoint files
  int ckpt_every = 0;   // 0: final checkpoint only
  int jobs = 1;         // scenario-parallel rollout workers
};

struct RolloutRecord {
  int scenario = 0;
  int node = 0;  // node index within the scenario
  int step = 0;
  std::vector<StepGroup> window;     // K step-groups, oldest first
  std::vector<std::uint8_t> valid;   // K
  int action = 0;
  double logp = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
  double advantage = 0.0;
  double ret = 0.0;
};

struct RolloutBuffer {
  std::vector<RolloutRecord> records;
};

// delta_t = r_t + gamma*V_{t+1}*(1-done_t) - V_t; A_t = sum (gamma*lambda)^k
// delta_{t+k} truncated at episode ends; returns = A + V
std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<std::uint8_t>& dones, double gamma, double lambda);

// Runs one full episode of a scenario with the current policy, optionally
// recording transitions. Caches the per-step intersection embeddings so
// action selection reuses them across the sliding window.
class EpisodeRollout {
 public:
  EpisodeRollout(const ScenarioSpec& spec, std::uint64_t sim_seed,
                 const ModelConfig& model, const RewardWeights& reward,
                 int interval_s);

  // action_rng null -> greedy evaluation; buffer null -> no recording
  void run(const nn::ParamStore& params, Rng* action_rng,
           RolloutBuffer* buffer, int scenario_index);

  Sim& sim() { return sim_; }
  const Sim& sim() const { return sim_; }
  double mean_reward() const { return steps_ ? reward_sum_ / steps_ : 0.0; }

 private:
  const ModelConfig& model_;
  const RewardWeights& reward_;
  int interval_s_;
  Sim sim_;
  std::vector<int> nodes_;
  std::vector<UnifiedLayout> layouts_;
  std::vector<std::vector<int>> neighbor_pos_;  // index into nodes_
  double reward_sum_ = 0.0;
  long steps_ = 0;
};

struct UpdateStats {
  double l_actor = 0.0;
  double l_critic = 0.0;
  double l_pred = 0.0;
  double entropy = 0.0;
  std::vector<double> mean_reward;  // per scenario
  std::vector<double> mean_trip;    // per scenario
};

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  // one episode per scenario plus one PPO update
  UpdateStats run_episode(int episode_index);
  // full loop: CSV log, periodic + final checkpoints
  void train();

  nn::ParamStore& params() { return params_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<ScenarioSpec>& scenarios() const { return specs_; }
  const std::string loss_csv() const { return csv_.str(); }

  // PPO update over a prepared buffer (advantages computed inside)
  UpdateStats update(RolloutBuffer& buffer);

 private:
  TrainConfig cfg_;
  std::vector<ScenarioSpec> specs_;
  nn::ParamStore params_;
  nn::Adam opt_;
  Rng shuffle_rng_;
  std::ostringstream csv_;
};

}  // namespace xlight
