#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "anm/env.hpp"
#include "anm/nn/adamw.hpp"
#include "anm/nn/mlp.hpp"
#include "anm/rl/vec_env.hpp"

namespace anm::rl {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_range = 0.2;
  double learning_rate = 3e-4;
  int n_epochs = 10;
  int minibatch = 64;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  int n_envs = 8;
  int buffer_size = 256;
  int eval_every = 1;          // updates between evaluations
  int patience_episodes = 20;  // training episodes without a better evaluation before stopping
  int eval_episodes = 1;
  int eval_episode_length = 288;
  std::int64_t max_env_steps = 200'000;
  int max_updates = 0;  // 0: no cap
  std::vector<int> hidden = {64, 64};
  double log_std_init = 0.0;
  /// Rewards are multiplied by this before they reach the value net.
  double reward_scale = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Observation fed to both nets: every state entry mapped to [-1, 1] by its
/// configured range, the time slot replaced by its sine and cosine.
class ObservationMap {
 public:
  ObservationMap() = default;
  explicit ObservationMap(const GridConfig& config);
  int dim() const { return static_cast<int>(center_.size()) + 2; }
  void write(const State& s, double* out) const;

 private:
  std::vector<double> center_, inv_half_;
  int aux_modulus_ = 96;
};

/// Gaussian policy in an unbounded space, squashed by tanh onto the action box.
class Policy {
 public:
  Policy() = default;
  Policy(const GridConfig& config, const std::vector<int>& hidden, double log_std_init, std::mt19937_64& rng);

  /// Bounded action for the pre-squash sample u.
  Action squash(const double* u) const;
  Action act_deterministic(const State& s) const;

  int obs_dim() const { return obs_.dim(); }
  int action_dim() const { return static_cast<int>(low_.size()); }
  const ObservationMap& observation() const { return obs_; }

  nn::Mlp<double> mean_net;
  nn::Mlp<double> value_net;
  std::vector<double> log_std;

  nlohmann::json to_json() const;
  static Policy from_json(const GridConfig& config, const nlohmann::json& j);

 private:
  GridConfig config_;
  ObservationMap obs_;
  std::vector<double> low_, high_;
  friend class PpoTrainer;
};

/// Advantages and returns over a [step][env] buffer laid out row by row.
/// `dones[t*n+i]` marks that env i's episode ended with step t; the last row
/// bootstraps from `last_values`.
struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};
GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values, const std::vector<char>& dones,
              const std::vector<double>& last_values, int n_envs, double gamma, double lam);

struct RolloutBuffer {
  RolloutBuffer() = default;
  RolloutBuffer(int n_envs, int buffer_size, int obs_dim, int action_dim);

  int n_envs = 0;
  int buffer_size = 0;
  int obs_dim = 0;
  int action_dim = 0;
  int pos = 0;  // rows written

  std::vector<double> obs;      // capacity x obs_dim
  std::vector<double> actions;  // pre-squash samples, capacity x action_dim
  std::vector<double> log_probs, rewards, values, advantages, returns;
  std::vector<char> dones;
  std::vector<double> last_values;  // per env, after the final row

  std::int64_t capacity() const { return buffer_capacity(n_envs, buffer_size); }
  bool full() const { return pos == buffer_size; }
  void clear() { pos = 0; }
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
};

struct UpdateRecord {
  int update = 0;
  std::int64_t env_steps = 0;
  std::optional<double> eval_score;
  UpdateStats stats;
  double train_seconds = 0.0;  // rollouts and updates, cumulative
  double wall_seconds = 0.0;   // including evaluation
};

struct TrainLog {
  std::vector<UpdateRecord> updates;
  double best_score = 0.0;
  int best_update = -1;
  double train_seconds = 0.0;
  double total_seconds = 0.0;
  bool early_stopped = false;
  std::string backing;

  nlohmann::json record_json(const UpdateRecord& r) const;
  void write_jsonl(const std::filesystem::path& path) const;
  void write_csv(const std::filesystem::path& path) const;
  /// Mean of the last k evaluation scores.
  double mean_last_evals(int k) const;
};

/// Score of one reference-env episode under the deterministic policy. A
/// failure ends the episode; the remaining steps are charged the minimum
/// reward so that collapsing the grid early never pays.
double evaluate_episode(const Policy& policy, Anm6Env& env, std::uint64_t seed, int episode_length);
double evaluate_policy(const Policy& policy, Anm6Env& env, int episodes, std::uint64_t seed, int episode_length);

/// Same protocol for uniform random actions.
double evaluate_random(Anm6Env& env, int episodes, std::uint64_t seed, int episode_length);

class PpoTrainer {
 public:
  PpoTrainer(const GridConfig& config, PpoConfig ppo);

  /// One clipped-objective update over a full buffer.
  UpdateStats update(RolloutBuffer& buffer);

  /// Rollouts on `venv`, evaluation on `eval_env` only.
  TrainLog train(VecEnv& venv, Anm6Env& eval_env, const std::function<void(const UpdateRecord&)>& on_update = {});

  Policy& policy() { return policy_; }
  const Policy& best_policy() const { return best_; }
  const PpoConfig& config() const { return ppo_; }

 private:
  void collect(VecEnv& venv, RolloutBuffer& buffer);

  GridConfig config_;
  PpoConfig ppo_;
  std::mt19937_64 rng_;
  Policy policy_;
  Policy best_;
  nn::AdamW opt_mean_, opt_value_, opt_std_;
};

}  // namespace anm::rl
