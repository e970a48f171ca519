#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "anm/transition_model.hpp"

namespace anm::rl {

/// Rollout storage size: one slot per env per step between updates.
/// Throws std::invalid_argument unless both are positive.
std::int64_t buffer_capacity(int n_envs, int buffer_size);

/// n_envs copies of one transition model stepped in lockstep. The model sees
/// the whole batch at once; the cascade evaluates it as one forward pass.
class VecEnv {
 public:
  struct Step {
    std::vector<State> states;  // after auto-reset, what the agent sees next
    std::vector<double> rewards;
    std::vector<char> dones;      // failure
    std::vector<char> truncated;  // episode length reached
    std::vector<State> final_states;  // pre-reset next state of each env
  };

  VecEnv(std::shared_ptr<const TransitionModel> model, const GridConfig& config, int n_envs, std::uint64_t seed,
         int episode_length, bool auto_reset = true);

  const std::vector<State>& reset();
  Step step(const std::vector<Action>& actions);

  int n_envs() const { return static_cast<int>(states_.size()); }
  int episode_length() const { return episode_length_; }
  const std::vector<State>& states() const { return states_; }
  const std::vector<int>& elapsed() const { return elapsed_; }
  const TransitionModel& model() const { return *model_; }

 private:
  State fresh_state(int i);

  std::shared_ptr<const TransitionModel> model_;
  GridConfig config_;
  int episode_length_;
  bool auto_reset_;
  std::vector<std::mt19937_64> rngs_;
  std::vector<State> states_;
  std::vector<int> elapsed_;
};

}  // namespace anm::rl
