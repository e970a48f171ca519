#include "anm/rl/vec_env.hpp"

#include <stdexcept>
#include <string>

namespace anm::rl {

std::int64_t buffer_capacity(int n_envs, int buffer_size) {
  if (n_envs <= 0 || buffer_size <= 0)
    throw std::invalid_argument("buffer_capacity: n_envs and buffer_size must be positive, got " +
                                std::to_string(n_envs) + " and " + std::to_string(buffer_size));
  return static_cast<std::int64_t>(n_envs) * buffer_size;
}

VecEnv::VecEnv(std::shared_ptr<const TransitionModel> model, const GridConfig& config, int n_envs,
               std::uint64_t seed, int episode_length, bool auto_reset)
    : model_(std::move(model)), config_(config), episode_length_(episode_length), auto_reset_(auto_reset) {
  if (!model_) throw std::invalid_argument("VecEnv: no transition model");
  if (n_envs <= 0) throw std::invalid_argument("VecEnv: n_envs must be positive");
  if (episode_length <= 0) throw std::invalid_argument("VecEnv: episode_length must be positive");
  for (int i = 0; i < n_envs; ++i) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(i)};
    rngs_.emplace_back(seq);
  }
  states_.resize(n_envs);
  elapsed_.assign(n_envs, 0);
  reset();
}

State VecEnv::fresh_state(int i) {
  const auto& des = config_.devices[config_.des_device()];
  std::uniform_int_distribution<int> aux(0, config_.aux_modulus - 1);
  std::uniform_real_distribution<double> soc(des.soc_min, des.soc_max);
  const int a = aux(rngs_[i]);
  return model_->reset_state(a, soc(rngs_[i]));
}

const std::vector<State>& VecEnv::reset() {
  for (int i = 0; i < n_envs(); ++i) {
    states_[i] = fresh_state(i);
    elapsed_[i] = 0;
  }
  return states_;
}

VecEnv::Step VecEnv::step(const std::vector<Action>& actions) {
  if (static_cast<int>(actions.size()) != n_envs())
    throw std::invalid_argument("VecEnv::step: expected " + std::to_string(n_envs()) + " actions, got " +
                                std::to_string(actions.size()));
  auto outs = model_->step_batch(states_, actions);
  Step s;
  const int n = n_envs();
  s.rewards.resize(n);
  s.dones.resize(n);
  s.truncated.resize(n);
  s.final_states.resize(n);
  for (int i = 0; i < n; ++i) {
    auto& o = outs[i];
    ++elapsed_[i];
    s.rewards[i] = o.reward;
    s.dones[i] = o.done;
    s.truncated[i] = !o.done && elapsed_[i] >= episode_length_;
    s.final_states[i] = o.next_state;
    if (auto_reset_ && (s.dones[i] || s.truncated[i])) {
      states_[i] = fresh_state(i);
      elapsed_[i] = 0;
    } else {
      states_[i] = std::move(o.next_state);
    }
  }
  s.states = states_;
  return s;
}

}  // namespace anm::rl
