#include "anm/transition_model.hpp"

#include <stdexcept>

namespace anm {

ReferenceModel::ReferenceModel(GridConfig config, DailyProfiles profiles)
    : config_(std::move(config)), profiles_(std::move(profiles)), y_(build_admittance(config_)) {}

std::vector<StepOutcome> ReferenceModel::step_batch(const std::vector<State>& states,
                                                    const std::vector<Action>& actions) const {
  if (states.size() != actions.size()) throw std::invalid_argument("step_batch: one action per state expected");
  std::vector<StepOutcome> out;
  out.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i)
    out.push_back(reference_transition(config_, profiles_, y_, states[i], actions[i]));
  return out;
}

State ReferenceModel::reset_state(int aux, double soc) const {
  return initial_state(config_, profiles_, y_, aux, soc);
}

}  // namespace anm
