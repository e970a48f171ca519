#pragma once

#include <string>
#include <vector>

#include "anm/env.hpp"

namespace anm {

/// Anything that maps a batch of (s_t, a_t) to outcomes with the reference
/// environment's semantics: the reference env itself, the physics-informed
/// cascade, or a data-driven baseline.
class TransitionModel {
 public:
  virtual ~TransitionModel() = default;
  virtual std::vector<StepOutcome> step_batch(const std::vector<State>& states,
                                              const std::vector<Action>& actions) const = 0;
  /// Consistent state for (aux, soc), used when an episode starts.
  virtual State reset_state(int aux, double soc) const = 0;
  virtual std::string name() const = 0;

  StepOutcome step(const State& state, const Action& action) const {
    return step_batch({state}, {action}).front();
  }
};

class ReferenceModel final : public TransitionModel {
 public:
  ReferenceModel(GridConfig config, DailyProfiles profiles);
  std::vector<StepOutcome> step_batch(const std::vector<State>& states,
                                      const std::vector<Action>& actions) const override;
  State reset_state(int aux, double soc) const override;
  std::string name() const override { return "reference"; }

  const GridConfig& config() const { return config_; }

 private:
  GridConfig config_;
  DailyProfiles profiles_;
  AdmittanceMatrix y_;
};

}  // namespace anm
