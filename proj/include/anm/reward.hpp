#pragma once

#include <vector>

#include "anm/grid.hpp"
#include "anm/power_flow.hpp"

namespace anm {

struct RewardTerms {
  double network_losses = 0.0;  // Delta t * sum of all device P, MWh
  double des_energy = 0.0;      // -Delta t * P_des, MWh
  double curtailment = 0.0;     // Delta t * sum (P_max - P) over non-slack gens, MWh
  double penalty = 0.0;         // Phi, p.u. h
  double raw = 0.0;             // before clipping
  double reward = 0.0;
};

/// Closed-form reward shared by the reference environment and every surrogate.
/// `device_p` holds P (MW) for every device including the slack, `p_max` the
/// available capacity per non-slack generator at the new time step.
RewardTerms compute_reward(const GridConfig& config, const std::vector<double>& device_p,
                           const std::vector<double>& p_max, const std::vector<double>& v_mag,
                           const pf::BranchFlows& flows);

/// Branch flows from the predicted voltages followed by compute_reward.
RewardTerms reward_from_voltages(const GridConfig& config, const std::vector<double>& device_p,
                                 const std::vector<double>& p_max, const std::vector<double>& v_mag,
                                 const std::vector<double>& theta, pf::BranchFlows* flows_out = nullptr);

double clip_reward(const GridConfig& config, double raw);

}  // namespace anm
