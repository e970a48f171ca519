#include "anm/reward.hpp"

#include <algorithm>

namespace anm {

double clip_reward(const GridConfig& config, double raw) {
  return std::clamp(raw, config.reward_min, config.reward_max);
}

RewardTerms compute_reward(const GridConfig& config, const std::vector<double>& device_p,
                           const std::vector<double>& p_max, const std::vector<double>& v_mag,
                           const pf::BranchFlows& flows) {
  const double dt = config.delta_t;
  RewardTerms t;
  for (double p : device_p) t.network_losses += p;
  t.network_losses *= dt;
  // p_max follows the controllable generators in device order.
  std::size_t k = 0;
  for (std::size_t d = 0; d < config.devices.size(); ++d) {
    const auto kind = config.devices[d].kind;
    if (kind == DeviceKind::des) t.des_energy = -dt * device_p[d];
    if (kind == DeviceKind::renewable_gen) t.curtailment += p_max[k++] - device_p[d];
  }
  t.curtailment *= dt;

  double phi = 0.0;
  for (int i = 0; i < config.n_buses(); ++i) {
    phi += std::max(v_mag[i] - config.buses[i].v_max, 0.0);
    phi += std::max(config.buses[i].v_min - v_mag[i], 0.0);
  }
  for (std::size_t l = 0; l < config.branches.size(); ++l) {
    const double rating = config.branches[l].rating;
    phi += std::max(flows.s_from[l] - rating, 0.0);
    phi += std::max(flows.s_to[l] - rating, 0.0);
  }
  t.penalty = dt * phi;
  t.raw = -(t.network_losses + t.des_energy + t.curtailment + config.lambda_penalty * t.penalty);
  t.reward = clip_reward(config, t.raw);
  return t;
}

RewardTerms reward_from_voltages(const GridConfig& config, const std::vector<double>& device_p,
                                 const std::vector<double>& p_max, const std::vector<double>& v_mag,
                                 const std::vector<double>& theta, pf::BranchFlows* flows_out) {
  auto flows = pf::branch_flows(v_mag, theta, config);
  auto terms = compute_reward(config, device_p, p_max, v_mag, flows);
  if (flows_out) *flows_out = std::move(flows);
  return terms;
}

}  // namespace anm
