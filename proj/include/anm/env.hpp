#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "anm/grid.hpp"
#include "anm/power_flow.hpp"
#include "anm/profiles.hpp"
#include "anm/projection.hpp"
#include "anm/reward.hpp"

namespace anm {

/// MDP state. `p`/`q` hold one entry per device in config order (MW, MVAr),
/// `p_max` one entry per non-slack generator.
struct State {
  std::vector<double> p;
  std::vector<double> q;
  double soc = 0.0;
  std::vector<double> p_max;
  int aux = 0;

  /// Layout: [p..., q..., soc, p_max..., aux].
  std::vector<double> encode() const;
  static State decode(const GridConfig& config, const std::vector<double>& flat);
  bool operator==(const State&) const = default;
};

/// Layout: [a_P per gen..., a_Q per gen..., a_P_des, a_Q_des].
struct Action {
  std::vector<double> p_gen;
  std::vector<double> q_gen;
  double p_des = 0.0;
  double q_des = 0.0;

  std::vector<double> encode() const;
  static Action decode(const GridConfig& config, const std::vector<double>& flat);
};

/// Per-dimension box in the Action layout, taken from the device bounds.
struct ActionBounds {
  std::vector<double> low;
  std::vector<double> high;
};
ActionBounds action_bounds(const GridConfig& config);

/// Per-dimension range of the State layout, used to normalise observations.
struct StateRanges {
  std::vector<double> low;
  std::vector<double> high;
};
StateRanges state_ranges(const GridConfig& config);

struct StepInfo {
  RewardTerms terms;
  std::vector<double> v_mag;
  std::vector<double> theta;
  pf::BranchFlows flows;
  bool converged = true;
  int pf_iterations = 0;
};

struct StepOutcome {
  State next_state;
  double reward = 0.0;
  bool done = false;
  bool truncated = false;
  StepInfo info;
};

/// Q = P tan(arccos pf). Throws std::invalid_argument for pf outside (0, 1].
double load_reactive(double p_load, double power_factor);

/// Quantities fixed by the daily profiles for slot aux_{t+1}.
struct Exogenous {
  int aux = 0;
  std::vector<double> load_p;  // per device, zero for non-loads
  std::vector<double> load_q;
  std::vector<double> p_max;  // per non-slack generator
};
Exogenous exogenous_at(const GridConfig& config, const DailyProfiles& profiles, int aux);
Exogenous advance_exogenous(const GridConfig& config, const DailyProfiles& profiles, int aux_t);

/// Controllable device powers after projection plus the resulting SoC.
struct DeviceDecision {
  std::vector<double> p_gen;
  std::vector<double> q_gen;
  double p_des = 0.0;
  double q_des = 0.0;
  double soc_next = 0.0;
};

/// Exact stage: project every setpoint and update the SoC.
DeviceDecision decide_exact(const GridConfig& config, const State& state, const Action& action,
                            const Exogenous& next);

/// SoC update followed by a clamp that only ever absorbs rounding.
double next_soc(const DeviceSpec& des, double soc_t, double p_des, double delta_t);

/// Per-device (P, Q) in MW/MVAr; the slack entry is left at zero.
std::vector<std::pair<double, double>> device_powers(const GridConfig& config, const DeviceDecision& decision,
                                                     const Exogenous& next);

/// Bus injections 2..N in p.u.
BusInjections injections_pu(const GridConfig& config, const std::vector<std::pair<double, double>>& powers);

/// Grid-side result of a transition: voltages and slack power in p.u.
struct GridSolution {
  std::vector<double> v_mag;
  std::vector<double> theta;
  double slack_p = 0.0;
  double slack_q = 0.0;
  bool converged = true;
  int iterations = 0;
};

/// Assembles s_{t+1}, branch flows and the reward from the stage results.
/// Shared verbatim by the reference environment and every surrogate.
StepOutcome finish_transition(const GridConfig& config, const State& state, const Exogenous& next,
                              const DeviceDecision& decision, const GridSolution& grid);

/// Full reference transition. Pure.
StepOutcome reference_transition(const GridConfig& config, const DailyProfiles& profiles,
                                 const AdmittanceMatrix& y, const State& state, const Action& action,
                                 const pf::Options& options = {});

/// State at `aux` with the given SoC: loads and capacities from the profiles,
/// generators at full capacity, DES idle, slack from power flow.
State initial_state(const GridConfig& config, const DailyProfiles& profiles, const AdmittanceMatrix& y, int aux,
                    double soc);

/// Reference ANM environment with an episode counter.
class Anm6Env {
 public:
  Anm6Env(GridConfig config, DailyProfiles profiles);

  State reset(std::optional<std::uint64_t> seed = std::nullopt);
  /// Places the environment in `state` and restarts the episode counter.
  void set_state(const State& state);
  StepOutcome step(const Action& action);
  /// Pure transition from an arbitrary state; does not touch the episode.
  StepOutcome transition(const State& state, const Action& action) const;

  const State& state() const { return state_; }
  const GridConfig& config() const { return config_; }
  const DailyProfiles& profiles() const { return profiles_; }
  const AdmittanceMatrix& admittance() const { return y_; }
  int elapsed() const { return t_; }
  int episode_length() const { return episode_length_; }
  void set_episode_length(int steps) { episode_length_ = steps; }

 private:
  GridConfig config_;
  DailyProfiles profiles_;
  AdmittanceMatrix y_;
  std::mt19937_64 rng_{0};
  State state_;
  int t_ = 0;
  int episode_length_ = 0;
};

/// Uniform random action within the action bounds.
Action random_action(const GridConfig& config, std::mt19937_64& rng);

/// One CSV row per step: state, action, reward, energy terms, penalty, done.
class TraceWriter {
 public:
  TraceWriter(const std::filesystem::path& path, const GridConfig& config);
  void write(const State& state, const Action& action, const StepOutcome& outcome);

 private:
  std::ofstream out_;
};

}  // namespace anm
