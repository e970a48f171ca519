#include "anm/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace anm {

std::vector<double> State::encode() const {
  std::vector<double> out;
  out.reserve(p.size() + q.size() + p_max.size() + 2);
  out.insert(out.end(), p.begin(), p.end());
  out.insert(out.end(), q.begin(), q.end());
  out.push_back(soc);
  out.insert(out.end(), p_max.begin(), p_max.end());
  out.push_back(static_cast<double>(aux));
  return out;
}

State State::decode(const GridConfig& config, const std::vector<double>& flat) {
  const std::size_t nd = config.devices.size();
  const std::size_t ng = config.generator_devices().size();
  if (flat.size() != static_cast<std::size_t>(config.state_dim()))
    throw std::invalid_argument("State::decode: expected " + std::to_string(config.state_dim()) + " values");
  State s;
  s.p.assign(flat.begin(), flat.begin() + nd);
  s.q.assign(flat.begin() + nd, flat.begin() + 2 * nd);
  s.soc = flat[2 * nd];
  s.p_max.assign(flat.begin() + 2 * nd + 1, flat.begin() + 2 * nd + 1 + ng);
  s.aux = static_cast<int>(std::lround(flat.back()));
  return s;
}

std::vector<double> Action::encode() const {
  std::vector<double> out(p_gen);
  out.insert(out.end(), q_gen.begin(), q_gen.end());
  out.push_back(p_des);
  out.push_back(q_des);
  return out;
}

Action Action::decode(const GridConfig& config, const std::vector<double>& flat) {
  const std::size_t ng = config.generator_devices().size();
  if (flat.size() != 2 * ng + 2)
    throw std::invalid_argument("Action::decode: expected " + std::to_string(2 * ng + 2) + " values");
  Action a;
  a.p_gen.assign(flat.begin(), flat.begin() + ng);
  a.q_gen.assign(flat.begin() + ng, flat.begin() + 2 * ng);
  a.p_des = flat[2 * ng];
  a.q_des = flat[2 * ng + 1];
  return a;
}

ActionBounds action_bounds(const GridConfig& config) {
  ActionBounds b;
  const auto gens = config.generator_devices();
  for (int g : gens) {
    b.low.push_back(config.devices[g].p_min);
    b.high.push_back(config.devices[g].p_max);
  }
  for (int g : gens) {
    b.low.push_back(config.devices[g].q_min);
    b.high.push_back(config.devices[g].q_max);
  }
  const auto& des = config.devices[config.des_device()];
  b.low.push_back(des.p_min);
  b.high.push_back(des.p_max);
  b.low.push_back(des.q_min);
  b.high.push_back(des.q_max);
  return b;
}

StateRanges state_ranges(const GridConfig& config) {
  const std::size_t nd = config.devices.size();
  StateRanges r;
  r.low.assign(config.state_dim(), 0.0);
  r.high.assign(config.state_dim(), 0.0);
  double p_lo = 0.0, p_hi = 0.0, q_lo = 0.0, q_hi = 0.0;
  for (std::size_t d = 0; d < nd; ++d) {
    const auto& dev = config.devices[d];
    if (dev.kind == DeviceKind::slack) continue;
    double qmin = dev.q_min, qmax = dev.q_max;
    if (dev.kind == DeviceKind::load) {
      const double qq = load_reactive(dev.p_min, dev.power_factor);
      qmin = std::min(qq, 0.0);
      qmax = std::max(qq, 0.0);
    }
    r.low[d] = dev.p_min;
    r.high[d] = dev.p_max;
    r.low[nd + d] = qmin;
    r.high[nd + d] = qmax;
    p_lo += dev.p_min;
    p_hi += dev.p_max;
    q_lo += qmin;
    q_hi += qmax;
  }
  // The slack balances everything else.
  const int s = config.slack_device();
  r.low[s] = -p_hi;
  r.high[s] = -p_lo;
  r.low[nd + s] = -q_hi;
  r.high[nd + s] = -q_lo;
  const auto& des = config.devices[config.des_device()];
  r.low[2 * nd] = des.soc_min;
  r.high[2 * nd] = des.soc_max;
  const auto gens = config.generator_devices();
  for (std::size_t k = 0; k < gens.size(); ++k) r.high[2 * nd + 1 + k] = config.devices[gens[k]].p_max;
  r.high.back() = config.aux_modulus - 1;
  return r;
}

double load_reactive(double p_load, double power_factor) {
  if (!(power_factor > 0.0 && power_factor <= 1.0))
    throw std::invalid_argument("load_reactive: power factor must lie in (0, 1]");
  return p_load * std::tan(std::acos(power_factor));
}

Exogenous exogenous_at(const GridConfig& config, const DailyProfiles& profiles, int aux) {
  Exogenous e;
  e.aux = aux;
  e.load_p.assign(config.devices.size(), 0.0);
  e.load_q.assign(config.devices.size(), 0.0);
  for (int d : config.load_devices()) {
    e.load_p[d] = profiles.at(d, aux);
    e.load_q[d] = load_reactive(e.load_p[d], config.devices[d].power_factor);
  }
  for (int g : config.generator_devices()) e.p_max.push_back(profiles.at(g, aux));
  return e;
}

Exogenous advance_exogenous(const GridConfig& config, const DailyProfiles& profiles, int aux_t) {
  return exogenous_at(config, profiles, (aux_t + 1) % config.aux_modulus);
}

double next_soc(const DeviceSpec& des, double soc_t, double p_des, double delta_t) {
  return std::clamp(soc_update(soc_t, p_des, des.eta, delta_t), des.soc_min, des.soc_max);
}

DeviceDecision decide_exact(const GridConfig& config, const State& state, const Action& action,
                            const Exogenous& next) {
  const auto gens = config.generator_devices();
  DeviceDecision out;
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const auto& dev = config.devices[gens[k]];
    const auto poly = build_generator_polytope(dev, next.p_max[k]);
    const auto proj = project_exact({action.p_gen[k], action.q_gen[k]}, poly);
    out.p_gen.push_back(proj.point[0]);
    out.q_gen.push_back(proj.point[1]);
  }
  const auto& des = config.devices[config.des_device()];
  const auto poly = build_des_polytope(des, state.soc, config.delta_t);
  const auto proj = project_exact({action.p_des, action.q_des}, poly);
  out.p_des = proj.point[0];
  out.q_des = proj.point[1];
  out.soc_next = next_soc(des, state.soc, out.p_des, config.delta_t);
  return out;
}

std::vector<std::pair<double, double>> device_powers(const GridConfig& config, const DeviceDecision& decision,
                                                     const Exogenous& next) {
  std::vector<std::pair<double, double>> powers(config.devices.size(), {0.0, 0.0});
  std::size_t k = 0;
  for (std::size_t d = 0; d < powers.size(); ++d) {
    switch (config.devices[d].kind) {
      case DeviceKind::load: powers[d] = {next.load_p[d], next.load_q[d]}; break;
      case DeviceKind::renewable_gen:
        powers[d] = {decision.p_gen[k], decision.q_gen[k]};
        ++k;
        break;
      case DeviceKind::des: powers[d] = {decision.p_des, decision.q_des}; break;
      case DeviceKind::slack: break;
    }
  }
  return powers;
}

BusInjections injections_pu(const GridConfig& config, const std::vector<std::pair<double, double>>& powers) {
  auto inj = aggregate_bus_injections(powers, config);
  for (auto& v : inj.p) v /= config.base_power;
  for (auto& v : inj.q) v /= config.base_power;
  return inj;
}

StepOutcome finish_transition(const GridConfig& config, const State& state, const Exogenous& next,
                              const DeviceDecision& decision, const GridSolution& grid) {
  StepOutcome out;
  out.info.converged = grid.converged;
  out.info.pf_iterations = grid.iterations;
  if (!grid.converged) {
    out.next_state = state;
    out.done = true;
    out.reward = config.reward_min;
    return out;
  }
  const auto powers = device_powers(config, decision, next);
  State s;
  s.p.resize(config.devices.size());
  s.q.resize(config.devices.size());
  for (std::size_t d = 0; d < powers.size(); ++d) {
    s.p[d] = powers[d].first;
    s.q[d] = powers[d].second;
  }
  const int slack = config.slack_device();
  s.p[slack] = grid.slack_p * config.base_power;
  s.q[slack] = grid.slack_q * config.base_power;
  s.soc = decision.soc_next;
  s.p_max = next.p_max;
  s.aux = next.aux;

  out.info.terms = reward_from_voltages(config, s.p, s.p_max, grid.v_mag, grid.theta, &out.info.flows);
  out.info.v_mag = grid.v_mag;
  out.info.theta = grid.theta;
  out.reward = out.info.terms.reward;
  out.next_state = std::move(s);
  return out;
}

StepOutcome reference_transition(const GridConfig& config, const DailyProfiles& profiles,
                                 const AdmittanceMatrix& y, const State& state, const Action& action,
                                 const pf::Options& options) {
  const auto next = advance_exogenous(config, profiles, state.aux);
  const auto decision = decide_exact(config, state, action, next);
  const auto inj = injections_pu(config, device_powers(config, decision, next));
  const auto sol = pf::solve(inj.p, inj.q, y, options);
  GridSolution grid{sol.v_mag, sol.theta, sol.slack_p, sol.slack_q, sol.converged, sol.iterations};
  return finish_transition(config, state, next, decision, grid);
}

State initial_state(const GridConfig& config, const DailyProfiles& profiles, const AdmittanceMatrix& y, int aux,
                    double soc) {
  const auto exo = exogenous_at(config, profiles, aux);
  DeviceDecision decision;
  const auto gens = config.generator_devices();
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const auto poly = build_generator_polytope(config.devices[gens[k]], exo.p_max[k]);
    const auto proj = project_exact({exo.p_max[k], 0.0}, poly);
    decision.p_gen.push_back(proj.point[0]);
    decision.q_gen.push_back(proj.point[1]);
  }
  const auto poly = build_des_polytope(config.devices[config.des_device()], soc, config.delta_t);
  const auto proj = project_exact({0.0, 0.0}, poly);
  decision.p_des = proj.point[0];
  decision.q_des = proj.point[1];
  decision.soc_next = soc;

  const auto powers = device_powers(config, decision, exo);
  const auto inj = injections_pu(config, powers);
  const auto sol = pf::solve(inj.p, inj.q, y);
  State s;
  for (const auto& [p, q] : powers) {
    s.p.push_back(p);
    s.q.push_back(q);
  }
  // A failed solve leaves the slack at zero; the first step then decides.
  if (sol.converged) {
    s.p[config.slack_device()] = sol.slack_p * config.base_power;
    s.q[config.slack_device()] = sol.slack_q * config.base_power;
  }
  s.soc = soc;
  s.p_max = exo.p_max;
  s.aux = aux;
  return s;
}

Anm6Env::Anm6Env(GridConfig config, DailyProfiles profiles)
    : config_(std::move(config)), profiles_(std::move(profiles)), episode_length_(config_.episode_length) {
  config_.validate();
  y_ = build_admittance(config_);
  const auto& des = config_.devices[config_.des_device()];
  state_ = initial_state(config_, profiles_, y_, 0, 0.5 * (des.soc_min + des.soc_max));
}

State Anm6Env::reset(std::optional<std::uint64_t> seed) {
  if (seed) rng_.seed(*seed);
  const auto& des = config_.devices[config_.des_device()];
  std::uniform_int_distribution<int> aux_dist(0, config_.aux_modulus - 1);
  std::uniform_real_distribution<double> soc_dist(des.soc_min, des.soc_max);
  const int aux = aux_dist(rng_);
  const double soc = soc_dist(rng_);
  state_ = initial_state(config_, profiles_, y_, aux, soc);
  t_ = 0;
  return state_;
}

void Anm6Env::set_state(const State& state) {
  state_ = state;
  t_ = 0;
}

StepOutcome Anm6Env::transition(const State& state, const Action& action) const {
  return reference_transition(config_, profiles_, y_, state, action);
}

StepOutcome Anm6Env::step(const Action& action) {
  auto out = transition(state_, action);
  ++t_;
  out.truncated = !out.done && t_ >= episode_length_;
  state_ = out.next_state;
  return out;
}

Action random_action(const GridConfig& config, std::mt19937_64& rng) {
  const auto b = action_bounds(config);
  std::vector<double> flat(b.low.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    std::uniform_real_distribution<double> u(b.low[i], b.high[i]);
    flat[i] = u(rng);
  }
  return Action::decode(config, flat);
}

TraceWriter::TraceWriter(const std::filesystem::path& path, const GridConfig& config) : out_(path) {
  if (!out_) throw std::runtime_error("cannot write trace " + path.string());
  out_.precision(12);
  for (const auto& d : config.devices) out_ << "P_" << d.name << ',';
  for (const auto& d : config.devices) out_ << "Q_" << d.name << ',';
  out_ << "soc,";
  for (int g : config.generator_devices()) out_ << "Pmax_" << config.devices[g].name << ',';
  out_ << "aux,";
  for (int g : config.generator_devices()) out_ << "aP_" << config.devices[g].name << ',';
  for (int g : config.generator_devices()) out_ << "aQ_" << config.devices[g].name << ',';
  out_ << "aP_des,aQ_des,reward,dE1,dE2,dE3,phi,done\n";
}

void TraceWriter::write(const State& state, const Action& action, const StepOutcome& outcome) {
  for (double v : state.encode()) out_ << v << ',';
  for (double v : action.encode()) out_ << v << ',';
  const auto& t = outcome.info.terms;
  out_ << outcome.reward << ',' << t.network_losses << ',' << t.des_energy << ',' << t.curtailment << ','
       << t.penalty << ',' << (outcome.done ? 1 : 0) << '\n';
}

}  // namespace anm
