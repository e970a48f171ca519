#include "anm/surrogate/cascade.hpp"

#include <stdexcept>

#include "anm/power_flow.hpp"
#include "anm/surrogate/training.hpp"

namespace anm::surrogate {

ExactGenerator::ExactGenerator(const GridConfig& config) {
  for (int g : config.generator_devices()) gens_.push_back(config.devices[g]);
}

void ExactGenerator::predict(const MatrixXd& in, MatrixXd& out) const {
  const int ng = static_cast<int>(gens_.size());
  out.resize(2 * ng, in.cols());
  for (Eigen::Index c = 0; c < in.cols(); ++c)
    for (int k = 0; k < ng; ++k) {
      const auto poly = build_generator_polytope(gens_[k], in(3 * k + 2, c));
      const auto x = project_exact({in(3 * k, c), in(3 * k + 1, c)}, poly).point;
      out(2 * k, c) = x[0];
      out(2 * k + 1, c) = x[1];
    }
}

ExactDes::ExactDes(const GridConfig& config) : des_(config.devices[config.des_device()]), delta_t_(config.delta_t) {}

void ExactDes::predict(const MatrixXd& in, MatrixXd& out) const {
  out.resize(2, in.cols());
  for (Eigen::Index c = 0; c < in.cols(); ++c) {
    const auto poly = build_des_polytope(des_, in(2, c), delta_t_);
    const auto x = project_exact({in(0, c), in(1, c)}, poly).point;
    out(0, c) = x[0];
    out(1, c) = x[1];
  }
}

NewtonBalance::NewtonBalance(const GridConfig& config) : y_(build_admittance(config)) {}

void NewtonBalance::predict(const MatrixXd& injections, BalanceBatch& out) const {
  const int nb = static_cast<int>(y_.rows());
  const Eigen::Index n = injections.cols();
  out.v_mag.setZero(nb, n);
  out.theta.setZero(nb, n);
  out.slack_p.setZero(n);
  out.slack_q.setZero(n);
  out.converged.assign(n, 0);
  out.iterations.assign(n, 0);
  std::vector<double> p(nb - 1), q(nb - 1);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (int i = 0; i < nb - 1; ++i) {
      p[i] = injections(i, c);
      q[i] = injections(nb - 1 + i, c);
    }
    const auto sol = pf::solve(p, q, y_);
    out.converged[c] = sol.converged;
    out.iterations[c] = sol.iterations;
    if (!sol.converged) continue;
    for (int i = 0; i < nb; ++i) {
      out.v_mag(i, c) = sol.v_mag[i];
      out.theta(i, c) = sol.theta[i];
    }
    out.slack_p[c] = sol.slack_p;
    out.slack_q[c] = sol.slack_q;
  }
}

void SolverTerminal::predict(const MatrixXd& features, const BalanceBatch& balance, std::vector<char>& done) const {
  done.resize(features.rows());
  for (std::size_t c = 0; c < done.size(); ++c) done[c] = !balance.converged[c];
}

KktGenerator::KktGenerator(const GridConfig& config, const ScalingTable& table, const nn::Mlp<double>& net)
    : net_(net.cast<float>()), table_(table) {
  const auto gens = config.generator_devices();
  if (net.n_inputs() != layout::gen_inputs_per_device * static_cast<int>(gens.size()) ||
      net.n_outputs() != layout::gen_outputs_per_device * static_cast<int>(gens.size()))
    throw std::invalid_argument("KktGenerator: network shape does not match the grid");
  for (int g : gens) {
    const auto& name = config.devices[g].name;
    frames_.push_back(device_frame(config.devices[g]));
    slots_.push_back({table.index("aP_" + name), table.index("aQ_" + name), table.index("Pmax_" + name)});
  }
}

void KktGenerator::predict(const MatrixXd& in, MatrixXd& out) const {
  const int ng = static_cast<int>(frames_.size());
  const Eigen::Index n = in.cols();
  nn::Mlp<float>::Matrix x(3 * ng, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (int k = 0; k < ng; ++k)
      for (int j = 0; j < 3; ++j) x(3 * k + j, c) = static_cast<float>(table_.to_sym(slots_[k][j], in(3 * k + j, c)));
  const auto o = net_.forward(x);
  out.resize(2 * ng, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (int k = 0; k < ng; ++k) {
      const auto& f = frames_[k];
      const int r = layout::gen_outputs_per_device * k;
      // Residual head: the net predicts the move from the setpoint.
      out(2 * k, c) = in(3 * k, c) + f.scale * o(r, c);
      out(2 * k + 1, c) = in(3 * k + 1, c) + f.scale * o(r + 1, c);
    }
}

KktDes::KktDes(const GridConfig& config, const ScalingTable& table, const nn::Mlp<double>& net)
    : net_(net.cast<float>()),
      frame_(device_frame(config.devices[config.des_device()])),
      slots_{table.index("aP_des"), table.index("aQ_des"), table.index("soc")},
      table_(table) {
  if (net.n_inputs() != layout::des_inputs || net.n_outputs() != layout::des_outputs)
    throw std::invalid_argument("KktDes: network shape does not match the grid");
}

void KktDes::predict(const MatrixXd& in, MatrixXd& out) const {
  const Eigen::Index n = in.cols();
  nn::Mlp<float>::Matrix x(3, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (int j = 0; j < 3; ++j) x(j, c) = static_cast<float>(table_.to_sym(slots_[j], in(j, c)));
  const auto o = net_.forward(x);
  out.resize(2, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    out(0, c) = in(0, c) + frame_.scale * o(0, c);
    out(1, c) = in(1, c) + frame_.scale * o(1, c);
  }
}

PinnBalance::PinnBalance(const GridConfig& config, const ScalingTable& table, const nn::Mlp<double>& net)
    : net_(net.cast<float>()),
      n_buses_(config.n_buses()),
      base_power_(config.base_power),
      slack_scale_(slack_scale(config, table)) {
  const int nb = n_buses_;
  if (net.n_inputs() != 2 * (nb - 1) || net.n_outputs() != 2 * (nb - 1) + 2)
    throw std::invalid_argument("PinnBalance: network shape does not match the grid");
  in_scale_.resize(2 * (nb - 1));
  in_offset_.resize(2 * (nb - 1));
  for (int i = 0; i < 2 * (nb - 1); ++i) {
    const std::string name = (i < nb - 1 ? "P_bus" : "Q_bus") + std::to_string(i % (nb - 1) + 2);
    const auto& s = table.slot(name);
    // sym = 2 (x_MW - lo) / (hi - lo) - 1 with x_MW = base * x_pu
    in_scale_[i] = 2.0 * base_power_ / (s.upper - s.lower);
    in_offset_[i] = -2.0 * s.lower / (s.upper - s.lower) - 1.0;
  }
}

void PinnBalance::predict(const MatrixXd& injections, BalanceBatch& out) const {
  const int nb = n_buses_;
  const Eigen::Index n = injections.cols();
  const nn::Mlp<float>::Matrix x =
      ((injections.array().colwise() * in_scale_.array()).colwise() + in_offset_.array()).matrix().cast<float>();
  const auto o = net_.forward(x);
  out.v_mag.resize(nb, n);
  out.theta.resize(nb, n);
  out.v_mag.row(0).setOnes();
  out.theta.row(0).setZero();
  out.v_mag.bottomRows(nb - 1) =
      (1.0 + layout::voltage_scale * o.topRows(nb - 1).cast<double>().array()).matrix();
  out.theta.bottomRows(nb - 1) = layout::angle_scale * o.middleRows(nb - 1, nb - 1).cast<double>();
  out.slack_p = slack_scale_ * o.row(2 * (nb - 1)).transpose().cast<double>();
  out.slack_q = slack_scale_ * o.row(2 * (nb - 1) + 1).transpose().cast<double>();
  out.converged.assign(n, 1);
  out.iterations.assign(n, 0);
}

void GbdtTerminal::predict(const MatrixXd& features, const BalanceBatch&, std::vector<char>& done) const {
  if (features.cols() != clf_.n_features())
    throw std::invalid_argument("GbdtTerminal: expected " + std::to_string(clf_.n_features()) + " features");
  done.resize(features.rows());
  clf_.predict_columns(features.data(), done.size(), static_cast<std::size_t>(features.rows()), done.data());
}

Cascade::Cascade(GridConfig config, DailyProfiles profiles, std::shared_ptr<const GeneratorModel> gen,
                 std::shared_ptr<const DesModel> des, std::shared_ptr<const BalanceModel> balance,
                 std::shared_ptr<const TerminalModel> terminal)
    : config_(std::move(config)),
      profiles_(std::move(profiles)),
      gen_(std::move(gen)),
      des_(std::move(des)),
      balance_(std::move(balance)),
      terminal_(std::move(terminal)) {
  config_.validate();
  if (!gen_ || !des_ || !balance_ || !terminal_) throw std::invalid_argument("Cascade: every stage needs a model");
  for (int a = 0; a < config_.aux_modulus; ++a) exogenous_.push_back(exogenous_at(config_, profiles_, a));
}

Cascade Cascade::exact(const GridConfig& config, const DailyProfiles& profiles) {
  return Cascade(config, profiles, std::make_shared<ExactGenerator>(config), std::make_shared<ExactDes>(config),
                 std::make_shared<NewtonBalance>(config), std::make_shared<SolverTerminal>());
}

Cascade::Staged Cascade::stage_devices(const std::vector<State>& states, const std::vector<Action>& actions) const {
  if (states.size() != actions.size()) throw std::invalid_argument("Cascade: states and actions differ in length");
  const auto gens = config_.generator_devices();
  const int ng = static_cast<int>(gens.size());
  const Eigen::Index n = static_cast<Eigen::Index>(states.size());
  Staged st;
  st.next.reserve(n);
  MatrixXd gen_in(3 * ng, n), des_in(3, n), gen_out, des_out;
  for (Eigen::Index c = 0; c < n; ++c) {
    // Loads and capacities at t+1 come straight from the profiles.
    st.next.push_back(&exogenous_[(states[c].aux + 1) % config_.aux_modulus]);
    for (int k = 0; k < ng; ++k) {
      gen_in(3 * k, c) = actions[c].p_gen[k];
      gen_in(3 * k + 1, c) = actions[c].q_gen[k];
      gen_in(3 * k + 2, c) = st.next.back()->p_max[k];
    }
    des_in(0, c) = actions[c].p_des;
    des_in(1, c) = actions[c].q_des;
    des_in(2, c) = states[c].soc;
  }
  gen_->predict(gen_in, gen_out);
  des_->predict(des_in, des_out);

  const auto& des = config_.devices[config_.des_device()];
  const int nb = config_.n_buses();
  st.decisions.resize(n);
  st.injections.resize(2 * (nb - 1), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    auto& d = st.decisions[c];
    d.p_gen.resize(ng);
    d.q_gen.resize(ng);
    for (int k = 0; k < ng; ++k) {
      d.p_gen[k] = gen_out(2 * k, c);
      d.q_gen[k] = gen_out(2 * k + 1, c);
    }
    d.p_des = des_out(0, c);
    d.q_des = des_out(1, c);
    d.soc_next = next_soc(des, states[c].soc, d.p_des, config_.delta_t);
    const auto inj = injections_pu(config_, device_powers(config_, d, *st.next[c]));
    for (int i = 0; i < nb - 1; ++i) {
      st.injections(i, c) = inj.p[i];
      st.injections(nb - 1 + i, c) = inj.q[i];
    }
  }
  return st;
}

MatrixXd Cascade::terminal_features(const GridConfig& config, const std::vector<State>& states,
                                    const std::vector<Action>& actions, const MatrixXd& injections) {
  const int ns = config.state_dim(), na = config.action_dim();
  MatrixXd f(static_cast<Eigen::Index>(states.size()), ns + na + injections.rows());
  // Same order as State::encode and Action::encode, written in place.
  for (std::size_t c = 0; c < states.size(); ++c) {
    const auto& s = states[c];
    const auto& a = actions[c];
    Eigen::Index i = 0;
    for (double v : s.p) f(c, i++) = v;
    for (double v : s.q) f(c, i++) = v;
    f(c, i++) = s.soc;
    for (double v : s.p_max) f(c, i++) = v;
    f(c, i++) = static_cast<double>(s.aux);
    for (double v : a.p_gen) f(c, i++) = v;
    for (double v : a.q_gen) f(c, i++) = v;
    f(c, i++) = a.p_des;
    f(c, i++) = a.q_des;
    if (i != ns + na) throw std::invalid_argument("Cascade: state or action does not match the config");
  }
  f.rightCols(injections.rows()) = injections.transpose();
  return f;
}

std::vector<StepOutcome> Cascade::step_batch(const std::vector<State>& states,
                                             const std::vector<Action>& actions) const {
  auto st = stage_devices(states, actions);
  BalanceBatch bal;
  balance_->predict(st.injections, bal);
  std::vector<char> done;
  terminal_->predict(terminal_features(config_, states, actions, st.injections), bal, done);

  const int nb = config_.n_buses();
  std::vector<StepOutcome> out;
  out.reserve(states.size());
  GridSolution grid;
  grid.v_mag.resize(nb);
  grid.theta.resize(nb);
  for (std::size_t c = 0; c < states.size(); ++c) {
    const bool ok = bal.converged[c] && !done[c];
    grid.converged = ok;
    grid.iterations = bal.iterations[c];
    if (ok) {
      for (int i = 0; i < nb; ++i) {
        grid.v_mag[i] = bal.v_mag(i, c);
        grid.theta[i] = bal.theta(i, c);
      }
      grid.slack_p = bal.slack_p[c];
      grid.slack_q = bal.slack_q[c];
    }
    out.push_back(finish_transition(config_, states[c], *st.next[c], st.decisions[c], grid));
  }
  return out;
}

State Cascade::reset_state(int aux, double soc) const {
  // Same starting point as the reference env, with the slack from this
  // cascade's balance stage.
  const auto exo = exogenous_at(config_, profiles_, aux);
  const auto gens = config_.generator_devices();
  const int ng = static_cast<int>(gens.size());
  DeviceDecision d;
  for (int k = 0; k < ng; ++k) {
    const auto x = project_exact({exo.p_max[k], 0.0}, build_generator_polytope(config_.devices[gens[k]], exo.p_max[k]));
    d.p_gen.push_back(x.point[0]);
    d.q_gen.push_back(x.point[1]);
  }
  const auto x = project_exact({0.0, 0.0}, build_des_polytope(config_.devices[config_.des_device()], soc, config_.delta_t));
  d.p_des = x.point[0];
  d.q_des = x.point[1];
  d.soc_next = soc;
  const auto powers = device_powers(config_, d, exo);
  const auto inj = injections_pu(config_, powers);
  const int nb = config_.n_buses();
  MatrixXd col(2 * (nb - 1), 1);
  for (int i = 0; i < nb - 1; ++i) {
    col(i, 0) = inj.p[i];
    col(nb - 1 + i, 0) = inj.q[i];
  }
  BalanceBatch bal;
  balance_->predict(col, bal);
  State s;
  for (const auto& [p, q] : powers) {
    s.p.push_back(p);
    s.q.push_back(q);
  }
  if (bal.converged[0]) {
    s.p[config_.slack_device()] = bal.slack_p[0] * config_.base_power;
    s.q[config_.slack_device()] = bal.slack_q[0] * config_.base_power;
  }
  s.soc = soc;
  s.p_max = exo.p_max;
  s.aux = aux;
  return s;
}

}  // namespace anm::surrogate
