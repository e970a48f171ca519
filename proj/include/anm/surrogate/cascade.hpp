#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "anm/env.hpp"
#include "anm/nn/mlp.hpp"
#include "anm/surrogate/gbdt.hpp"
#include "anm/surrogate/scaling.hpp"
#include "anm/transition_model.hpp"

namespace anm::surrogate {

using Eigen::MatrixXd;

/// Stage 1a. Input rows per generator: aP, aQ, Pmax(t+1) in MW/MVAr.
/// Output rows per generator: P, Q.
class GeneratorModel {
 public:
  virtual ~GeneratorModel() = default;
  virtual void predict(const MatrixXd& in, MatrixXd& out) const = 0;
};

/// Stage 1b. Input rows: aP, aQ, soc. Output rows: P, Q.
class DesModel {
 public:
  virtual ~DesModel() = default;
  virtual void predict(const MatrixXd& in, MatrixXd& out) const = 0;
};

struct BalanceBatch {
  MatrixXd v_mag;  // buses x batch
  MatrixXd theta;
  Eigen::VectorXd slack_p;  // p.u.
  Eigen::VectorXd slack_q;
  std::vector<char> converged;
  std::vector<int> iterations;
};

/// Stage 3. Input rows: P_bus2..N, Q_bus2..N in p.u.
class BalanceModel {
 public:
  virtual ~BalanceModel() = default;
  virtual void predict(const MatrixXd& injections, BalanceBatch& out) const = 0;
};

/// Terminal decision. One row per transition: encoded state, encoded action,
/// then the bus injections the cascade computed for it.
class TerminalModel {
 public:
  virtual ~TerminalModel() = default;
  virtual void predict(const MatrixXd& features, const BalanceBatch& balance, std::vector<char>& done) const = 0;
};

// Exact stand-ins: the projector and Newton-Raphson.
class ExactGenerator final : public GeneratorModel {
 public:
  explicit ExactGenerator(const GridConfig& config);
  void predict(const MatrixXd& in, MatrixXd& out) const override;

 private:
  std::vector<DeviceSpec> gens_;
};

class ExactDes final : public DesModel {
 public:
  explicit ExactDes(const GridConfig& config);
  void predict(const MatrixXd& in, MatrixXd& out) const override;

 private:
  DeviceSpec des_;
  double delta_t_;
};

class NewtonBalance final : public BalanceModel {
 public:
  explicit NewtonBalance(const GridConfig& config);
  void predict(const MatrixXd& injections, BalanceBatch& out) const override;

 private:
  AdmittanceMatrix y_;
};

/// done iff the balance stage reports non-convergence.
class SolverTerminal final : public TerminalModel {
 public:
  void predict(const MatrixXd& features, const BalanceBatch& balance, std::vector<char>& done) const override;
};

// Learned components. Inference runs in single precision.
class KktGenerator final : public GeneratorModel {
 public:
  KktGenerator(const GridConfig& config, const ScalingTable& table, const nn::Mlp<double>& net);
  void predict(const MatrixXd& in, MatrixXd& out) const override;

 private:
  nn::Mlp<float> net_;
  std::vector<DeviceFrame> frames_;
  std::vector<std::array<int, 3>> slots_;
  ScalingTable table_;
};

class KktDes final : public DesModel {
 public:
  KktDes(const GridConfig& config, const ScalingTable& table, const nn::Mlp<double>& net);
  void predict(const MatrixXd& in, MatrixXd& out) const override;

 private:
  nn::Mlp<float> net_;
  DeviceFrame frame_;
  std::array<int, 3> slots_;
  ScalingTable table_;
};

class PinnBalance final : public BalanceModel {
 public:
  PinnBalance(const GridConfig& config, const ScalingTable& table, const nn::Mlp<double>& net);
  void predict(const MatrixXd& injections, BalanceBatch& out) const override;

 private:
  nn::Mlp<float> net_;
  int n_buses_;
  double base_power_;
  double slack_scale_;
  Eigen::VectorXd in_scale_, in_offset_;  // p.u. -> [-1, 1]
};

class GbdtTerminal final : public TerminalModel {
 public:
  explicit GbdtTerminal(GbdtClassifier clf) : clf_(std::move(clf)) {}
  void predict(const MatrixXd& features, const BalanceBatch& balance, std::vector<char>& done) const override;

 private:
  GbdtClassifier clf_;
};

/// The cascaded transition: device models, SoC update, profile-driven loads
/// and capacities, balance model, analytic flows and reward, terminal model.
class Cascade final : public TransitionModel {
 public:
  Cascade(GridConfig config, DailyProfiles profiles, std::shared_ptr<const GeneratorModel> gen,
          std::shared_ptr<const DesModel> des, std::shared_ptr<const BalanceModel> balance,
          std::shared_ptr<const TerminalModel> terminal);

  /// Every learned stage replaced by its exact counterpart.
  static Cascade exact(const GridConfig& config, const DailyProfiles& profiles);

  std::vector<StepOutcome> step_batch(const std::vector<State>& states,
                                      const std::vector<Action>& actions) const override;
  State reset_state(int aux, double soc) const override;
  std::string name() const override { return "cascade"; }

  /// Intermediate product of stages 1-2, exposed for classifier training.
  struct Staged {
    std::vector<const Exogenous*> next;  // owned by the cascade
    std::vector<DeviceDecision> decisions;
    MatrixXd injections;  // 2(N-1) x batch, p.u.
  };
  Staged stage_devices(const std::vector<State>& states, const std::vector<Action>& actions) const;
  static MatrixXd terminal_features(const GridConfig& config, const std::vector<State>& states,
                                    const std::vector<Action>& actions, const MatrixXd& injections);

  const GridConfig& config() const { return config_; }

 private:
  GridConfig config_;
  DailyProfiles profiles_;
  std::shared_ptr<const GeneratorModel> gen_;
  std::shared_ptr<const DesModel> des_;
  std::shared_ptr<const BalanceModel> balance_;
  std::shared_ptr<const TerminalModel> terminal_;
  std::vector<Exogenous> exogenous_;  // one per time slot
};

}  // namespace anm::surrogate
