#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "anm/nn/mlp.hpp"
#include "anm/transition_model.hpp"

namespace anm::baselines {

enum class DatasetKind { generative, agent_based };
std::string to_string(DatasetKind k);

/// (state, action) -> (next_state, reward) samples from the reference env.
struct TransitionDataset {
  DatasetKind kind = DatasetKind::generative;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<State> states;
  std::vector<Action> actions;
  std::vector<State> next_states;
  std::vector<double> rewards;
  std::vector<char> dones;

  std::size_t size() const { return states.size(); }
  /// One row per sample: encoded state then encoded action.
  Eigen::MatrixXd inputs() const;
  /// One row per sample: encoded next state then reward.
  Eigen::MatrixXd targets() const;

  /// Columnar little-endian float64 file plus a text manifest next to it.
  void save(const std::filesystem::path& stem) const;
  static TransitionDataset load(const std::filesystem::path& stem, const GridConfig& config);
};

/// Sobol points over (state, action) within the configured ranges, each
/// pushed through one reference step from that state.
TransitionDataset build_generative_dataset(const GridConfig& config, const DailyProfiles& profiles, int n,
                                           std::uint64_t seed);

/// Contiguous random-agent episodes until n transitions are collected.
TransitionDataset build_agent_dataset(const GridConfig& config, const DailyProfiles& profiles, int n,
                                      std::uint64_t seed, int episode_length = 288);

enum class BaselineKind { linear, mlp };
std::string to_string(BaselineKind k);
BaselineKind baseline_kind_from_string(const std::string& s);

struct BaselineOptions {
  // linear: least absolute deviations by iteratively reweighted least squares
  int irls_iterations = 50;
  double ridge = 1e-8;
  // mlp: L1 loss, Adam
  std::vector<int> hidden = {64, 64};
  double learning_rate = 1e-3;
  int batch = 128;
  int epochs = 60;
  std::uint64_t seed = 0;
};

/// A data-driven regression surrogate. It predicts every next-state entry and
/// the reward, never declares failure, and starts episodes like the env does.
class BaselineModel final : public TransitionModel {
 public:
  std::vector<StepOutcome> step_batch(const std::vector<State>& states,
                                      const std::vector<Action>& actions) const override;
  State reset_state(int aux, double soc) const override;
  std::string name() const override { return to_string(kind_); }

  /// Rows are samples, matching TransitionDataset::inputs().
  Eigen::MatrixXd predict(const Eigen::MatrixXd& inputs) const;
  BaselineKind kind() const { return kind_; }

  nlohmann::json to_json() const;
  static std::shared_ptr<BaselineModel> from_json(const GridConfig& config, const DailyProfiles& profiles,
                                                  const nlohmann::json& j);

 private:
  friend std::shared_ptr<BaselineModel> fit_baseline(BaselineKind, const TransitionDataset&, const GridConfig&,
                                                     const DailyProfiles&, const BaselineOptions&);
  BaselineModel(const GridConfig& config, const DailyProfiles& profiles);

  BaselineKind kind_ = BaselineKind::linear;
  GridConfig config_;
  DailyProfiles profiles_;
  AdmittanceMatrix y_;
  Eigen::VectorXd x_mean_, x_inv_std_, y_mean_, y_std_;
  Eigen::MatrixXd weights_;  // linear: (inputs + 1) x outputs, last row bias
  nn::Mlp<double> net_;
};

/// Throws std::invalid_argument on an empty dataset, and for the linear kind
/// when every input column is constant.
std::shared_ptr<BaselineModel> fit_baseline(BaselineKind kind, const TransitionDataset& data,
                                            const GridConfig& config, const DailyProfiles& profiles,
                                            const BaselineOptions& options = {});

struct Metrics {
  std::vector<std::string> names;
  std::vector<double> mae;
  std::vector<double> r2;  // NaN where the truth has no variance
  double mae_mean = 0.0;
  /// Each dimension's MAE divided by the width of its configured range.
  double mae_scaled_mean = 0.0;
  double r2_mean = 0.0;  // over dimensions with variance
  int samples = 0;

  nlohmann::json to_json() const;
};

/// Per-dimension MAE and R^2 of predictions against the truth, rows = samples.
Metrics compute_metrics(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred,
                        const std::vector<std::string>& names = {}, const std::vector<double>& widths = {});

/// Output names and range widths for (next_state, reward).
std::vector<std::string> output_names(const GridConfig& config);
std::vector<double> output_widths(const GridConfig& config);

using PolicyFn = std::function<Action(const State&, std::mt19937_64&)>;
PolicyFn random_policy(const GridConfig& config);

/// Teacher-forced single-step error: at every real step the surrogate is
/// queried from the real current state; its prediction is never fed back.
Metrics evaluate_surrogate(const TransitionModel& surrogate, const GridConfig& config, const DailyProfiles& profiles,
                           const PolicyFn& policy, int episodes, std::uint64_t seed, int episode_length = 288);

}  // namespace anm::baselines
