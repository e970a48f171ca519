#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "anm/rl/ppo.hpp"

namespace anm::rl {

struct SweepOptions {
  std::vector<int> n_envs = {1, 10, 100};
  std::vector<int> buffer_sizes = {30, 300, 3000};
  /// Shared by every cell; n_envs and buffer_size are overwritten per cell.
  PpoConfig ppo;
  int episode_length = 288;
  int last_evals = 10;
  /// When set, each cell writes log.jsonl, log.csv and policy.json under
  /// <dir>/cell_<n_envs>x<buffer_size>.
  std::optional<std::filesystem::path> out_dir;
};

struct SweepCell {
  int n_envs = 0;
  int buffer_size = 0;
  double mean_reward = 0.0;  // mean of the last `last_evals` evaluations
  double best_score = 0.0;
  double train_seconds = 0.0;
  double total_seconds = 0.0;
  std::int64_t env_steps = 0;
  int updates = 0;
  bool early_stopped = false;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  // Sample correlations over the cells; NaN when a column is constant.
  double corr_buffer_reward = 0.0;
  double corr_buffer_time = 0.0;
  double corr_envs_reward = 0.0;
  double corr_envs_time = 0.0;

  nlohmann::json to_json() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Pearson correlation; NaN for fewer than two points or zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// One PPO run per (n_envs, buffer_size) pair, row-major over the two lists.
/// Time is total wall time of the cell, evaluation included.
SweepResult run_sweep(std::shared_ptr<const TransitionModel> model, const GridConfig& config,
                      const DailyProfiles& profiles, const SweepOptions& options,
                      const std::function<void(const SweepCell&)>& on_cell = {});

}  // namespace anm::rl
