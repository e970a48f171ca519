#include "anm/rl/sweep.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

namespace anm::rl {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (x.size() != y.size()) throw std::invalid_argument("pearson: lengths differ");
  const std::size_t n = x.size();
  if (n < 2) return nan;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return nan;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json SweepResult::to_json() const {
  nlohmann::json cells_j = nlohmann::json::array();
  for (const auto& c : cells)
    cells_j.push_back({{"n_envs", c.n_envs},
                       {"buffer_size", c.buffer_size},
                       {"mean_reward", c.mean_reward},
                       {"best_score", c.best_score},
                       {"train_seconds", c.train_seconds},
                       {"total_seconds", c.total_seconds},
                       {"env_steps", c.env_steps},
                       {"updates", c.updates},
                       {"early_stopped", c.early_stopped}});
  return {{"cells", cells_j},
          {"correlation",
           {{"buffer_size", {{"mean_reward", num(corr_buffer_reward)}, {"training_time", num(corr_buffer_time)}}},
            {"n_envs", {{"mean_reward", num(corr_envs_reward)}, {"training_time", num(corr_envs_time)}}}}}};
}

void SweepResult::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "n_envs,buffer_size,mean_reward,best_score,train_seconds,total_seconds,env_steps,updates,early_stopped\n";
  for (const auto& c : cells)
    out << c.n_envs << ',' << c.buffer_size << ',' << c.mean_reward << ',' << c.best_score << ',' << c.train_seconds
        << ',' << c.total_seconds << ',' << c.env_steps << ',' << c.updates << ',' << (c.early_stopped ? 1 : 0)
        << '\n';
}

SweepResult run_sweep(std::shared_ptr<const TransitionModel> model, const GridConfig& config,
                      const DailyProfiles& profiles, const SweepOptions& options,
                      const std::function<void(const SweepCell&)>& on_cell) {
  if (!model) throw std::invalid_argument("run_sweep: no model");
  if (options.n_envs.empty() || options.buffer_sizes.empty()) throw std::invalid_argument("run_sweep: empty grid");
  SweepResult res;
  Anm6Env eval_env(config, profiles);
  for (int ne : options.n_envs) {
    for (int bs : options.buffer_sizes) {
      PpoConfig pc = options.ppo;
      pc.n_envs = ne;
      pc.buffer_size = bs;
      pc.validate();
      VecEnv venv(model, config, ne, pc.seed, options.episode_length);
      PpoTrainer trainer(config, pc);
      const auto log = trainer.train(venv, eval_env);

      SweepCell c;
      c.n_envs = ne;
      c.buffer_size = bs;
      c.mean_reward = log.mean_last_evals(options.last_evals);
      c.best_score = log.best_score;
      c.train_seconds = log.train_seconds;
      c.total_seconds = log.total_seconds;
      c.env_steps = log.updates.empty() ? 0 : log.updates.back().env_steps;
      c.updates = static_cast<int>(log.updates.size());
      c.early_stopped = log.early_stopped;
      res.cells.push_back(c);

      if (options.out_dir) {
        const auto dir = *options.out_dir / ("cell_" + std::to_string(ne) + "x" + std::to_string(bs));
        std::filesystem::create_directories(dir);
        log.write_jsonl(dir / "log.jsonl");
        log.write_csv(dir / "log.csv");
        std::ofstream(dir / "policy.json") << trainer.best_policy().to_json().dump();
      }
      if (on_cell) on_cell(c);
    }
  }
  std::vector<double> envs, bufs, rew, time;
  for (const auto& c : res.cells) {
    envs.push_back(c.n_envs);
    bufs.push_back(c.buffer_size);
    rew.push_back(c.mean_reward);
    time.push_back(c.total_seconds);
  }
  res.corr_buffer_reward = pearson(bufs, rew);
  res.corr_buffer_time = pearson(bufs, time);
  res.corr_envs_reward = pearson(envs, rew);
  res.corr_envs_time = pearson(envs, time);
  return res;
}

}  // namespace anm::rl
