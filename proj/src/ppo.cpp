#include "anm/rl/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "anm/nn/checkpoint.hpp"

namespace anm::rl {

using Matrix = nn::Mlp<double>::Matrix;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix observe(const ObservationMap& obs, const std::vector<State>& states) {
  Matrix x(obs.dim(), static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) obs.write(states[i], x.col(i).data());
  return x;
}

}  // namespace

void PpoConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("PpoConfig: ") + what);
  };
  need(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
  need(gae_lambda >= 0.0 && gae_lambda <= 1.0, "gae_lambda must lie in [0, 1]");
  need(clip_range > 0.0, "clip_range must be positive");
  need(learning_rate > 0.0, "learning_rate must be positive");
  need(n_epochs > 0 && minibatch > 0, "n_epochs and minibatch must be positive");
  need(n_envs > 0 && buffer_size > 0, "n_envs and buffer_size must be positive");
  need(eval_every > 0 && eval_episodes > 0 && eval_episode_length > 0, "evaluation settings must be positive");
  need(patience_episodes > 0, "patience_episodes must be positive");
  need(max_grad_norm > 0.0, "max_grad_norm must be positive");
  need(!hidden.empty(), "hidden needs at least one layer");
}

nlohmann::json PpoConfig::to_json() const {
  return {{"gamma", gamma},
          {"gae_lambda", gae_lambda},
          {"clip_range", clip_range},
          {"learning_rate", learning_rate},
          {"n_epochs", n_epochs},
          {"minibatch", minibatch},
          {"value_coef", value_coef},
          {"entropy_coef", entropy_coef},
          {"max_grad_norm", max_grad_norm},
          {"n_envs", n_envs},
          {"buffer_size", buffer_size},
          {"eval_every", eval_every},
          {"patience_episodes", patience_episodes},
          {"eval_episodes", eval_episodes},
          {"eval_episode_length", eval_episode_length},
          {"max_env_steps", max_env_steps},
          {"max_updates", max_updates},
          {"hidden", hidden},
          {"log_std_init", log_std_init},
          {"reward_scale", reward_scale},
          {"seed", seed}};
}

ObservationMap::ObservationMap(const GridConfig& config) : aux_modulus_(config.aux_modulus) {
  const auto r = state_ranges(config);
  // Everything but the trailing aux slot.
  for (std::size_t i = 0; i + 1 < r.low.size(); ++i) {
    center_.push_back(0.5 * (r.low[i] + r.high[i]));
    const double half = 0.5 * (r.high[i] - r.low[i]);
    inv_half_.push_back(half > 0.0 ? 1.0 / half : 0.0);
  }
}

void ObservationMap::write(const State& s, double* out) const {
  const std::size_t nd = s.p.size();
  std::size_t k = 0;
  auto put = [&](double v) {
    out[k] = (v - center_[k]) * inv_half_[k];
    ++k;
  };
  for (std::size_t d = 0; d < nd; ++d) put(s.p[d]);
  for (std::size_t d = 0; d < nd; ++d) put(s.q[d]);
  put(s.soc);
  for (double v : s.p_max) put(v);
  const double phase = 2.0 * std::numbers::pi * s.aux / aux_modulus_;
  out[k] = std::sin(phase);
  out[k + 1] = std::cos(phase);
}

Policy::Policy(const GridConfig& config, const std::vector<int>& hidden, double log_std_init, std::mt19937_64& rng)
    : config_(config), obs_(config) {
  const auto b = action_bounds(config);
  low_ = b.low;
  high_ = b.high;
  std::vector<int> sizes{obs_.dim()};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(action_dim());
  mean_net = nn::Mlp<double>(sizes, nn::Activation::tanh);
  mean_net.init_glorot(rng);
  // Small initial means keep the first actions away from tanh saturation.
  mean_net.weight(mean_net.n_layers() - 1) *= 0.01;
  sizes.back() = 1;
  value_net = nn::Mlp<double>(sizes, nn::Activation::tanh);
  value_net.init_glorot(rng);
  log_std.assign(action_dim(), log_std_init);
}

Action Policy::squash(const double* u) const {
  std::vector<double> flat(low_.size());
  for (std::size_t j = 0; j < flat.size(); ++j)
    flat[j] = low_[j] + 0.5 * (std::tanh(u[j]) + 1.0) * (high_[j] - low_[j]);
  return Action::decode(config_, flat);
}

Action Policy::act_deterministic(const State& s) const {
  Matrix x(obs_.dim(), 1);
  obs_.write(s, x.data());
  const Matrix m = mean_net.forward(x);
  return squash(m.data());
}

nlohmann::json Policy::to_json() const {
  return {{"format", "anm-policy"},
          {"version", 1},
          {"mean_net", nn::to_json(mean_net)},
          {"value_net", nn::to_json(value_net)},
          {"log_std", log_std}};
}

Policy Policy::from_json(const GridConfig& config, const nlohmann::json& j) {
  if (j.value("format", "") != "anm-policy") throw std::runtime_error("policy: not an anm-policy record");
  std::mt19937_64 rng(0);
  Policy p(config, {1}, 0.0, rng);
  p.mean_net = nn::mlp_from_json(j.at("mean_net"));
  p.value_net = nn::mlp_from_json(j.at("value_net"));
  p.log_std = j.at("log_std").get<std::vector<double>>();
  if (p.mean_net.n_inputs() != p.obs_dim() || p.mean_net.n_outputs() != p.action_dim() ||
      p.value_net.n_inputs() != p.obs_dim() || p.value_net.n_outputs() != 1 ||
      static_cast<int>(p.log_std.size()) != p.action_dim())
    throw std::runtime_error("policy: shapes do not match the grid");
  return p;
}

GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values, const std::vector<char>& dones,
              const std::vector<double>& last_values, int n_envs, double gamma, double lam) {
  if (n_envs <= 0) throw std::invalid_argument("gae: n_envs must be positive");
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n || last_values.size() != static_cast<std::size_t>(n_envs) ||
      n % n_envs != 0)
    throw std::invalid_argument("gae: array lengths do not line up");
  const std::size_t steps = n / n_envs;
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  for (int i = 0; i < n_envs; ++i) {
    double next_adv = 0.0;
    double next_value = last_values[i];
    for (std::size_t t = steps; t-- > 0;) {
      const std::size_t k = t * n_envs + i;
      const double live = dones[k] ? 0.0 : 1.0;
      const double delta = rewards[k] + gamma * next_value * live - values[k];
      next_adv = delta + gamma * lam * live * next_adv;
      r.advantages[k] = next_adv;
      r.returns[k] = next_adv + values[k];
      next_value = values[k];
    }
  }
  return r;
}

RolloutBuffer::RolloutBuffer(int n, int size, int od, int ad)
    : n_envs(n), buffer_size(size), obs_dim(od), action_dim(ad) {
  const auto cap = static_cast<std::size_t>(capacity());
  obs.assign(cap * od, 0.0);
  actions.assign(cap * ad, 0.0);
  log_probs.assign(cap, 0.0);
  rewards.assign(cap, 0.0);
  values.assign(cap, 0.0);
  advantages.assign(cap, 0.0);
  returns.assign(cap, 0.0);
  dones.assign(cap, 0);
  last_values.assign(n, 0.0);
}

nlohmann::json TrainLog::record_json(const UpdateRecord& r) const {
  nlohmann::json j{{"update", r.update},
                   {"env_steps", r.env_steps},
                   {"policy_loss", r.stats.policy_loss},
                   {"value_loss", r.stats.value_loss},
                   {"entropy", r.stats.entropy},
                   {"approx_kl", r.stats.approx_kl},
                   {"clip_fraction", r.stats.clip_fraction},
                   {"grad_norm", r.stats.grad_norm},
                   {"train_seconds", r.train_seconds},
                   {"wall_seconds", r.wall_seconds},
                   {"backing", backing}};
  j["eval_score"] = r.eval_score ? nlohmann::json(*r.eval_score) : nlohmann::json(nullptr);
  return j;
}

void TrainLog::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : updates) out << record_json(r).dump() << '\n';
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "update,env_steps,eval_score,policy_loss,value_loss,approx_kl,clip_fraction,train_seconds,wall_seconds\n";
  for (const auto& r : updates) {
    out << r.update << ',' << r.env_steps << ',';
    if (r.eval_score) out << *r.eval_score;
    out << ',' << r.stats.policy_loss << ',' << r.stats.value_loss << ',' << r.stats.approx_kl << ','
        << r.stats.clip_fraction << ',' << r.train_seconds << ',' << r.wall_seconds << '\n';
  }
}

double TrainLog::mean_last_evals(int k) const {
  std::vector<double> s;
  for (const auto& r : updates)
    if (r.eval_score) s.push_back(*r.eval_score);
  if (s.empty()) return 0.0;
  const std::size_t m = std::min<std::size_t>(s.size(), static_cast<std::size_t>(std::max(k, 1)));
  return std::accumulate(s.end() - static_cast<std::ptrdiff_t>(m), s.end(), 0.0) / static_cast<double>(m);
}

namespace {

template <class Act>
double run_episode(Anm6Env& env, std::uint64_t seed, int episode_length, Act act) {
  const int saved = env.episode_length();
  env.set_episode_length(episode_length);
  env.reset(seed);
  double score = 0.0;
  for (int t = 0; t < episode_length; ++t) {
    const auto out = env.step(act(env.state()));
    score += out.reward;
    if (out.done) {
      score += env.config().reward_min * (episode_length - t - 1);
      break;
    }
  }
  env.set_episode_length(saved);
  return score;
}

}  // namespace

double evaluate_episode(const Policy& policy, Anm6Env& env, std::uint64_t seed, int episode_length) {
  return run_episode(env, seed, episode_length, [&](const State& s) { return policy.act_deterministic(s); });
}

double evaluate_policy(const Policy& policy, Anm6Env& env, int episodes, std::uint64_t seed, int episode_length) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) total += evaluate_episode(policy, env, seed + e, episode_length);
  return episodes > 0 ? total / episodes : 0.0;
}

double evaluate_random(Anm6Env& env, int episodes, std::uint64_t seed, int episode_length) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e)
    total += run_episode(env, seed + e, episode_length, [&](const State&) { return random_action(env.config(), rng); });
  return episodes > 0 ? total / episodes : 0.0;
}

PpoTrainer::PpoTrainer(const GridConfig& config, PpoConfig ppo) : config_(config), ppo_(std::move(ppo)), rng_(ppo_.seed) {
  ppo_.validate();
  policy_ = Policy(config_, ppo_.hidden, ppo_.log_std_init, rng_);
  best_ = policy_;
  const nn::AdamWOptions adam{ppo_.learning_rate, 0.9, 0.999, 1e-5, 0.0};
  opt_mean_ = nn::AdamW(policy_.mean_net.n_params(), adam);
  opt_value_ = nn::AdamW(policy_.value_net.n_params(), adam);
  opt_std_ = nn::AdamW(policy_.log_std.size(), adam);
}

void PpoTrainer::collect(VecEnv& venv, RolloutBuffer& buf) {
  const int n = venv.n_envs();
  const int od = buf.obs_dim, ad = buf.action_dim;
  const double gamma = ppo_.gamma;
  // A failed grid is absorbing at the minimum reward.
  const double absorbing = ppo_.reward_scale * config_.reward_min / std::max(1.0 - gamma, 1e-6);
  std::normal_distribution<double> normal;
  std::vector<Action> actions(n);
  buf.clear();
  while (!buf.full()) {
    const Matrix x = observe(policy_.observation(), venv.states());
    const Matrix mean = policy_.mean_net.forward(x);
    const Matrix value = policy_.value_net.forward(x);
    const std::size_t row = static_cast<std::size_t>(buf.pos) * n;
    for (int i = 0; i < n; ++i) {
      const std::size_t k = row + i;
      std::copy_n(x.col(i).data(), od, buf.obs.data() + k * od);
      double* u = buf.actions.data() + k * ad;
      double lp = 0.0;
      for (int j = 0; j < ad; ++j) {
        const double eps = normal(rng_);
        u[j] = mean(j, i) + std::exp(policy_.log_std[j]) * eps;
        lp += -0.5 * eps * eps - policy_.log_std[j] - kHalfLog2Pi;
      }
      buf.log_probs[k] = lp;
      buf.values[k] = value(0, i);
      actions[i] = policy_.squash(u);
    }
    const auto step = venv.step(actions);
    std::vector<State> cut;
    std::vector<int> cut_idx;
    for (int i = 0; i < n; ++i) {
      const std::size_t k = row + i;
      buf.rewards[k] = ppo_.reward_scale * step.rewards[i];
      buf.dones[k] = step.dones[i] || step.truncated[i];
      if (step.dones[i]) buf.rewards[k] += gamma * absorbing;
      if (step.truncated[i]) {
        cut.push_back(step.final_states[i]);
        cut_idx.push_back(i);
      }
    }
    // Time limits are not failures: bootstrap from the value of the cut state.
    if (!cut.empty()) {
      const Matrix v = policy_.value_net.forward(observe(policy_.observation(), cut));
      for (std::size_t c = 0; c < cut.size(); ++c) buf.rewards[row + cut_idx[c]] += gamma * v(0, c);
    }
    ++buf.pos;
  }
  const Matrix v = policy_.value_net.forward(observe(policy_.observation(), venv.states()));
  for (int i = 0; i < n; ++i) buf.last_values[i] = v(0, i);
  auto g = gae(buf.rewards, buf.values, buf.dones, buf.last_values, n, gamma, ppo_.gae_lambda);
  buf.advantages = std::move(g.advantages);
  buf.returns = std::move(g.returns);
}

UpdateStats PpoTrainer::update(RolloutBuffer& buf) {
  if (!buf.full()) throw std::logic_error("PpoTrainer::update: buffer not full");
  const int od = buf.obs_dim, ad = buf.action_dim;
  const auto cap = static_cast<int>(buf.capacity());
  std::vector<int> idx(cap);
  std::iota(idx.begin(), idx.end(), 0);
  UpdateStats st;
  int batches = 0;
  nn::ParamVector<double> g_mean, g_value;
  std::vector<double> g_std(ad);
  nn::Mlp<double>::Tape tape_m, tape_v;
  const double clip = ppo_.clip_range;

  for (int epoch = 0; epoch < ppo_.n_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng_);
    for (int start = 0; start < cap; start += ppo_.minibatch) {
      const int b = std::min(ppo_.minibatch, cap - start);
      Matrix x(od, b), u(ad, b);
      Eigen::VectorXd adv(b), ret(b), old_lp(b);
      for (int c = 0; c < b; ++c) {
        const int k = idx[start + c];
        std::copy_n(buf.obs.data() + static_cast<std::size_t>(k) * od, od, x.col(c).data());
        std::copy_n(buf.actions.data() + static_cast<std::size_t>(k) * ad, ad, u.col(c).data());
        adv[c] = buf.advantages[k];
        ret[c] = buf.returns[k];
        old_lp[c] = buf.log_probs[k];
      }
      if (b > 1) {
        const double mu = adv.mean();
        const double sd = std::sqrt((adv.array() - mu).square().sum() / (b - 1));
        adv = (adv.array() - mu) / (sd + 1e-8);
      }
      const Matrix mean = policy_.mean_net.forward(x, tape_m);
      const Matrix value = policy_.value_net.forward(x, tape_v);

      Matrix d_mean(ad, b), d_value(1, b);
      std::fill(g_std.begin(), g_std.end(), 0.0);
      double pg = 0.0, vl = 0.0, kl = 0.0, clipped = 0.0;
      for (int c = 0; c < b; ++c) {
        double lp = 0.0;
        for (int j = 0; j < ad; ++j) {
          const double z = (u(j, c) - mean(j, c)) * std::exp(-policy_.log_std[j]);
          lp += -0.5 * z * z - policy_.log_std[j] - kHalfLog2Pi;
        }
        const double log_ratio = lp - old_lp[c];
        const double ratio = std::exp(log_ratio);
        const double a = adv[c];
        const double unclipped = ratio * a;
        const double clipped_obj = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * a;
        pg += -std::min(unclipped, clipped_obj);
        kl += (ratio - 1.0) - log_ratio;
        if (std::abs(ratio - 1.0) > clip) clipped += 1.0;
        // d(-min)/d(log pi): nonzero only where the unclipped branch is the minimum.
        const bool active = (a >= 0.0 && ratio < 1.0 + clip) || (a < 0.0 && ratio > 1.0 - clip);
        const double dlp = active ? -a * ratio / b : 0.0;
        for (int j = 0; j < ad; ++j) {
          const double inv_var = std::exp(-2.0 * policy_.log_std[j]);
          const double diff = u(j, c) - mean(j, c);
          d_mean(j, c) = dlp * diff * inv_var;
          g_std[j] += dlp * (diff * diff * inv_var - 1.0);
        }
        const double verr = value(0, c) - ret[c];
        vl += verr * verr;
        d_value(0, c) = ppo_.value_coef * 2.0 * verr / b;
      }
      double entropy = 0.0;
      for (int j = 0; j < ad; ++j) {
        entropy += policy_.log_std[j] + 0.5 + kHalfLog2Pi;
        g_std[j] -= ppo_.entropy_coef;
      }
      const double loss = pg / b + ppo_.value_coef * vl / b - ppo_.entropy_coef * entropy;
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "PpoTrainer::update: non-finite loss (policy " << pg / b << ", value " << vl / b << ") at epoch "
            << epoch << ", minibatch offset " << start;
        throw std::runtime_error(msg.str());
      }

      g_mean.assign(policy_.mean_net.n_params(), 0.0);
      g_value.assign(policy_.value_net.n_params(), 0.0);
      policy_.mean_net.backward(tape_m, d_mean, g_mean);
      policy_.value_net.backward(tape_v, d_value, g_value);
      double sq = 0.0;
      for (double g : g_mean) sq += g * g;
      for (double g : g_value) sq += g * g;
      for (double g : g_std) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > ppo_.max_grad_norm) {
        const double s = ppo_.max_grad_norm / (norm + 1e-6);
        for (double& g : g_mean) g *= s;
        for (double& g : g_value) g *= s;
        for (double& g : g_std) g *= s;
      }
      opt_mean_.step(policy_.mean_net.params(), g_mean);
      opt_value_.step(policy_.value_net.params(), g_value);
      opt_std_.step(policy_.log_std, g_std);

      st.policy_loss += pg / b;
      st.value_loss += vl / b;
      st.entropy += entropy;
      st.approx_kl += kl / b;
      st.clip_fraction += clipped / b;
      st.grad_norm += norm;
      ++batches;
    }
  }
  if (batches) {
    st.policy_loss /= batches;
    st.value_loss /= batches;
    st.entropy /= batches;
    st.approx_kl /= batches;
    st.clip_fraction /= batches;
    st.grad_norm /= batches;
  }
  return st;
}

TrainLog PpoTrainer::train(VecEnv& venv, Anm6Env& eval_env, const std::function<void(const UpdateRecord&)>& on_update) {
  if (venv.n_envs() != ppo_.n_envs)
    throw std::invalid_argument("PpoTrainer::train: VecEnv has " + std::to_string(venv.n_envs()) +
                                " envs, config says " + std::to_string(ppo_.n_envs));
  const auto t_start = std::chrono::steady_clock::now();
  TrainLog log;
  log.backing = venv.model().name();
  log.best_score = -std::numeric_limits<double>::infinity();
  RolloutBuffer buf(ppo_.n_envs, ppo_.buffer_size, policy_.obs_dim(), policy_.action_dim());
  const std::uint64_t eval_seed = ppo_.seed + 1'000'003;
  std::int64_t env_steps = 0;
  // Stagnation is counted in training episodes: vector steps since the last
  // improvement divided by the episode length.
  std::int64_t best_at_steps = 0;
  const std::int64_t episode_steps = static_cast<std::int64_t>(venv.episode_length()) * venv.n_envs();
  best_ = policy_;
  for (int u = 1;; ++u) {
    if (env_steps >= ppo_.max_env_steps) break;
    if (ppo_.max_updates > 0 && u > ppo_.max_updates) break;
    const auto t0 = std::chrono::steady_clock::now();
    collect(venv, buf);
    UpdateRecord rec;
    rec.stats = update(buf);
    log.train_seconds += seconds_since(t0);
    env_steps += buf.capacity();
    rec.update = u;
    rec.env_steps = env_steps;
    if (u % ppo_.eval_every == 0) {
      const double score =
          evaluate_policy(policy_, eval_env, ppo_.eval_episodes, eval_seed, ppo_.eval_episode_length);
      rec.eval_score = score;
      if (score > log.best_score) {
        log.best_score = score;
        log.best_update = u;
        best_ = policy_;
        best_at_steps = env_steps;
      }
    }
    rec.train_seconds = log.train_seconds;
    rec.wall_seconds = seconds_since(t_start);
    log.updates.push_back(rec);
    if (on_update) on_update(rec);
    if ((env_steps - best_at_steps) / episode_steps >= ppo_.patience_episodes) {
      log.early_stopped = true;
      break;
    }
  }
  if (log.best_update < 0) {
    best_ = policy_;
    log.best_score = 0.0;
  }
  log.total_seconds = seconds_since(t_start);
  return log;
}

}  // namespace anm::rl
