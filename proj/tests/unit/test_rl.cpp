#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "anm/rl/ppo.hpp"
#include "anm/rl/sweep.hpp"
#include "anm/rl/vec_env.hpp"
#include "fixtures.hpp"

using namespace anm;
using namespace anm::rl;

namespace {

std::shared_ptr<const TransitionModel> reference() {
  return std::make_shared<ReferenceModel>(test::desk(), test::desk_profiles());
}

std::vector<Action> random_actions(int n, std::mt19937_64& rng) {
  std::vector<Action> a;
  for (int i = 0; i < n; ++i) a.push_back(random_action(test::desk(), rng));
  return a;
}

PpoConfig tiny_ppo() {
  PpoConfig p;
  p.n_envs = 2;
  p.buffer_size = 16;
  p.minibatch = 8;
  p.n_epochs = 2;
  p.max_env_steps = 96;
  p.eval_episode_length = 8;
  p.hidden = {8};
  p.seed = 5;
  return p;
}

}  // namespace

TEST(Buffer, CapacityIsProduct) {
  EXPECT_EQ(buffer_capacity(100, 30), 3000);
  EXPECT_EQ(buffer_capacity(1, 1), 1);
  EXPECT_EQ(buffer_capacity(8, 256), 2048);
  EXPECT_THROW(buffer_capacity(0, 30), std::invalid_argument);
  EXPECT_THROW(buffer_capacity(4, -1), std::invalid_argument);
}

TEST(Gae, ZeroLambdaIsOneStepTd) {
  // two envs, two steps
  const std::vector<double> r = {1.0, 2.0, 3.0, 4.0}, v = {0.5, 0.5, 1.0, 2.0};
  const std::vector<char> d = {0, 0, 0, 1};
  const auto g = gae(r, v, d, {10.0, 10.0}, 2, 0.9, 0.0);
  EXPECT_DOUBLE_EQ(g.advantages[0], 1.0 + 0.9 * 1.0 - 0.5);
  EXPECT_DOUBLE_EQ(g.advantages[1], 2.0 + 0.9 * 2.0 - 0.5);
  EXPECT_DOUBLE_EQ(g.advantages[2], 3.0 + 0.9 * 10.0 - 1.0);
  EXPECT_DOUBLE_EQ(g.advantages[3], 4.0 - 2.0);
  for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(g.returns[k], g.advantages[k] + v[k]);
}

TEST(Gae, UnitDiscountIsMonteCarlo) {
  const std::vector<double> r = {1.0, 2.0, 3.0}, v = {0.3, -0.2, 0.7};
  const auto g = gae(r, v, {0, 0, 0}, {5.0}, 1, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(g.returns[0], 11.0);
  EXPECT_DOUBLE_EQ(g.returns[1], 10.0);
  EXPECT_DOUBLE_EQ(g.returns[2], 8.0);
}

TEST(Gae, DoneCutsBootstrap) {
  const auto g = gae({1.0, 1.0}, {0.0, 0.0}, {1, 0}, {100.0}, 1, 0.99, 0.95);
  EXPECT_DOUBLE_EQ(g.advantages[0], 1.0);
}

TEST(Gae, AllZeroGivesZero) {
  const auto g = gae(std::vector<double>(6, 0.0), std::vector<double>(6, 0.0), std::vector<char>(6, 0), {0.0, 0.0},
                     2, 0.99, 0.95);
  for (double a : g.advantages) EXPECT_EQ(a, 0.0);
}

TEST(Gae, LengthMismatchThrows) {
  EXPECT_THROW(gae({1.0, 2.0, 3.0}, {0.0, 0.0, 0.0}, {0, 0, 0}, {0.0, 0.0}, 2, 0.9, 0.9), std::invalid_argument);
}

TEST(VecEnv, BatchMatchesPerEnvSteps) {
  const auto model = reference();
  VecEnv venv(model, test::desk(), 5, 3, 288);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto before = venv.states();
    const auto acts = random_actions(5, rng);
    const auto st = venv.step(acts);
    for (int i = 0; i < 5; ++i) {
      const auto one = model->step(before[i], acts[i]);
      EXPECT_EQ(st.final_states[i], one.next_state);
      EXPECT_EQ(st.rewards[i], one.reward);
      EXPECT_EQ(st.dones[i] != 0, one.done);
    }
  }
}

TEST(VecEnv, SingleEnvWorks) {
  VecEnv venv(reference(), test::desk(), 1, 0, 288);
  std::mt19937_64 rng(5);
  const auto st = venv.step(random_actions(1, rng));
  EXPECT_EQ(st.states.size(), 1u);
  EXPECT_THROW(venv.step(random_actions(2, rng)), std::invalid_argument);
}

TEST(VecEnv, AutoResetsAtEpisodeLength) {
  VecEnv venv(reference(), test::desk(), 3, 6, 4);
  std::mt19937_64 rng(7);
  for (int t = 1; t <= 4; ++t) {
    const auto st = venv.step(random_actions(3, rng));
    for (int i = 0; i < 3; ++i) {
      if (st.dones[i]) continue;
      EXPECT_EQ(st.truncated[i] != 0, t == 4);
    }
  }
  for (int e : venv.elapsed()) EXPECT_EQ(e, 0);
}

TEST(VecEnv, SeedReproducible) {
  VecEnv a(reference(), test::desk(), 4, 9, 288), b(reference(), test::desk(), 4, 9, 288);
  EXPECT_EQ(a.states(), b.states());
  VecEnv c(reference(), test::desk(), 4, 10, 288);
  EXPECT_NE(a.states(), c.states());
}

TEST(Policy, SquashStaysInBox) {
  std::mt19937_64 rng(1);
  Policy p(test::desk(), {8}, 0.0, rng);
  const auto b = action_bounds(test::desk());
  std::vector<double> u(p.action_dim(), 0.0);
  const auto mid = p.squash(u.data()).encode();
  for (std::size_t j = 0; j < mid.size(); ++j) EXPECT_NEAR(mid[j], 0.5 * (b.low[j] + b.high[j]), 1e-12);
  for (double big : {-50.0, 50.0}) {
    std::fill(u.begin(), u.end(), big);
    const auto a = p.squash(u.data()).encode();
    for (std::size_t j = 0; j < a.size(); ++j) {
      EXPECT_GE(a[j], b.low[j]);
      EXPECT_LE(a[j], b.high[j]);
    }
  }
}

TEST(Policy, JsonRoundTrip) {
  std::mt19937_64 rng(2);
  Policy p(test::desk(), {8}, -0.5, rng);
  const auto back = Policy::from_json(test::desk(), p.to_json());
  Anm6Env env(test::desk(), test::desk_profiles());
  const auto s = env.reset(3);
  EXPECT_EQ(back.act_deterministic(s).encode(), p.act_deterministic(s).encode());
  EXPECT_EQ(back.log_std, p.log_std);
}

TEST(PpoConfig, RejectsBadValues) {
  PpoConfig p;
  EXPECT_NO_THROW(p.validate());
  p.gamma = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = PpoConfig{};
  p.n_envs = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Ppo, TrainingIsDeterministic) {
  auto run = [] {
    const auto cfg = tiny_ppo();
    VecEnv venv(reference(), test::desk(), cfg.n_envs, cfg.seed, 288);
    Anm6Env eval(test::desk(), test::desk_profiles());
    PpoTrainer tr(test::desk(), cfg);
    const auto log = tr.train(venv, eval);
    return std::make_pair(log, tr.policy().mean_net.params());
  };
  const auto [la, pa] = run();
  const auto [lb, pb] = run();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) ASSERT_EQ(pa[i], pb[i]) << "param " << i;
  ASSERT_EQ(la.updates.size(), 3u);
  ASSERT_EQ(la.updates.size(), lb.updates.size());
  for (std::size_t i = 0; i < la.updates.size(); ++i) {
    EXPECT_EQ(la.updates[i].eval_score, lb.updates[i].eval_score);
    EXPECT_EQ(la.updates[i].env_steps, static_cast<std::int64_t>(32 * (i + 1)));
  }
}

TEST(Ppo, EvaluationScoreBounded) {
  std::mt19937_64 rng(3);
  Policy p(test::desk(), {8}, 0.0, rng);
  Anm6Env env(test::desk(), test::desk_profiles());
  const double s = evaluate_episode(p, env, 4, 10);
  EXPECT_GE(s, 10 * test::desk().reward_min);
  EXPECT_LE(s, 10 * test::desk().reward_max);
}

TEST(Sweep, Pearson) {
  EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-12);
  EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-12);
  EXPECT_TRUE(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
  EXPECT_TRUE(std::isnan(pearson({1}, {1})));
  EXPECT_THROW(pearson({1, 2}, {1}), std::invalid_argument);
}
