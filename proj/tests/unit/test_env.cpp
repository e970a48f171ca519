#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

#include "anm/env.hpp"
#include "fixtures.hpp"

using namespace anm;

namespace {

GridConfig two_bus() { return parse_config(test::two_bus_json().dump()); }

// load -4 MW, generator capacity 6 MW
DailyProfiles two_bus_profiles(const GridConfig& c) { return DailyProfiles::constant(c, {0.0, -4.0, 6.0, 0.0}); }

struct OracleStep {
  double p_gen, q_gen, p_des, q_des, soc, slack_p, slack_q, reward;
};

// Straight-line transition for the two-bus grid: every capability line is slack
// there, so projection reduces to clamping, and the bus 2 voltage comes from
// Gauss-Seidel.
OracleStep oracle_step(double soc, double a_pg, double a_qg, double a_pd, double a_qd) {
  const double dt = 0.25, eta = 0.9, base = 100.0;
  OracleStep o{};
  o.p_gen = std::clamp(a_pg, 0.0, 6.0);
  o.q_gen = std::clamp(a_qg, -5.0, 5.0);
  const double lo = std::max(-5.0, (soc - 50.0) / (eta * dt));
  const double hi = std::min(5.0, eta * (soc - 0.0) / dt);
  o.p_des = std::clamp(a_pd, lo, hi);
  o.q_des = std::clamp(a_qd, -5.0, 5.0);
  o.soc = o.p_des <= 0 ? soc - eta * dt * o.p_des : soc - dt / eta * o.p_des;
  o.soc = std::clamp(o.soc, 0.0, 50.0);

  const std::complex<double> y(1.0, -5.0);
  const std::complex<double> s2((-4.0 + o.p_gen + o.p_des) / base, (o.q_gen + o.q_des) / base);
  std::complex<double> v2(1.0, 0.0);
  for (int it = 0; it < 2000; ++it) v2 = (std::conj(s2) / std::conj(v2) + y) / y;
  const std::complex<double> s1 = std::conj(y * (1.0 - v2));
  o.slack_p = s1.real() * base;
  o.slack_q = s1.imag() * base;

  const double losses = dt * (o.slack_p - 4.0 + o.p_gen + o.p_des);
  const double des_energy = -dt * o.p_des;
  const double curtail = dt * (6.0 - o.p_gen);
  double phi = std::max(std::abs(v2) - 1.05, 0.0) + std::max(0.95 - std::abs(v2), 0.0);
  const std::complex<double> i12 = y * (1.0 - v2);
  phi += std::max(std::abs(i12) - 10.0, 0.0);
  phi += std::max(std::abs(v2 * std::conj(-i12)) - 10.0, 0.0);
  const double raw = -(losses + des_energy + curtail + 100.0 * dt * phi);
  o.reward = std::clamp(raw, -100.0, 100.0);
  return o;
}

}  // namespace

TEST(Env, ResetIsSeedDeterministic) {
  Anm6Env a(test::desk(), test::desk_profiles()), b(test::desk(), test::desk_profiles());
  EXPECT_EQ(a.reset(42), b.reset(42));
  EXPECT_EQ(a.elapsed(), 0);
}

TEST(Env, ResetSlotsAreUniform) {
  Anm6Env env(test::desk(), test::desk_profiles());
  env.reset(1);
  const int n = 9600, k = 96;
  std::vector<int> count(k, 0);
  for (int i = 0; i < n; ++i) {
    const auto s = env.reset();
    ASSERT_GE(s.aux, 0);
    ASSERT_LT(s.aux, k);
    ASSERT_GE(s.soc, 0.0);
    ASSERT_LE(s.soc, 100.0);
    ++count[s.aux];
  }
  double chi2 = 0.0;
  const double expect = double(n) / k;
  for (int c : count) chi2 += (c - expect) * (c - expect) / expect;
  EXPECT_LT(chi2, 146.0);  // 95 dof, p = 0.001
}

TEST(Env, EncodeDecodeRoundTrip) {
  Anm6Env env(test::desk(), test::desk_profiles());
  const auto s = env.reset(3);
  EXPECT_EQ(State::decode(test::desk(), s.encode()), s);
  std::mt19937_64 rng(4);
  const auto a = random_action(test::desk(), rng);
  const auto back = Action::decode(test::desk(), a.encode());
  EXPECT_EQ(back.encode(), a.encode());
  EXPECT_EQ(static_cast<int>(s.encode().size()), test::desk().state_dim());
  EXPECT_EQ(static_cast<int>(a.encode().size()), test::desk().action_dim());
}

TEST(Env, RandomActionsInsideBounds) {
  const auto b = action_bounds(test::desk());
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_action(test::desk(), rng).encode();
    for (std::size_t j = 0; j < a.size(); ++j) {
      ASSERT_GE(a[j], b.low[j]);
      ASSERT_LE(a[j], b.high[j]);
    }
  }
}

TEST(Env, SocStaysInRangeAndSlotAdvances) {
  Anm6Env env(test::desk(), test::desk_profiles());
  auto s = env.reset(6);
  std::mt19937_64 rng(7);
  for (int t = 0; t < 500; ++t) {
    const auto out = env.step(random_action(test::desk(), rng));
    if (out.done) {
      EXPECT_EQ(out.next_state, s);
      EXPECT_EQ(out.reward, test::desk().reward_min);
      s = env.reset();
      continue;
    }
    EXPECT_GE(out.next_state.soc, 0.0);
    EXPECT_LE(out.next_state.soc, 100.0);
    EXPECT_EQ(out.next_state.aux, (s.aux + 1) % 96);
    EXPECT_GE(out.reward, -100.0);
    EXPECT_LE(out.reward, 100.0);
    s = out.next_state;
  }
}

TEST(Env, TruncatesAtEpisodeLength) {
  Anm6Env env(test::desk(), test::desk_profiles());
  env.set_episode_length(3);
  env.reset(8);
  const Action idle = Action::decode(test::desk(), std::vector<double>(test::desk().action_dim(), 0.0));
  EXPECT_FALSE(env.step(idle).truncated);
  EXPECT_FALSE(env.step(idle).truncated);
  EXPECT_TRUE(env.step(idle).truncated);
}

TEST(Env, TransitionIsPure) {
  Anm6Env env(test::desk(), test::desk_profiles());
  const auto s = env.reset(9);
  std::mt19937_64 rng(10);
  const auto a = random_action(test::desk(), rng);
  const auto o1 = env.transition(s, a);
  const auto o2 = env.transition(s, a);
  EXPECT_EQ(o1.next_state, o2.next_state);
  EXPECT_EQ(o1.reward, o2.reward);
  EXPECT_EQ(env.state(), s);
}

TEST(Env, FeasibleSetpointPassesThrough) {
  const auto c = two_bus();
  Anm6Env env(c, two_bus_profiles(c));
  State s = env.reset(11);
  s.soc = 25.0;
  env.set_state(s);
  Action a{{3.0}, {1.0}, -2.0, 0.5};
  const auto out = env.step(a);
  ASSERT_FALSE(out.done);
  EXPECT_EQ(out.next_state.p[2], 3.0);
  EXPECT_EQ(out.next_state.q[2], 1.0);
  EXPECT_EQ(out.next_state.p[3], -2.0);
  EXPECT_EQ(out.next_state.q[3], 0.5);
}

TEST(Env, MatchesIndependentOracle) {
  const auto c = two_bus();
  Anm6Env env(c, two_bus_profiles(c));
  auto s = env.reset(12);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-12.0, 12.0);
  for (int t = 0; t < 200; ++t) {
    const Action a{{u(rng)}, {u(rng)}, u(rng), u(rng)};
    const auto o = oracle_step(s.soc, a.p_gen[0], a.q_gen[0], a.p_des, a.q_des);
    const auto out = env.step(a);
    ASSERT_FALSE(out.done);
    const auto& n = out.next_state;
    EXPECT_NEAR(n.p[2], o.p_gen, 1e-8);
    EXPECT_NEAR(n.q[2], o.q_gen, 1e-8);
    EXPECT_NEAR(n.p[3], o.p_des, 1e-8);
    EXPECT_NEAR(n.q[3], o.q_des, 1e-8);
    EXPECT_NEAR(n.soc, o.soc, 1e-8);
    // The solver stops at a 1e-8 p.u. mismatch, i.e. 1e-6 MW on a 100 MVA base.
    EXPECT_NEAR(n.p[0], o.slack_p, 1e-6);
    EXPECT_NEAR(n.q[0], o.slack_q, 1e-6);
    EXPECT_EQ(n.p[1], -4.0);
    EXPECT_EQ(n.p_max[0], 6.0);
    EXPECT_NEAR(out.reward, o.reward, 1e-6);
    s = n;
  }
}

TEST(Reward, ZeroEverythingIsZero) {
  const auto& c = test::desk();
  const auto flows = pf::branch_flows(std::vector<double>(6, 1.0), std::vector<double>(6, 0.0), c);
  const auto t = compute_reward(c, std::vector<double>(7, 0.0), {0.0, 0.0}, std::vector<double>(6, 1.0), flows);
  EXPECT_EQ(t.reward, 0.0);
  EXPECT_EQ(t.penalty, 0.0);
}

TEST(Reward, StoredEnergyIsACost) {
  const auto& c = test::desk();
  const auto flows = pf::branch_flows(std::vector<double>(6, 1.0), std::vector<double>(6, 0.0), c);
  std::vector<double> p(7, 0.0);
  p[0] = 2.0;   // slack supplies what the storage takes
  p[6] = -2.0;  // charging 2 MW for a quarter hour
  const auto t = compute_reward(c, p, {0.0, 0.0}, std::vector<double>(6, 1.0), flows);
  EXPECT_DOUBLE_EQ(t.des_energy, 0.5);
  EXPECT_DOUBLE_EQ(t.network_losses, 0.0);
  EXPECT_DOUBLE_EQ(t.reward, -0.5);
}

TEST(Reward, ClippedAtMinimum) {
  const auto& c = test::desk();
  const auto flows = pf::branch_flows(std::vector<double>(6, 1.0), std::vector<double>(6, 0.0), c);
  const auto t = compute_reward(c, std::vector<double>(7, 0.0), {1000.0, 1092.0}, std::vector<double>(6, 1.0), flows);
  EXPECT_DOUBLE_EQ(t.curtailment, 523.0);
  EXPECT_DOUBLE_EQ(t.raw, -523.0);
  EXPECT_EQ(t.reward, -100.0);
}

TEST(Reward, VoltagePenalty) {
  const auto& c = test::desk();
  std::vector<double> v(6, 1.0);
  v[2] = 1.10;
  v[4] = 0.90;
  const auto flows = pf::branch_flows(std::vector<double>(6, 1.0), std::vector<double>(6, 0.0), c);
  const auto t = compute_reward(c, std::vector<double>(7, 0.0), {0.0, 0.0}, v, flows);
  EXPECT_NEAR(t.penalty, 0.25 * 0.10, 1e-12);
  EXPECT_NEAR(t.reward, -100.0 * 0.25 * 0.10, 1e-10);
}
