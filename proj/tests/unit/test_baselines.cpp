#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "anm/baselines/baselines.hpp"
#include "fixtures.hpp"

using namespace anm;
using namespace anm::baselines;

TEST(Metrics, HandValues) {
  Eigen::MatrixXd truth(3, 1), pred(3, 1);
  truth << 1, 2, 3;
  pred << 1, 2, 4;
  const auto m = compute_metrics(truth, pred);
  EXPECT_NEAR(m.mae[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.r2[0], 0.5, 1e-15);
  EXPECT_EQ(m.samples, 3);
}

TEST(Metrics, MeanPredictorHasZeroR2) {
  Eigen::MatrixXd truth(4, 1), pred(4, 1);
  truth << 1, 2, 3, 6;
  pred.setConstant(3.0);
  EXPECT_NEAR(compute_metrics(truth, pred).r2[0], 0.0, 1e-15);
}

TEST(Metrics, ConstantTruthHasNoR2) {
  Eigen::MatrixXd truth = Eigen::MatrixXd::Ones(3, 2), pred = Eigen::MatrixXd::Ones(3, 2);
  truth(1, 1) = 2.0;
  const auto m = compute_metrics(truth, pred);
  EXPECT_TRUE(std::isnan(m.r2[0]));
  EXPECT_FALSE(std::isnan(m.r2_mean));
}

TEST(Metrics, ScaledByWidth) {
  Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(2, 2), pred = Eigen::MatrixXd::Ones(2, 2);
  const auto m = compute_metrics(truth, pred, {"a", "b"}, {2.0, 4.0});
  EXPECT_NEAR(m.mae_scaled_mean, (0.5 + 0.25) / 2.0, 1e-15);
}

TEST(Datasets, EmptyRequest) {
  const auto d = build_generative_dataset(test::desk(), test::desk_profiles(), 0, 1);
  EXPECT_EQ(d.size(), 0u);
  EXPECT_THROW(fit_baseline(BaselineKind::linear, d, test::desk(), test::desk_profiles()), std::invalid_argument);
}

TEST(Datasets, SeedReproducible) {
  const auto a = build_agent_dataset(test::desk(), test::desk_profiles(), 50, 7);
  const auto b = build_agent_dataset(test::desk(), test::desk_profiles(), 50, 7);
  EXPECT_EQ(a.inputs(), b.inputs());
  EXPECT_EQ(a.targets(), b.targets());
}

TEST(Datasets, AgentSamplesChain) {
  const auto d = build_agent_dataset(test::desk(), test::desk_profiles(), 200, 8, 50);
  ASSERT_EQ(d.size(), 200u);
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    if (d.dones[i] || (i + 1) % 50 == 0) continue;
    EXPECT_EQ(d.states[i + 1], d.next_states[i]) << i;
  }
  for (double r : d.rewards) {
    EXPECT_GE(r, -100.0);
    EXPECT_LE(r, 100.0);
  }
}

TEST(Datasets, GenerativeStatesInRange) {
  const auto d = build_generative_dataset(test::desk(), test::desk_profiles(), 100, 9);
  const auto r = state_ranges(test::desk());
  for (const auto& s : d.states) {
    const auto e = s.encode();
    for (std::size_t k = 0; k < e.size(); ++k) {
      EXPECT_GE(e[k], r.low[k] - 1e-9);
      EXPECT_LE(e[k], r.high[k] + 1e-9);
    }
  }
}

TEST(Datasets, SaveLoadRoundTrip) {
  const auto d = build_agent_dataset(test::desk(), test::desk_profiles(), 30, 10);
  const auto stem = std::filesystem::temp_directory_path() / "anm_dataset_rt";
  d.save(stem);
  const auto back = TransitionDataset::load(stem, test::desk());
  EXPECT_EQ(back.inputs(), d.inputs());
  EXPECT_EQ(back.targets(), d.targets());
  EXPECT_EQ(back.kind, d.kind);
}

TEST(Baselines, LinearRecoversLinearMap) {
  // Targets that are an exact affine function of the inputs.
  auto d = build_generative_dataset(test::desk(), test::desk_profiles(), 400, 11);
  const auto x = d.inputs();
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto ns = d.states[i].encode();
    for (std::size_t k = 0; k < ns.size(); ++k) ns[k] = 0.5 * x(i, k % x.cols()) - 0.25 * x(i, (k + 3) % x.cols()) + 1.0;
    ns[ns.size() - 1] = d.next_states[i].aux;  // keep the slot a valid integer
    d.next_states[i] = State::decode(test::desk(), ns);
    d.rewards[i] = x(i, 0) - 2.0 * x(i, 1);
  }
  const auto m = fit_baseline(BaselineKind::linear, d, test::desk(), test::desk_profiles());
  const auto pred = m->predict(x);
  const auto truth = d.targets();
  EXPECT_LE((pred - truth).leftCols(truth.cols() - 2).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((pred - truth).col(truth.cols() - 1).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Baselines, NeverDeclareFailure) {
  const auto d = build_agent_dataset(test::desk(), test::desk_profiles(), 300, 12);
  BaselineOptions o;
  o.epochs = 2;
  const auto m = fit_baseline(BaselineKind::mlp, d, test::desk(), test::desk_profiles(), o);
  const auto out = m->step_batch(d.states, d.actions);
  for (const auto& s : out) EXPECT_FALSE(s.done);
  EXPECT_EQ(m->name(), "mlp");
}

TEST(Baselines, KindNames) {
  EXPECT_EQ(baseline_kind_from_string("linear"), BaselineKind::linear);
  EXPECT_EQ(baseline_kind_from_string("mlp"), BaselineKind::mlp);
  EXPECT_THROW(baseline_kind_from_string("xgb"), std::invalid_argument);
}
