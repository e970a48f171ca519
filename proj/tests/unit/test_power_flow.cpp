#include <gtest/gtest.h>

#include <complex>
#include <random>

#include "anm/power_flow.hpp"
#include "fixtures.hpp"

using namespace anm;
using cd = std::complex<double>;

namespace {

GridConfig two_bus() { return parse_config(test::two_bus_json().dump()); }

// Gauss-Seidel on the single PQ bus of the two-bus case.
cd gauss_seidel_v2(cd y, cd s2) {
  cd v2(1.0, 0.0);
  for (int k = 0; k < 500; ++k) v2 = (std::conj(s2) / std::conj(v2) + y * cd(1.0, 0.0)) / y;
  return v2;
}

std::vector<double> p_calc(const std::vector<double>& v, const std::vector<double>& th, const AdmittanceMatrix& y) {
  const int n = static_cast<int>(v.size()) - 1;
  std::vector<double> zero(n, 0.0);
  Eigen::VectorXd r = -pf::residuals(v, th, zero, zero, y);
  return {r.data(), r.data() + r.size()};
}

}  // namespace

TEST(PowerFlow, FlatProfileZeroResidual) {
  const auto y = build_admittance(test::desk());
  std::vector<double> v(6, 1.0), th(6, 0.0), z(5, 0.0);
  // row sums of Y vanish only up to rounding
  EXPECT_LE(pf::residuals(v, th, z, z, y).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PowerFlow, ZeroInjectionsFlatSolution) {
  const auto y = build_admittance(test::desk());
  std::vector<double> z(5, 0.0);
  const auto s = pf::solve(z, z, y);
  ASSERT_TRUE(s.converged);
  EXPECT_LE(s.iterations, 1);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(s.v_mag[i], 1.0);
    EXPECT_EQ(s.theta[i], 0.0);
  }
}

TEST(PowerFlow, TwoBusHandCase) {
  const auto c = two_bus();
  const auto y = build_admittance(c);
  const auto s = pf::solve({-0.1}, {0.0}, y);
  ASSERT_TRUE(s.converged);
  const cd v2 = gauss_seidel_v2(cd(1.0, -5.0), cd(-0.1, 0.0));
  EXPECT_NEAR(s.v_mag[1], std::abs(v2), 1e-9);
  EXPECT_NEAR(s.theta[1], std::arg(v2), 1e-9);
  // the Gauss-Seidel point is itself a solution
  const auto r = pf::residuals({1.0, std::abs(v2)}, {0.0, std::arg(v2)}, {-0.1}, {0.0}, y);
  EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-8);
  // slack supplies the load plus the loss
  const cd s1 = cd(1.0, 0.0) * std::conj(cd(1.0, -5.0) * (cd(1.0, 0.0) - v2));
  EXPECT_NEAR(s.slack_p, s1.real(), 1e-9);
  EXPECT_NEAR(s.slack_q, s1.imag(), 1e-9);
}

TEST(PowerFlow, SmallPerturbationConvergesFast) {
  const auto y = build_admittance(two_bus());
  const auto s = pf::solve({-0.01}, {0.0}, y);
  ASSERT_TRUE(s.converged);
  EXPECT_LE(s.iterations, 5);
  EXPECT_LE(pf::residuals(s.v_mag, s.theta, {-0.01}, {0.0}, y).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(PowerFlow, HugeInjectionsDiverge) {
  const auto& c = test::desk();
  const auto y = build_admittance(c);
  std::vector<double> p = {0.0, -0.3, -0.2, -0.25, 0.1}, q = {0.0, -0.1, -0.1, -0.05, 0.0};
  for (auto& v : p) v *= 1000.0;
  for (auto& v : q) v *= 1000.0;
  EXPECT_FALSE(pf::solve(p, q, y).converged);
}

TEST(PowerFlow, SolvedCasesHaveSmallResidual) {
  const auto& c = test::desk();
  const auto y = build_admittance(c);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  int solved = 0;
  for (int k = 0; k < 200; ++k) {
    std::vector<double> p(5), q(5);
    for (int i = 0; i < 5; ++i) {
      p[i] = u(rng);
      q[i] = 0.3 * u(rng);
    }
    const auto s = pf::solve(p, q, y);
    if (!s.converged) continue;
    ++solved;
    EXPECT_LE(pf::residuals(s.v_mag, s.theta, p, q, y).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(s.max_residual, 1e-8);
  }
  EXPECT_GT(solved, 150);
}

TEST(PowerFlow, JacobianMatchesFiniteDifferences) {
  const auto& c = test::desk();
  const auto y = build_admittance(c);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dv(0.9, 1.1), dth(-0.3, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(6, 1.0), th(6, 0.0);
    for (int i = 1; i < 6; ++i) {
      v[i] = dv(rng);
      th[i] = dth(rng);
    }
    const Eigen::MatrixXd j = pf::power_jacobian(v, th, y);
    const double h = 1e-6;
    for (int k = 0; k < 10; ++k) {
      auto vp = v, vm = v, tp = th, tm = th;
      if (k < 5) {
        tp[k + 1] += h;
        tm[k + 1] -= h;
      } else {
        vp[k - 4] += h;
        vm[k - 4] -= h;
      }
      const auto fp = p_calc(k < 5 ? v : vp, k < 5 ? tp : th, y);
      const auto fm = p_calc(k < 5 ? v : vm, k < 5 ? tm : th, y);
      for (int r = 0; r < 10; ++r) {
        const double fd = (fp[r] - fm[r]) / (2 * h);
        EXPECT_LE(std::abs(fd - j(r, k)), 1e-6 * std::max(1.0, std::abs(j(r, k)))) << r << "," << k;
      }
    }
  }
}

TEST(BranchFlows, FlatVoltagesShuntOnly) {
  auto js = test::two_bus_json();
  js["branches"][0]["y_shunt"] = {0.0, 0.1};
  const auto c = parse_config(js.dump());
  const auto f = pf::branch_flows({1.0, 1.0}, {0.0, 0.0}, c);
  EXPECT_NEAR(std::abs(f.i_from[0] - cd(0.0, 0.1)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(f.i_to[0] - cd(0.0, 0.1)), 0.0, 1e-15);
}

TEST(BranchFlows, TwoBusHandApparentPower) {
  const auto c = two_bus();
  const cd v1(1.0, 0.0), v2 = std::polar(0.98, -0.02);
  const cd y(1.0, -5.0);
  const cd i12 = y * (v1 - v2);
  const cd i21 = y * (v2 - v1);
  const auto f = pf::branch_flows({1.0, 0.98}, {0.0, -0.02}, c);
  EXPECT_NEAR(f.s_from[0], std::abs(v1 * std::conj(i12)), 1e-12);
  EXPECT_NEAR(f.s_to[0], std::abs(v2 * std::conj(i21)), 1e-12);
}

TEST(BranchFlows, LossesNonNegative) {
  const auto& c = test::desk();
  const auto y = build_admittance(c);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> p(5), q(5);
    for (int i = 0; i < 5; ++i) {
      p[i] = u(rng);
      q[i] = 0.3 * u(rng);
    }
    const auto s = pf::solve(p, q, y);
    if (!s.converged) continue;
    const auto f = pf::branch_flows(s.v_mag, s.theta, c);
    double total = 0.0;
    for (std::size_t l = 0; l < c.branches.size(); ++l) {
      const double loss = f.power_from[l].real() + f.power_to[l].real();
      EXPECT_GE(loss, -1e-12);
      total += loss;
    }
    // network loss equals net injected power
    double inj = s.slack_p;
    for (double v : p) inj += v;
    EXPECT_NEAR(total, inj, 1e-7);
  }
}
