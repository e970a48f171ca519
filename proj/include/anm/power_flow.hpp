#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "anm/grid.hpp"

namespace anm::pf {

struct Options {
  double tol = 1e-8;  // max |mismatch|, p.u.
  int max_iter = 20;
};

/// Voltages for all buses; index 0 is the slack bus.
struct Voltages {
  std::vector<double> v_mag;
  std::vector<double> theta;
};

struct Solution {
  std::vector<double> v_mag;  // p.u., bus 1 fixed at 1
  std::vector<double> theta;  // rad, bus 1 fixed at 0
  double slack_p = 0.0;       // p.u.
  double slack_q = 0.0;       // p.u.
  bool converged = false;
  int iterations = 0;
  double max_residual = 0.0;
};

struct BranchFlows {
  std::vector<std::complex<double>> i_from;  // I_ij
  std::vector<std::complex<double>> i_to;    // I_ji
  std::vector<double> s_from;                // |S_ij|
  std::vector<double> s_to;                  // |S_ji|
  std::vector<std::complex<double>> power_from;  // V_i conj(I_ij)
  std::vector<std::complex<double>> power_to;
};

/// Complex power drawn out of bus i by the network, P_i + jQ_i.
std::complex<double> bus_power(int i, const std::vector<double>& v_mag, const std::vector<double>& theta,
                               const AdmittanceMatrix& y);

/// Mismatch P_spec - P_calc and Q_spec - Q_calc for buses 2..N, stacked as
/// [P_2..P_N, Q_2..Q_N]. Injections are in p.u.
Eigen::VectorXd residuals(const std::vector<double>& v_mag, const std::vector<double>& theta,
                          const std::vector<double>& p_inj, const std::vector<double>& q_inj,
                          const AdmittanceMatrix& y);

/// d(P_calc, Q_calc)/d(theta_2..N, |V|_2..N). The residual Jacobian is its negative.
Eigen::MatrixXd power_jacobian(const std::vector<double>& v_mag, const std::vector<double>& theta,
                               const AdmittanceMatrix& y);

/// Newton-Raphson from a flat start. Non-convergence is reported, not thrown.
Solution solve(const std::vector<double>& p_inj, const std::vector<double>& q_inj, const AdmittanceMatrix& y,
               const Options& options = {});

BranchFlows branch_flows(const std::vector<double>& v_mag, const std::vector<double>& theta,
                         const GridConfig& config);

}  // namespace anm::pf
