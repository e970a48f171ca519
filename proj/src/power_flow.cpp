#include "anm/power_flow.hpp"

#include <cmath>

namespace anm::pf {

std::complex<double> bus_power(int i, const std::vector<double>& v_mag, const std::vector<double>& theta,
                               const AdmittanceMatrix& y) {
  const int n = static_cast<int>(v_mag.size());
  double p = 0.0;
  double q = 0.0;
  for (int k = 0; k < n; ++k) {
    const double g = y(i, k).real();
    const double b = y(i, k).imag();
    if (g == 0.0 && b == 0.0) continue;
    const double d = theta[i] - theta[k];
    const double c = std::cos(d);
    const double s = std::sin(d);
    p += v_mag[k] * (g * c + b * s);
    q += v_mag[k] * (g * s - b * c);
  }
  return {v_mag[i] * p, v_mag[i] * q};
}

Eigen::VectorXd residuals(const std::vector<double>& v_mag, const std::vector<double>& theta,
                          const std::vector<double>& p_inj, const std::vector<double>& q_inj,
                          const AdmittanceMatrix& y) {
  const int m = static_cast<int>(v_mag.size()) - 1;
  Eigen::VectorXd r(2 * m);
  for (int i = 1; i <= m; ++i) {
    const auto s = bus_power(i, v_mag, theta, y);
    r(i - 1) = p_inj[i - 1] - s.real();
    r(m + i - 1) = q_inj[i - 1] - s.imag();
  }
  return r;
}

Eigen::MatrixXd power_jacobian(const std::vector<double>& v_mag, const std::vector<double>& theta,
                               const AdmittanceMatrix& y) {
  const int n = static_cast<int>(v_mag.size());
  const int m = n - 1;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  for (int i = 1; i < n; ++i) {
    const auto s = bus_power(i, v_mag, theta, y);
    const double vi = v_mag[i];
    const double gii = y(i, i).real();
    const double bii = y(i, i).imag();
    const int r = i - 1;
    for (int k = 1; k < n; ++k) {
      const int c = k - 1;
      if (k == i) {
        jac(r, c) = -s.imag() - bii * vi * vi;
        jac(r, m + c) = s.real() / vi + gii * vi;
        jac(m + r, c) = s.real() - gii * vi * vi;
        jac(m + r, m + c) = s.imag() / vi - bii * vi;
        continue;
      }
      const double g = y(i, k).real();
      const double b = y(i, k).imag();
      if (g == 0.0 && b == 0.0) continue;
      const double d = theta[i] - theta[k];
      const double cs = std::cos(d);
      const double sn = std::sin(d);
      const double vk = v_mag[k];
      jac(r, c) = vi * vk * (g * sn - b * cs);
      jac(r, m + c) = vi * (g * cs + b * sn);
      jac(m + r, c) = -vi * vk * (g * cs + b * sn);
      jac(m + r, m + c) = vi * (g * sn - b * cs);
    }
  }
  return jac;
}

Solution solve(const std::vector<double>& p_inj, const std::vector<double>& q_inj, const AdmittanceMatrix& y,
               const Options& options) {
  const int n = static_cast<int>(y.rows());
  const int m = n - 1;
  Solution sol;
  sol.v_mag.assign(n, 1.0);
  sol.theta.assign(n, 0.0);

  Eigen::VectorXd r = residuals(sol.v_mag, sol.theta, p_inj, q_inj, y);
  sol.max_residual = m > 0 ? r.cwiseAbs().maxCoeff() : 0.0;
  while (sol.max_residual > options.tol && sol.iterations < options.max_iter) {
    const Eigen::MatrixXd jac = power_jacobian(sol.v_mag, sol.theta, y);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    if (!std::isfinite(lu.determinant()) || lu.determinant() == 0.0) break;
    const Eigen::VectorXd dx = lu.solve(r);
    if (!dx.allFinite()) break;
    for (int i = 0; i < m; ++i) {
      sol.theta[i + 1] += dx(i);
      sol.v_mag[i + 1] += dx(m + i);
    }
    ++sol.iterations;
    r = residuals(sol.v_mag, sol.theta, p_inj, q_inj, y);
    if (!r.allFinite()) break;
    sol.max_residual = r.cwiseAbs().maxCoeff();
  }
  sol.converged = std::isfinite(sol.max_residual) && sol.max_residual <= options.tol;
  const auto slack = bus_power(0, sol.v_mag, sol.theta, y);
  sol.slack_p = slack.real();
  sol.slack_q = slack.imag();
  return sol;
}

BranchFlows branch_flows(const std::vector<double>& v_mag, const std::vector<double>& theta,
                         const GridConfig& config) {
  BranchFlows f;
  const auto nl = config.branches.size();
  f.i_from.resize(nl);
  f.i_to.resize(nl);
  f.s_from.resize(nl);
  f.s_to.resize(nl);
  f.power_from.resize(nl);
  f.power_to.resize(nl);
  thread_local std::vector<std::complex<double>> v;
  v.resize(v_mag.size());
  for (std::size_t i = 0; i < v_mag.size(); ++i) v[i] = std::polar(v_mag[i], theta[i]);
  for (std::size_t l = 0; l < nl; ++l) {
    const auto& br = config.branches[l];
    const auto vi = v[br.from - 1];
    const auto vj = v[br.to - 1];
    const double t = br.tap;
    f.i_from[l] = (br.y_series + br.y_shunt) / (t * t) * vi - br.y_series / t * vj;
    f.i_to[l] = -br.y_series / t * vi + (br.y_series + br.y_shunt) * vj;
    f.power_from[l] = vi * std::conj(f.i_from[l]);
    f.power_to[l] = vj * std::conj(f.i_to[l]);
    f.s_from[l] = std::sqrt(std::norm(f.power_from[l]));
    f.s_to[l] = std::sqrt(std::norm(f.power_to[l]));
  }
  return f;
}

}  // namespace anm::pf
