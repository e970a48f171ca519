#include "anm/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace anm {

namespace {

double dot(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }

double row_tol(const Polytope2D& poly, std::size_t i, const Vec2& x) {
  const auto& g = poly.normals[i];
  return 1e-11 * (1.0 + std::abs(poly.offsets[i]) + std::hypot(g[0], g[1]) * std::hypot(x[0], x[1]));
}

bool feasible(const Polytope2D& poly, const Vec2& x) {
  for (std::size_t i = 0; i < poly.rows(); ++i)
    if (poly.slack(i, x) < -row_tol(poly, i, x)) return false;
  return true;
}

// Nonnegative multipliers over the active rows that reproduce `r`. Any cone
// element in R^2 is a combination of at most two generators, so singletons and
// pairs cover every case; the smallest-norm certificate wins.
std::vector<double> recover_duals(const Polytope2D& poly, const Vec2& x, const Vec2& r) {
  const std::size_t m = poly.rows();
  std::vector<double> best(m, 0.0);
  const double rn = std::hypot(r[0], r[1]);
  if (rn == 0.0) return best;

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < m; ++i)
    if (std::abs(poly.slack(i, x)) <= 1e3 * row_tol(poly, i, x)) active.push_back(i);

  const double fit_tol = 1e-9 * (1.0 + rn);
  double best_norm = std::numeric_limits<double>::infinity();
  auto consider = [&](std::size_t i, double li, std::size_t j, double lj, bool pair) {
    if (li < -1e-12 || (pair && lj < -1e-12)) return;
    li = std::max(li, 0.0);
    lj = pair ? std::max(lj, 0.0) : 0.0;
    const auto& gi = poly.normals[i];
    Vec2 fit{li * gi[0], li * gi[1]};
    if (pair) {
      fit[0] += lj * poly.normals[j][0];
      fit[1] += lj * poly.normals[j][1];
    }
    if (std::hypot(fit[0] - r[0], fit[1] - r[1]) > fit_tol) return;
    const double norm = std::hypot(li, lj);
    if (norm < best_norm) {
      best_norm = norm;
      std::fill(best.begin(), best.end(), 0.0);
      best[i] = li;
      if (pair) best[j] += lj;
    }
  };

  for (std::size_t a = 0; a < active.size(); ++a) {
    const auto i = active[a];
    const auto& gi = poly.normals[i];
    const double gg = dot(gi, gi);
    if (gg > 0.0) consider(i, dot(gi, r) / gg, i, 0.0, false);
    for (std::size_t b = a + 1; b < active.size(); ++b) {
      const auto j = active[b];
      const auto& gj = poly.normals[j];
      const double det = gi[0] * gj[1] - gi[1] * gj[0];
      if (std::abs(det) <= 1e-12 * std::sqrt(gg * dot(gj, gj))) continue;
      // Solve [gi gj] (li, lj)^T = r.
      const double li = (r[0] * gj[1] - r[1] * gj[0]) / det;
      const double lj = (gi[0] * r[1] - gi[1] * r[0]) / det;
      consider(i, li, j, lj, true);
    }
  }
  if (!std::isfinite(best_norm)) {
    throw std::runtime_error("project_exact: no nonnegative dual certificate for the projection");
  }
  return best;
}

}  // namespace

bool Polytope2D::contains(const Vec2& x, double tol) const {
  for (std::size_t i = 0; i < rows(); ++i)
    if (slack(i, x) < -tol) return false;
  return true;
}

double KKTResiduals::max() const {
  return std::max({stationarity, primal_infeasibility, dual_infeasibility, complementarity});
}

double KKTResiduals::sum_of_squares() const {
  return stationarity * stationarity + primal_infeasibility * primal_infeasibility +
         dual_infeasibility * dual_infeasibility + complementarity * complementarity;
}

Polytope2D build_generator_polytope(const DeviceSpec& device, double p_max_t) {
  if (device.lines.size() != 2) throw std::invalid_argument("generator polytope: device needs 2 flexibility lines");
  if (device.p_min > p_max_t + 1e-12)
    throw std::domain_error("generator polytope: P_lower exceeds the available capacity P_max(t)");
  const auto& l1 = device.lines[0];
  const auto& l2 = device.lines[1];
  Polytope2D poly;
  poly.normals = {{-1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {0.0, -1.0}, {0.0, 1.0}, {-l1.tau, 1.0}, {l2.tau, -1.0}};
  poly.offsets = {-device.p_min, device.p_max, p_max_t, -device.q_min, device.q_max, l1.rho, -l2.rho};
  return poly;
}

Polytope2D build_des_polytope(const DeviceSpec& device, double soc_t, double delta_t) {
  if (device.lines.size() != 4) throw std::invalid_argument("DES polytope: device needs 4 flexibility lines");
  const double tol = 1e-9 * (1.0 + std::abs(device.soc_max));
  if (soc_t < device.soc_min - tol || soc_t > device.soc_max + tol)
    throw std::domain_error("DES polytope: state of charge outside [soc_min, soc_max]");
  soc_t = std::clamp(soc_t, device.soc_min, device.soc_max);
  const double eta = device.eta;
  Polytope2D poly;
  poly.normals = {{-1.0, 0.0}, {1.0, 0.0}, {0.0, -1.0}, {0.0, 1.0}};
  poly.offsets = {-device.p_min, device.p_max, -device.q_min, device.q_max};
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& l = device.lines[k];
    if (k % 2 == 0) {
      poly.normals.push_back({-l.tau, 1.0});
      poly.offsets.push_back(l.rho);
    } else {
      poly.normals.push_back({l.tau, -1.0});
      poly.offsets.push_back(-l.rho);
    }
  }
  poly.normals.push_back({-1.0, 0.0});
  poly.offsets.push_back(-(soc_t - device.soc_max) / (eta * delta_t));
  poly.normals.push_back({1.0, 0.0});
  poly.offsets.push_back(eta * (soc_t - device.soc_min) / delta_t);
  return poly;
}

Projection project_exact(const Vec2& setpoint, const Polytope2D& poly) {
  const std::size_t m = poly.rows();
  Projection out;
  out.duals.assign(m, 0.0);
  if (feasible(poly, setpoint)) {
    out.point = setpoint;
    return out;
  }

  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  auto offer = [&](const Vec2& x) {
    if (!feasible(poly, x)) return;
    const double d = std::hypot(x[0] - setpoint[0], x[1] - setpoint[1]);
    if (d < best) {
      best = d;
      out.point = x;
      found = true;
    }
  };

  for (std::size_t i = 0; i < m; ++i) {
    const auto& g = poly.normals[i];
    const double gg = dot(g, g);
    const double viol = dot(g, setpoint) - poly.offsets[i];
    if (gg == 0.0 || viol <= 0.0) continue;
    offer({setpoint[0] - viol / gg * g[0], setpoint[1] - viol / gg * g[1]});
  }
  for (std::size_t i = 0; i < m; ++i) {
    const auto& gi = poly.normals[i];
    for (std::size_t j = i + 1; j < m; ++j) {
      const auto& gj = poly.normals[j];
      const double det = gi[0] * gj[1] - gi[1] * gj[0];
      if (std::abs(det) <= 1e-12 * std::sqrt(dot(gi, gi) * dot(gj, gj))) continue;
      const double hi = poly.offsets[i];
      const double hj = poly.offsets[j];
      offer({(hi * gj[1] - hj * gi[1]) / det, (gi[0] * hj - gj[0] * hi) / det});
    }
  }
  if (!found) throw std::domain_error("project_exact: empty polytope");

  const Vec2 r{setpoint[0] - out.point[0], setpoint[1] - out.point[1]};
  out.duals = recover_duals(poly, out.point, r);
  return out;
}

KKTResiduals kkt_residuals(const Vec2& setpoint, const Polytope2D& poly, const Vec2& primal,
                           const std::vector<double>& duals) {
  if (duals.size() != poly.rows()) throw std::invalid_argument("kkt_residuals: dual dimension mismatch");
  Vec2 stat{primal[0] - setpoint[0], primal[1] - setpoint[1]};
  double primal_sq = 0.0;
  double dual_sq = 0.0;
  double comp_sq = 0.0;
  for (std::size_t i = 0; i < poly.rows(); ++i) {
    const auto& g = poly.normals[i];
    stat[0] += g[0] * duals[i];
    stat[1] += g[1] * duals[i];
    const double c = -poly.slack(i, primal);
    if (c > 0.0) primal_sq += c * c;
    if (duals[i] < 0.0) dual_sq += duals[i] * duals[i];
    comp_sq += (duals[i] * c) * (duals[i] * c);
  }
  KKTResiduals res;
  res.stationarity = std::hypot(stat[0], stat[1]);
  res.primal_infeasibility = std::sqrt(primal_sq);
  res.dual_infeasibility = std::sqrt(dual_sq);
  res.complementarity = std::sqrt(comp_sq);
  return res;
}

double soc_update(double soc_t, double p_des_next, double eta, double delta_t) {
  if (p_des_next <= 0.0) return soc_t - eta * delta_t * p_des_next;
  return soc_t - delta_t / eta * p_des_next;
}

}  // namespace anm
