#pragma once

#include <array>
#include <vector>

#include "anm/grid.hpp"

namespace anm {

using Vec2 = std::array<double, 2>;

/// Feasible set {x in R^2 : G x <= h}. Row i of G is `normals[i]`.
struct Polytope2D {
  std::vector<Vec2> normals;
  std::vector<double> offsets;

  std::size_t rows() const { return normals.size(); }
  double slack(std::size_t i, const Vec2& x) const {
    return offsets[i] - (normals[i][0] * x[0] + normals[i][1] * x[1]);
  }
  bool contains(const Vec2& x, double tol = 1e-9) const;
};

struct KKTResiduals {
  double stationarity = 0.0;
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  double complementarity = 0.0;

  double max() const;
  double sum_of_squares() const;
};

struct Projection {
  Vec2 point{};
  std::vector<double> duals;
};

/// Rows: -P <= -P_lower, P <= P_upper, P <= P_max(t), -Q <= -Q_lower, Q <= Q_upper,
/// Q - tau1 P <= rho1, -(Q - tau2 P) <= -rho2.
Polytope2D build_generator_polytope(const DeviceSpec& device, double p_max_t);

/// Rows: P box, Q box, the four capability lines (upper, lower, upper, lower),
/// then the SoC rows P >= (SoC - SoC_max)/(eta dt) and P <= eta (SoC - SoC_min)/dt.
Polytope2D build_des_polytope(const DeviceSpec& device, double soc_t, double delta_t);

/// Euclidean projection by active-set enumeration. Throws std::domain_error when
/// the polytope is empty.
Projection project_exact(const Vec2& setpoint, const Polytope2D& poly);

KKTResiduals kkt_residuals(const Vec2& setpoint, const Polytope2D& poly, const Vec2& primal,
                           const std::vector<double>& duals);

double soc_update(double soc_t, double p_des_next, double eta, double delta_t);

}  // namespace anm
