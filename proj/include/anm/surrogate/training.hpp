#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "anm/grid.hpp"
#include "anm/nn/adamw.hpp"
#include "anm/nn/mlp.hpp"
#include "anm/projection.hpp"
#include "anm/surrogate/scaling.hpp"

namespace anm::surrogate {

/// Sum of squared KKT residual norms for the projection of `a` onto `poly`
/// evaluated at (x, lambda). Writes dL/dx and dL/dlambda when the outputs are
/// non-null.
double kkt_loss(const Vec2& a, const Polytope2D& poly, const Vec2& x, const double* lambda, double* d_x,
                double* d_lambda);

struct TrainOptions {
  nn::AdamWOptions adam{};  // lr 1e-5, betas (0.9, 0.999), eps 1e-8, wd 1e-4
  int batch = 64;
  std::int64_t patience = 5000;
  std::int64_t max_steps = 2'000'000;
  double max_seconds = 0.0;  // 0 disables the wall-clock cap
  std::vector<int> hidden = {64, 64};
  nn::Activation activation = nn::Activation::tanh;
  std::uint64_t seed = 0;
  /// The EMA of the batch loss is what the early-stop monitor sees.
  double monitor_smoothing = 0.999;
  int log_every = 0;
  std::function<void(std::int64_t step, double loss)> on_log;
};

struct TrainReport {
  std::int64_t steps = 0;
  double best_loss = 0.0;
  double final_loss = 0.0;
  bool early_stopped = false;
  double seconds = 0.0;
};

/// Layout shared by training and inference.
namespace layout {
/// Generator net: per generator [aP, aQ, Pmax] in, [zP, zQ, 7 duals] out.
constexpr int gen_inputs_per_device = 3;
constexpr int gen_rows = 7;
constexpr int gen_outputs_per_device = 2 + gen_rows;
/// DES net: [aP, aQ, soc] in, [zP, zQ, 10 duals] out.
constexpr int des_inputs = 3;
constexpr int des_rows = 10;
constexpr int des_outputs = 2 + des_rows;
/// Balance net output scales: V = 1 + 0.1 o, theta = 0.1 o.
constexpr double voltage_scale = 0.1;
constexpr double angle_scale = 0.1;
}  // namespace layout

/// Slack head scale in p.u., from the P_bus1 range.
double slack_scale(const GridConfig& config, const ScalingTable& table);

/// Label-free training: the only signal is the KKT residual of each sampled
/// projection problem. Never touches the environment.
nn::Mlp<double> train_gen_net(const GridConfig& config, const ScalingTable& table, const TrainOptions& options,
                              TrainReport* report = nullptr);
nn::Mlp<double> train_des_net(const GridConfig& config, const ScalingTable& table, const TrainOptions& options,
                              TrainReport* report = nullptr);
/// Label-free training on power-flow residuals of sampled injections.
nn::Mlp<double> train_balance_net(const GridConfig& config, const ScalingTable& table, const TrainOptions& options,
                                  TrainReport* report = nullptr);

/// Physics loss of one balance-net output and its gradient with respect to
/// (V_2..N, theta_2..N, slack P, slack Q). Injections and outputs in p.u.
double balance_loss(const AdmittanceMatrix& y, const std::vector<double>& p_inj, const std::vector<double>& q_inj,
                    const std::vector<double>& v_mag, const std::vector<double>& theta, double slack_p,
                    double slack_q, std::vector<double>* grad);

/// Held-out checks against the exact oracles on Sobol points taken far past
/// the training prefix.
struct ProjectionQuality {
  double mean_distance = 0.0;  // device frame units
  double max_distance = 0.0;
  int samples = 0;
};
ProjectionQuality evaluate_gen_net(const nn::Mlp<double>& net, const GridConfig& config, const ScalingTable& table,
                                   int n = 1024, std::uint64_t offset = 1ULL << 30);
ProjectionQuality evaluate_des_net(const nn::Mlp<double>& net, const GridConfig& config, const ScalingTable& table,
                                   int n = 1024, std::uint64_t offset = 1ULL << 30);

struct BalanceQuality {
  double voltage_mae = 0.0;  // p.u., solvable points only
  double angle_mae = 0.0;
  double mean_max_residual = 0.0;
  int solvable = 0;
  int samples = 0;
};
BalanceQuality evaluate_balance_net(const nn::Mlp<double>& net, const GridConfig& config, const ScalingTable& table,
                                    int n = 1024, std::uint64_t offset = 1ULL << 30);

/// Network inputs for one unit-cube point, exposed for tests and inference.
std::vector<double> gen_net_input(const GridConfig& config, const ScalingTable& table,
                                  const std::vector<double>& unit_point);

}  // namespace anm::surrogate
