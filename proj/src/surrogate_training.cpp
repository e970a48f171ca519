#include "anm/surrogate/training.hpp"

#include <chrono>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "anm/nn/early_stop.hpp"
#include "anm/nn/sobol.hpp"
#include "anm/power_flow.hpp"

namespace anm::surrogate {

using Matrix = nn::Mlp<double>::Matrix;

double kkt_loss(const Vec2& a, const Polytope2D& poly, const Vec2& x, const double* lambda, double* d_x,
                double* d_lambda) {
  const std::size_t m = poly.rows();
  double s0 = x[0] - a[0];
  double s1 = x[1] - a[1];
  for (std::size_t i = 0; i < m; ++i) {
    s0 += poly.normals[i][0] * lambda[i];
    s1 += poly.normals[i][1] * lambda[i];
  }
  double loss = s0 * s0 + s1 * s1;
  double gx0 = 2.0 * s0, gx1 = 2.0 * s1;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& g = poly.normals[i];
    const double r = g[0] * x[0] + g[1] * x[1] - poly.offsets[i];  // G x - h
    const double p = r > 0.0 ? r : 0.0;
    const double d = lambda[i] < 0.0 ? -lambda[i] : 0.0;
    const double c = lambda[i] * r;
    loss += p * p + d * d + c * c;
    // d/dx of p^2 and c^2; both act through r.
    const double dr = 2.0 * p + 2.0 * c * lambda[i];
    gx0 += dr * g[0];
    gx1 += dr * g[1];
    if (d_lambda) d_lambda[i] = 2.0 * (g[0] * s0 + g[1] * s1) - 2.0 * d + 2.0 * c * r;
  }
  if (d_x) {
    d_x[0] = gx0;
    d_x[1] = gx1;
  }
  return loss;
}

double balance_loss(const AdmittanceMatrix& y, const std::vector<double>& p_inj, const std::vector<double>& q_inj,
                    const std::vector<double>& v_mag, const std::vector<double>& theta, double slack_p,
                    double slack_q, std::vector<double>* grad) {
  const int n = static_cast<int>(v_mag.size());
  Eigen::VectorXcd v(n);
  for (int k = 0; k < n; ++k) v[k] = std::polar(v_mag[k], theta[k]);
  const Eigen::VectorXcd cur = y * v;
  Eigen::VectorXcd mu = Eigen::VectorXcd::Zero(n);  // dL/dP_calc + j dL/dQ_calc
  double loss = 0.0;
  for (int i = 1; i < n; ++i) {
    const std::complex<double> s = v[i] * std::conj(cur[i]);
    const double dp = p_inj[i - 1] - s.real();
    const double dq = q_inj[i - 1] - s.imag();
    loss += dp * dp + dq * dq;
    mu[i] = {-2.0 * dp, -2.0 * dq};
  }
  // The slack head fits the bus-1 balance; voltages get no gradient from it.
  const std::complex<double> s1 = v[0] * std::conj(cur[0]);
  const double ep = slack_p - s1.real();
  const double eq = slack_q - s1.imag();
  loss += ep * ep + eq * eq;
  if (grad) {
    grad->assign(2 * (n - 1) + 2, 0.0);
    const Eigen::VectorXcd beta = y.transpose() * mu.cwiseProduct(v.conjugate());
    for (int k = 1; k < n; ++k) {
      const std::complex<double> g = std::conj(mu[k] * cur[k]) + beta[k];
      (*grad)[k - 1] = (g * std::polar(1.0, theta[k])).real();
      (*grad)[n - 1 + k - 1] = -(g * v[k]).imag();
    }
    (*grad)[2 * (n - 1)] = 2.0 * ep;
    (*grad)[2 * (n - 1) + 1] = 2.0 * eq;
  }
  return loss;
}

double slack_scale(const GridConfig& config, const ScalingTable& table) {
  const auto& s = table.slot("P_bus1");
  return std::max(std::abs(s.lower), std::abs(s.upper)) / config.base_power;
}

namespace {

struct GenProblem {
  const GridConfig& config;
  const ScalingTable& table;
  std::vector<int> gens;
  std::vector<DeviceFrame> frames;
  std::vector<int> slot_p, slot_q, slot_max;

  GenProblem(const GridConfig& c, const ScalingTable& t) : config(c), table(t), gens(c.generator_devices()) {
    for (int g : gens) {
      const auto& name = c.devices[g].name;
      frames.push_back(device_frame(c.devices[g]));
      slot_p.push_back(t.index("aP_" + name));
      slot_q.push_back(t.index("aQ_" + name));
      slot_max.push_back(t.index("Pmax_" + name));
    }
  }
  int n_in() const { return layout::gen_inputs_per_device * static_cast<int>(gens.size()); }
  int n_out() const { return layout::gen_outputs_per_device * static_cast<int>(gens.size()); }

  void fill(const std::vector<double>& u, double* in) const {
    for (std::size_t k = 0; k < gens.size(); ++k) {
      in[3 * k] = 2.0 * u[slot_p[k]] - 1.0;
      in[3 * k + 1] = 2.0 * u[slot_q[k]] - 1.0;
      in[3 * k + 2] = 2.0 * u[slot_max[k]] - 1.0;
    }
  }

  struct Local {
    Vec2 a;
    Polytope2D poly;
  };
  Local local(const std::vector<double>& u, std::size_t k) const {
    const auto& dev = config.devices[gens[k]];
    const Vec2 a{table.from_unit(slot_p[k], u[slot_p[k]]), table.from_unit(slot_q[k], u[slot_q[k]])};
    const double pmax = table.from_unit(slot_max[k], u[slot_max[k]]);
    return {frames[k].to_local(a), to_local(build_generator_polytope(dev, pmax), frames[k])};
  }

  double loss(const std::vector<double>& u, const double* out, double* d_out) const {
    double total = 0.0;
    for (std::size_t k = 0; k < gens.size(); ++k) {
      const auto [a, poly] = local(u, k);
      const double* o = out + layout::gen_outputs_per_device * k;
      double* d = d_out + layout::gen_outputs_per_device * k;
      const Vec2 x{a[0] + o[0], a[1] + o[1]};
      total += kkt_loss(a, poly, x, o + 2, d, d + 2);
    }
    return total;
  }
};

struct DesProblem {
  const GridConfig& config;
  const ScalingTable& table;
  DeviceFrame frame;
  int slot_p, slot_q, slot_soc;

  DesProblem(const GridConfig& c, const ScalingTable& t)
      : config(c),
        table(t),
        frame(device_frame(c.devices[c.des_device()])),
        slot_p(t.index("aP_des")),
        slot_q(t.index("aQ_des")),
        slot_soc(t.index("soc")) {}
  int n_in() const { return layout::des_inputs; }
  int n_out() const { return layout::des_outputs; }

  void fill(const std::vector<double>& u, double* in) const {
    in[0] = 2.0 * u[slot_p] - 1.0;
    in[1] = 2.0 * u[slot_q] - 1.0;
    in[2] = 2.0 * u[slot_soc] - 1.0;
  }

  std::pair<Vec2, Polytope2D> local(const std::vector<double>& u) const {
    const auto& dev = config.devices[config.des_device()];
    const Vec2 a{table.from_unit(slot_p, u[slot_p]), table.from_unit(slot_q, u[slot_q])};
    const double soc = table.from_unit(slot_soc, u[slot_soc]);
    return {frame.to_local(a), to_local(build_des_polytope(dev, soc, config.delta_t), frame)};
  }

  double loss(const std::vector<double>& u, const double* out, double* d_out) const {
    const auto [a, poly] = local(u);
    const Vec2 x{a[0] + out[0], a[1] + out[1]};
    return kkt_loss(a, poly, x, out + 2, d_out, d_out + 2);
  }
};

struct BalanceProblem {
  const GridConfig& config;
  const ScalingTable& table;
  AdmittanceMatrix y;
  int nb;
  std::vector<int> slot_p, slot_q;
  double s_scale;

  BalanceProblem(const GridConfig& c, const ScalingTable& t)
      : config(c), table(t), y(build_admittance(c)), nb(c.n_buses()), s_scale(slack_scale(c, t)) {
    for (int b = 2; b <= nb; ++b) slot_p.push_back(t.index("P_bus" + std::to_string(b)));
    for (int b = 2; b <= nb; ++b) slot_q.push_back(t.index("Q_bus" + std::to_string(b)));
  }
  int n_in() const { return 2 * (nb - 1); }
  int n_out() const { return 2 * (nb - 1) + 2; }

  void fill(const std::vector<double>& u, double* in) const {
    for (int i = 0; i < nb - 1; ++i) {
      in[i] = 2.0 * u[slot_p[i]] - 1.0;
      in[nb - 1 + i] = 2.0 * u[slot_q[i]] - 1.0;
    }
  }

  void injections(const std::vector<double>& u, std::vector<double>& p, std::vector<double>& q) const {
    p.resize(nb - 1);
    q.resize(nb - 1);
    for (int i = 0; i < nb - 1; ++i) {
      p[i] = table.from_unit(slot_p[i], u[slot_p[i]]) / config.base_power;
      q[i] = table.from_unit(slot_q[i], u[slot_q[i]]) / config.base_power;
    }
  }

  double loss(const std::vector<double>& u, const double* out, double* d_out) const {
    thread_local std::vector<double> p, q, vm, th, grad;
    injections(u, p, q);
    vm.assign(nb, 1.0);
    th.assign(nb, 0.0);
    for (int i = 0; i < nb - 1; ++i) {
      vm[i + 1] = 1.0 + layout::voltage_scale * out[i];
      th[i + 1] = layout::angle_scale * out[nb - 1 + i];
    }
    const double sp = s_scale * out[2 * (nb - 1)];
    const double sq = s_scale * out[2 * (nb - 1) + 1];
    const double l = balance_loss(y, p, q, vm, th, sp, sq, &grad);
    for (int i = 0; i < nb - 1; ++i) {
      d_out[i] = layout::voltage_scale * grad[i];
      d_out[nb - 1 + i] = layout::angle_scale * grad[nb - 1 + i];
    }
    d_out[2 * (nb - 1)] = s_scale * grad[2 * (nb - 1)];
    d_out[2 * (nb - 1) + 1] = s_scale * grad[2 * (nb - 1) + 1];
    return l;
  }
};

template <class Problem>
nn::Mlp<double> train_loop(const Problem& problem, const ScalingTable& table, const TrainOptions& opt,
                           TrainReport* report, const char* what) {
  std::vector<int> sizes{problem.n_in()};
  sizes.insert(sizes.end(), opt.hidden.begin(), opt.hidden.end());
  sizes.push_back(problem.n_out());
  nn::Mlp<double> net(sizes, opt.activation);
  std::mt19937_64 rng(opt.seed);
  net.init_glorot(rng);
  // Start close to the identity/flat answer: shrink the output layer.
  {
    auto w = net.weight(net.n_layers() - 1);
    w *= 0.1;
  }
  nn::AdamW adam(net.n_params(), opt.adam);
  nn::EarlyStop stop(opt.patience);
  nn::SobolSampler sobol(table.size());
  sobol.skip(1);  // the origin is a corner, not a useful first sample

  const int batch = opt.batch;
  Matrix x(problem.n_in(), batch);
  Matrix d_out(problem.n_out(), batch);
  std::vector<std::vector<double>> points(batch);
  nn::ParamVector<double> grad(net.n_params());
  typename nn::Mlp<double>::Tape tape;
  const auto t0 = std::chrono::steady_clock::now();

  double ema = std::numeric_limits<double>::quiet_NaN();
  double batch_loss = 0.0;
  std::int64_t step = 0;
  bool stopped = false;
  while (step < opt.max_steps) {
    for (int b = 0; b < batch; ++b) {
      points[b] = sobol.next();
      problem.fill(points[b], x.col(b).data());
    }
    const Matrix out = net.forward(x, tape);
    batch_loss = 0.0;
    for (int b = 0; b < batch; ++b) batch_loss += problem.loss(points[b], out.col(b).data(), d_out.col(b).data());
    batch_loss /= batch;
    if (!std::isfinite(batch_loss)) {
      std::ostringstream msg;
      msg << what << ": loss became non-finite at step " << step << " (last EMA " << ema << ")";
      throw std::runtime_error(msg.str());
    }
    d_out /= static_cast<double>(batch);
    std::fill(grad.begin(), grad.end(), 0.0);
    net.backward(tape, d_out, grad);
    adam.step(net.params(), grad);
    ++step;

    ema = std::isnan(ema) ? batch_loss : opt.monitor_smoothing * ema + (1.0 - opt.monitor_smoothing) * batch_loss;
    if (opt.on_log && opt.log_every > 0 && step % opt.log_every == 0) opt.on_log(step, ema);
    if (stop.update(ema)) {
      stopped = true;
      break;
    }
    if (opt.max_seconds > 0.0 && (step & 255) == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (secs > opt.max_seconds) break;
    }
  }
  if (report) {
    report->steps = step;
    report->best_loss = stop.best();
    report->final_loss = ema;
    report->early_stopped = stopped;
    report->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return net;
}

}  // namespace

nn::Mlp<double> train_gen_net(const GridConfig& config, const ScalingTable& table, const TrainOptions& options,
                              TrainReport* report) {
  return train_loop(GenProblem(config, table), table, options, report, "train_gen_net");
}

nn::Mlp<double> train_des_net(const GridConfig& config, const ScalingTable& table, const TrainOptions& options,
                              TrainReport* report) {
  return train_loop(DesProblem(config, table), table, options, report, "train_des_net");
}

nn::Mlp<double> train_balance_net(const GridConfig& config, const ScalingTable& table, const TrainOptions& options,
                                  TrainReport* report) {
  return train_loop(BalanceProblem(config, table), table, options, report, "train_balance_net");
}

std::vector<double> gen_net_input(const GridConfig& config, const ScalingTable& table,
                                  const std::vector<double>& unit_point) {
  GenProblem prob(config, table);
  std::vector<double> in(prob.n_in());
  prob.fill(unit_point, in.data());
  return in;
}

ProjectionQuality evaluate_gen_net(const nn::Mlp<double>& net, const GridConfig& config, const ScalingTable& table,
                                   int n, std::uint64_t offset) {
  GenProblem prob(config, table);
  nn::SobolSampler sobol(table.size());
  sobol.skip(offset);
  ProjectionQuality q;
  Matrix x(prob.n_in(), 1);
  for (int s = 0; s < n; ++s) {
    const auto u = sobol.next();
    prob.fill(u, x.data());
    const Matrix out = net.forward(x);
    for (std::size_t k = 0; k < prob.gens.size(); ++k) {
      const auto [a, poly] = prob.local(u, k);
      const auto exact = project_exact(a, poly);
      const double* o = out.data() + layout::gen_outputs_per_device * k;
      const double dist = std::hypot(a[0] + o[0] - exact.point[0], a[1] + o[1] - exact.point[1]);
      q.mean_distance += dist;
      q.max_distance = std::max(q.max_distance, dist);
      ++q.samples;
    }
  }
  if (q.samples) q.mean_distance /= q.samples;
  return q;
}

ProjectionQuality evaluate_des_net(const nn::Mlp<double>& net, const GridConfig& config, const ScalingTable& table,
                                   int n, std::uint64_t offset) {
  DesProblem prob(config, table);
  nn::SobolSampler sobol(table.size());
  sobol.skip(offset);
  ProjectionQuality q;
  Matrix x(prob.n_in(), 1);
  for (int s = 0; s < n; ++s) {
    const auto u = sobol.next();
    prob.fill(u, x.data());
    const Matrix out = net.forward(x);
    const auto [a, poly] = prob.local(u);
    const auto exact = project_exact(a, poly);
    const double dist = std::hypot(a[0] + out(0, 0) - exact.point[0], a[1] + out(1, 0) - exact.point[1]);
    q.mean_distance += dist;
    q.max_distance = std::max(q.max_distance, dist);
    ++q.samples;
  }
  if (q.samples) q.mean_distance /= q.samples;
  return q;
}

BalanceQuality evaluate_balance_net(const nn::Mlp<double>& net, const GridConfig& config, const ScalingTable& table,
                                    int n, std::uint64_t offset) {
  BalanceProblem prob(config, table);
  nn::SobolSampler sobol(table.size());
  sobol.skip(offset);
  BalanceQuality q;
  const int nb = prob.nb;
  Matrix x(prob.n_in(), 1);
  std::vector<double> p, qi, vm(nb, 1.0), th(nb, 0.0);
  for (int s = 0; s < n; ++s) {
    const auto u = sobol.next();
    prob.fill(u, x.data());
    const Matrix out = net.forward(x);
    prob.injections(u, p, qi);
    for (int i = 0; i < nb - 1; ++i) {
      vm[i + 1] = 1.0 + layout::voltage_scale * out(i, 0);
      th[i + 1] = layout::angle_scale * out(nb - 1 + i, 0);
    }
    ++q.samples;
    const auto sol = pf::solve(p, qi, prob.y);
    if (!sol.converged) continue;
    ++q.solvable;
    double v_err = 0.0, a_err = 0.0;
    for (int i = 1; i < nb; ++i) {
      v_err += std::abs(vm[i] - sol.v_mag[i]);
      a_err += std::abs(th[i] - sol.theta[i]);
    }
    q.voltage_mae += v_err / (nb - 1);
    q.angle_mae += a_err / (nb - 1);
    q.mean_max_residual += pf::residuals(vm, th, p, qi, prob.y).cwiseAbs().maxCoeff();
  }
  if (q.solvable) {
    q.voltage_mae /= q.solvable;
    q.angle_mae /= q.solvable;
    q.mean_max_residual /= q.solvable;
  }
  return q;
}

}  // namespace anm::surrogate
