// Acceptance run: one PASS/FAIL line per criterion, details in acceptance.json.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "anm/baselines/baselines.hpp"
#include "anm/env.hpp"
#include "anm/power_flow.hpp"
#include "anm/projection.hpp"
#include "anm/rl/ppo.hpp"
#include "anm/rl/sweep.hpp"
#include "anm/rl/vec_env.hpp"
#include "anm/surrogate/benchmark.hpp"
#include "anm/surrogate/bundle.hpp"
#include "anm/surrogate/cascade.hpp"
#include "projection_oracle.hpp"

using namespace anm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string summary;
  json detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Random-agent trajectory on the reference env; failures restart the episode.
void random_transitions(const GridConfig& config, const DailyProfiles& profiles, int n, std::uint64_t seed,
                        std::vector<State>& states, std::vector<Action>& actions) {
  Anm6Env env(config, profiles);
  std::mt19937_64 rng(seed);
  auto s = env.reset(seed);
  for (int t = 0; t < n; ++t) {
    const auto a = random_action(config, rng);
    states.push_back(s);
    actions.push_back(a);
    const auto out = env.step(a);
    s = (out.done || t % 288 == 287) ? env.reset() : out.next_state;
  }
}

Verdict oracle_substitution(const GridConfig& config, const DailyProfiles& profiles) {
  const auto cascade = surrogate::Cascade::exact(config, profiles);
  const ReferenceModel ref(config, profiles);
  std::vector<State> states;
  std::vector<Action> actions;
  random_transitions(config, profiles, 1000, 101, states, actions);
  const auto got = cascade.step_batch(states, actions);
  double dev = 0.0;
  int done_mismatch = 0, terminals = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto want = ref.step(states[i], actions[i]);
    done_mismatch += got[i].done != want.done;
    terminals += want.done;
    const auto a = got[i].next_state.encode(), b = want.next_state.encode();
    for (std::size_t k = 0; k < a.size(); ++k) dev = std::max(dev, std::abs(a[k] - b[k]));
    dev = std::max(dev, std::abs(got[i].reward - want.reward));
  }
  Verdict v;
  v.pass = dev <= 1e-8 && done_mismatch == 0;
  v.summary = "max |state/reward deviation| " + fmt(dev) + " over 1000 transitions (" + std::to_string(terminals) +
              " terminal), done mismatches " + std::to_string(done_mismatch);
  v.detail = {{"max_deviation", dev}, {"done_mismatch", done_mismatch}, {"terminal", terminals}};
  return v;
}

Verdict projection_oracle(const GridConfig& config) {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.5, 5.0), ang(0.0, 2 * M_PI), m(0.05, 2.0);
  const auto gens = config.generator_devices();
  const auto& des = config.devices[config.des_device()];
  double worst_dist = 0.0, worst_kkt = 0.0;
  for (int k = 0; k < 500; ++k) {
    Polytope2D poly;
    Vec2 s;
    if (k % 2 == 0) {
      // device polytopes at random capacity or state of charge
      if (k % 4 == 0) {
        const auto& g = config.devices[gens[(k / 4) % gens.size()]];
        poly = build_generator_polytope(g, g.p_max * 0.5 * (u(rng) + 1.0));
        s = {g.p_max * (0.5 + u(rng)), 1.5 * g.q_max * u(rng)};
      } else {
        poly = build_des_polytope(des, des.soc_min + (des.soc_max - des.soc_min) * 0.5 * (u(rng) + 1.0),
                                  config.delta_t);
        s = {1.5 * des.p_max * u(rng), 1.5 * des.q_max * u(rng)};
      }
    } else {
      const Vec2 c{3 * u(rng), 3 * u(rng)};
      const double hw = w(rng), hh = w(rng);
      poly.normals = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
      poly.offsets = {-(c[0] - hw), c[0] + hw, -(c[1] - hh), c[1] + hh};
      const int extra = 1 + static_cast<int>(rng() % 4);
      for (int e = 0; e < extra; ++e) {
        const double a = ang(rng);
        const Vec2 n{std::cos(a), std::sin(a)};
        poly.normals.push_back(n);
        poly.offsets.push_back(n[0] * c[0] + n[1] * c[1] + m(rng));
      }
      s = {c[0] + 8 * u(rng), c[1] + 8 * u(rng)};
    }
    const auto x = project_exact(s, poly);
    const auto ref = test::angular_minimizer(s, poly);
    worst_dist = std::max(worst_dist, std::hypot(x.point[0] - ref[0], x.point[1] - ref[1]));
    worst_kkt = std::max(worst_kkt, kkt_residuals(s, poly, x.point, x.duals).max());
  }
  Verdict v;
  v.pass = worst_dist <= 1e-3 && worst_kkt <= 1e-9;
  v.summary = "max distance to brute force " + fmt(worst_dist) + ", max KKT residual " + fmt(worst_kkt) +
              " over 500 pairs";
  v.detail = {{"max_distance", worst_dist}, {"max_kkt", worst_kkt}};
  return v;
}

Verdict power_flow(const GridConfig& config, const DailyProfiles& profiles) {
  const auto y = build_admittance(config);
  const int nb = config.n_buses();
  const int m = nb - 1;
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> dv(0.9, 1.1), dth(-0.3, 0.3);
  auto p_calc = [&](const std::vector<double>& v, const std::vector<double>& th) {
    const std::vector<double> zero(m, 0.0);
    return Eigen::VectorXd(-pf::residuals(v, th, zero, zero, y));
  };
  double jac_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(nb, 1.0), th(nb, 0.0);
    for (int i = 1; i < nb; ++i) {
      v[i] = dv(rng);
      th[i] = dth(rng);
    }
    const Eigen::MatrixXd j = pf::power_jacobian(v, th, y);
    const double h = 1e-6;
    for (int k = 0; k < 2 * m; ++k) {
      auto vp = v, vm = v, tp = th, tm = th;
      if (k < m) {
        tp[k + 1] += h;
        tm[k + 1] -= h;
      } else {
        vp[k - m + 1] += h;
        vm[k - m + 1] -= h;
      }
      const Eigen::VectorXd fd = (p_calc(vp, tp) - p_calc(vm, tm)) / (2 * h);
      for (int r = 0; r < 2 * m; ++r)
        jac_err = std::max(jac_err, std::abs(fd[r] - j(r, k)) / std::max(1.0, std::abs(j(r, k))));
    }
  }

  // Operating points the environment actually produces.
  std::vector<State> states;
  std::vector<Action> actions;
  random_transitions(config, profiles, 1000, 304, states, actions);
  int solved = 0;
  double worst_res = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto next = advance_exogenous(config, profiles, states[i].aux);
    const auto dec = decide_exact(config, states[i], actions[i], next);
    const auto inj = injections_pu(config, device_powers(config, dec, next));
    const auto sol = pf::solve(inj.p, inj.q, y);
    if (!sol.converged) continue;
    ++solved;
    worst_res = std::max(worst_res, pf::residuals(sol.v_mag, sol.theta, inj.p, inj.q, y).cwiseAbs().maxCoeff());
  }

  const std::vector<double> zero(m, 0.0);
  const auto flat = pf::solve(zero, zero, y);
  bool flat_exact = flat.converged;
  for (int i = 0; i < nb; ++i) flat_exact = flat_exact && flat.v_mag[i] == 1.0 && flat.theta[i] == 0.0;

  Verdict v;
  v.pass = jac_err <= 1e-6 && worst_res <= 1e-8 && flat_exact && solved > 0;
  v.summary = "Jacobian vs FD rel err " + fmt(jac_err) + ", max residual " + fmt(worst_res) + " on " +
              std::to_string(solved) + " solved cases, flat case " + (flat_exact ? "exact" : "NOT exact");
  v.detail = {{"jacobian_rel_err", jac_err}, {"max_residual", worst_res}, {"solved", solved}, {"flat_exact", flat_exact}};
  return v;
}

Verdict speedup(const surrogate::Cascade& cascade, const GridConfig& config, const DailyProfiles& profiles) {
  const ReferenceModel ref(config, profiles);
  std::vector<double> ratios;
  json runs = json::array();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto r = surrogate::benchmark_inference(cascade, ref, 1000, 100, seed);
    ratios.push_back(r.ratio);
    runs.push_back(r.to_json());
  }
  auto sorted = ratios;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[1];
  const bool stable = sorted.back() <= 2.0 * sorted.front();
  Verdict v;
  v.pass = median >= 5.0 && stable;
  v.summary = "median speedup " + fmt(median, 3) + "x over 3 runs of 1000 transitions, batch 100 (runs " +
              fmt(ratios[0], 3) + ", " + fmt(ratios[1], 3) + ", " + fmt(ratios[2], 3) + ")";
  v.detail = {{"median_ratio", median}, {"runs", runs}, {"stable", stable}};
  return v;
}

Verdict fidelity(const surrogate::Cascade& cascade, const GridConfig& config, const DailyProfiles& profiles) {
  namespace bl = baselines;
  const auto policy = bl::random_policy(config);
  const auto pinn = bl::evaluate_surrogate(cascade, config, profiles, policy, 10, 99);
  json detail = {{"pinn", pinn.to_json()}};
  bool pass = true;
  std::string worst;
  double closest = INFINITY;
  for (auto kind : {bl::DatasetKind::generative, bl::DatasetKind::agent_based}) {
    const auto data = kind == bl::DatasetKind::generative ? bl::build_generative_dataset(config, profiles, 10000, 5)
                                                          : bl::build_agent_dataset(config, profiles, 10000, 5);
    for (auto bk : {bl::BaselineKind::linear, bl::BaselineKind::mlp}) {
      const auto model = bl::fit_baseline(bk, data, config, profiles);
      const auto m = bl::evaluate_surrogate(*model, config, profiles, policy, 10, 99);
      const std::string name = bl::to_string(bk) + "/" + bl::to_string(kind);
      detail[name] = m.to_json();
      pass = pass && pinn.mae_mean < m.mae_mean;
      if (m.mae_mean < closest) {
        closest = m.mae_mean;
        worst = name;
      }
    }
  }
  Verdict v;
  v.pass = pass;
  v.summary = "teacher-forced MAE pinn " + fmt(pinn.mae_mean) + " vs best baseline " + worst + " " + fmt(closest) +
              " (scaled pinn " + fmt(pinn.mae_scaled_mean) + ")";
  v.detail = detail;
  return v;
}

struct PpoOutcome {
  double final_score = 0.0;
  double total_seconds = 0.0;
  rl::TrainLog log;
};

PpoOutcome run_ppo(std::shared_ptr<const TransitionModel> model, const GridConfig& config,
                   const DailyProfiles& profiles, const rl::PpoConfig& pc, int episode_length) {
  rl::VecEnv venv(std::move(model), config, pc.n_envs, pc.seed, episode_length);
  Anm6Env eval_env(config, profiles);
  rl::PpoTrainer trainer(config, pc);
  PpoOutcome out;
  out.log = trainer.train(venv, eval_env);
  out.total_seconds = out.log.total_seconds;
  out.final_score = rl::evaluate_policy(trainer.best_policy(), eval_env, 5, 777, episode_length);
  return out;
}

Verdict rl_end_to_end(std::shared_ptr<const TransitionModel> pinn, const GridConfig& config,
                      const DailyProfiles& profiles, const fs::path& out) {
  const int episode_length = 288;
  rl::PpoConfig pc;
  pc.n_envs = 64;
  pc.buffer_size = 32;
  pc.max_env_steps = 400'000;
  pc.eval_episode_length = episode_length;
  const auto reference = std::make_shared<ReferenceModel>(config, profiles);

  double pinn_score = 0.0, ref_score = 0.0, pinn_time = 0.0, ref_time = 0.0;
  json runs = json::array();
  const std::vector<std::uint64_t> seeds = {0, 1};
  for (auto seed : seeds) {
    pc.seed = seed;
    for (int b = 0; b < 2; ++b) {
      const auto r = run_ppo(b == 0 ? pinn : reference, config, profiles, pc, episode_length);
      const std::string name = b == 0 ? "pinn" : "reference";
      r.log.write_csv(out / ("ppo_" + name + "_seed" + std::to_string(seed) + ".csv"));
      runs.push_back({{"backing", name},
                      {"seed", seed},
                      {"final_score", r.final_score},
                      {"best_eval", r.log.best_score},
                      {"total_seconds", r.total_seconds},
                      {"train_seconds", r.log.train_seconds},
                      {"updates", r.log.updates.size()},
                      {"early_stopped", r.log.early_stopped}});
      std::cerr << "  ppo " << name << " seed " << seed << ": final " << r.final_score << ", " << r.total_seconds
                << " s\n";
      (b == 0 ? pinn_score : ref_score) += r.final_score / seeds.size();
      (b == 0 ? pinn_time : ref_time) += r.total_seconds;
    }
  }
  Anm6Env env(config, profiles);
  const double random = rl::evaluate_random(env, 5, 777, episode_length);
  const bool better_than_random = pinn_score > random;
  const bool within = pinn_score >= ref_score - 0.1 * std::abs(ref_score);
  const bool faster = pinn_time < ref_time;
  Verdict v;
  v.pass = better_than_random && within && faster;
  v.summary = "final score pinn " + fmt(pinn_score) + " vs reference " + fmt(ref_score) + " vs random " +
              fmt(random) + "; wall-clock pinn " + fmt(pinn_time, 3) + " s vs reference " + fmt(ref_time, 3) + " s";
  v.detail = {{"runs", runs},
              {"pinn_score", pinn_score},
              {"reference_score", ref_score},
              {"random_score", random},
              {"pinn_seconds", pinn_time},
              {"reference_seconds", ref_time},
              {"better_than_random", better_than_random},
              {"within_10_percent", within},
              {"faster", faster}};
  return v;
}

Verdict structural_sweep(std::shared_ptr<const TransitionModel> pinn, const GridConfig& config,
                         const DailyProfiles& profiles, const fs::path& out) {
  rl::SweepOptions opt;
  opt.n_envs = {1, 10, 100};
  opt.buffer_sizes = {30, 300, 3000};
  opt.ppo.max_env_steps = 2'000'000;
  opt.ppo.patience_episodes = 20;
  opt.episode_length = 288;
  opt.out_dir = out / "sweep";
  const auto res = rl::run_sweep(std::move(pinn), config, profiles, opt, [](const rl::SweepCell& c) {
    std::cerr << "  sweep " << c.n_envs << "x" << c.buffer_size << ": reward " << c.mean_reward << ", "
              << c.total_seconds << " s\n";
  });
  res.write_csv(out / "sweep.csv");
  Verdict v;
  v.pass = res.corr_buffer_reward < 0.0 && res.corr_buffer_time > 0.0 && res.corr_envs_time > 0.0;
  v.summary = "corr(buffer, reward) " + fmt(res.corr_buffer_reward, 3) + ", corr(buffer, time) " +
              fmt(res.corr_buffer_time, 3) + ", corr(n_envs, time) " + fmt(res.corr_envs_time, 3);
  v.detail = res.to_json();
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string out_dir = "acceptance_out";
  std::string bundle_dir;
  std::vector<int> only;
  app.add_option("--out", out_dir, "artifact directory")->capture_default_str();
  app.add_option("--bundle", bundle_dir, "reuse a trained bundle instead of training one (skips 4, 5, 7)");
  app.add_option("--only", only, "criteria to run");
  CLI11_PARSE(app, argc, argv);

  const fs::path out(out_dir);
  fs::create_directories(out);
  const std::set<int> wanted(only.begin(), only.end());
  auto want = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };

  const auto config = load_config(default_config_path());
  const auto profiles = load_profiles(default_profiles_path(), config);

  json report = json::object();
  int failures = 0;
  auto emit = [&](int id, const std::string& name, const Verdict& v, double secs) {
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << v.summary << " (" << fmt(secs, 3)
              << " s)" << std::endl;
    report[std::to_string(id)] = {{"name", name}, {"pass", v.pass}, {"summary", v.summary}, {"detail", v.detail}};
    failures += !v.pass;
  };
  auto timed = [&](int id, const std::string& name, auto&& f) {
    if (!want(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v.pass = false;
      v.summary = std::string("threw: ") + e.what();
    }
    emit(id, name, v, seconds_since(t0));
  };

  timed(1, "oracle-substitution equivalence", [&] { return oracle_substitution(config, profiles); });
  timed(2, "projection oracle", [&] { return projection_oracle(config); });
  timed(3, "power-flow correctness", [&] { return power_flow(config, profiles); });

  // 4, 5 and 7 share one training run; its bundle backs 6, 8, 9 and 10.
  std::shared_ptr<surrogate::Cascade> cascade;
  const bool need_bundle = want(4) || want(5) || want(6) || want(7) || want(8) || want(9) || want(10);
  if (need_bundle) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (!bundle_dir.empty()) {
        cascade = surrogate::SurrogateBundle::load(bundle_dir, config).cascade(config, profiles);
      } else {
        surrogate::BundleOptions bo;
        bo.on_progress = [](const std::string& msg) { std::cerr << "  " << msg << "\n"; };
        surrogate::BundleReport br;
        const auto bundle = surrogate::train_bundle(config, profiles, bo, &br);
        bundle.save(out / "bundle");
        cascade = bundle.cascade(config, profiles);
        const double secs = seconds_since(t0);
        if (want(4)) {
          Verdict v;
          const double g = br.gen_quality.mean_distance, d = br.des_quality.mean_distance;
          v.pass = g <= 0.05 && d <= 0.05;
          v.summary = "mean distance to exact projection gen " + fmt(g) + ", des " + fmt(d) + " on " +
                      std::to_string(br.gen_quality.samples) + " held-out Sobol points (" +
                      std::to_string(br.gen.steps) + " / " + std::to_string(br.des.steps) + " steps)";
          v.detail = {{"gen", g}, {"des", d}, {"gen_steps", br.gen.steps}, {"des_steps", br.des.steps},
                      {"gen_early_stopped", br.gen.early_stopped}, {"des_early_stopped", br.des.early_stopped}};
          emit(4, "KKT-NN quality", v, secs);
        }
        if (want(5)) {
          Verdict v;
          const auto& q = br.balance_quality;
          v.pass = q.voltage_mae <= 0.01 && q.solvable > 0;
          v.summary = "voltage MAE " + fmt(q.voltage_mae) + " p.u. on " + std::to_string(q.solvable) + " of " +
                      std::to_string(q.samples) + " held-out injections (solvable), no environment samples";
          v.detail = {{"voltage_mae", q.voltage_mae}, {"angle_mae", q.angle_mae}, {"solvable", q.solvable},
                      {"steps", br.balance.steps}};
          emit(5, "power-balance PINN quality", v, secs);
        }
        if (want(7)) {
          Verdict v;
          const auto& t = br.terminal;
          v.pass = t.heldout_accuracy >= 0.95;
          v.summary = "held-out accuracy " + fmt(t.heldout_accuracy) + " on " + std::to_string(t.heldout_samples) +
                      " transitions (terminal rate " + fmt(t.positive_rate, 3) + ")";
          v.detail = {{"heldout_accuracy", t.heldout_accuracy}, {"train_accuracy", t.train_accuracy},
                      {"positive_rate", t.positive_rate}};
          emit(7, "terminal classifier", v, secs);
        }
      }
    } catch (const std::exception& e) {
      Verdict v;
      v.summary = std::string("bundle training threw: ") + e.what();
      for (int id : {4, 5, 7})
        if (want(id)) emit(id, "surrogate training", v, seconds_since(t0));
    }
  }

  auto with_cascade = [&](auto&& f) {
    return [&, f]() -> Verdict {
      if (!cascade) return {false, "no trained surrogate available", {}};
      return f();
    };
  };
  timed(6, "inference speedup", with_cascade([&] { return speedup(*cascade, config, profiles); }));
  timed(8, "single-step fidelity ranking", with_cascade([&] { return fidelity(*cascade, config, profiles); }));
  timed(9, "RL end-to-end", with_cascade([&] { return rl_end_to_end(cascade, config, profiles, out); }));
  timed(10, "structural-parameter correlation",
        with_cascade([&] { return structural_sweep(cascade, config, profiles, out); }));
  timed(11, "buffer arithmetic", [&] {
    const auto cap = rl::buffer_capacity(100, 30);
    return Verdict{cap == 3000, "buffer_capacity(100, 30) = " + std::to_string(cap), {{"capacity", cap}}};
  });

  std::ofstream(out / "acceptance.json") << report.dump(2) << "\n";
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
