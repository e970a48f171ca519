// anm: experiment driver for the ANM6 surrogate and PPO runs.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "anm/baselines/baselines.hpp"
#include "anm/env.hpp"
#include "anm/rl/ppo.hpp"
#include "anm/rl/sweep.hpp"
#include "anm/surrogate/benchmark.hpp"
#include "anm/surrogate/bundle.hpp"
#include "anm/transition_model.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace anm;

namespace {

struct Common {
  std::string config = default_config_path().string();
  std::string profiles = default_profiles_path().string();
  std::uint64_t seed = 0;
  std::string out = "runs/out";
};

struct Stage : std::runtime_error {
  Stage(const std::string& stage, const std::string& what) : std::runtime_error(stage + ": " + what) {}
};

// Runs f, tagging any exception with the stage name.
template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Stage&) {
    throw;
  } catch (const std::exception& e) {
    throw Stage(name, e.what());
  }
}

std::uint64_t fnv1a_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return 0;
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string git_head() {
  std::string out;
  if (FILE* p = popen("git rev-parse HEAD 2>/dev/null", "r")) {
    char buf[128];
    while (fgets(buf, sizeof buf, p)) out += buf;
    pclose(p);
  }
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return json::parse(in);
}

struct Loaded {
  GridConfig config;
  DailyProfiles profiles;
};

Loaded load_inputs(const Common& c) {
  Loaded l;
  l.config = stage("load config", [&] { return load_config(c.config); });
  l.profiles = stage("load profiles", [&] { return load_profiles(c.profiles, l.config); });
  return l;
}

// Everything needed to replay the run: resolved arguments and input hashes.
void write_manifest(const Common& c, const std::string& command, const json& args, const GridConfig& config) {
  fs::create_directories(c.out);
  json m = {{"command", command},
            {"args", args},
            {"seed", c.seed},
            {"config", {{"path", fs::absolute(c.config).string()}, {"content_hash", hex(config.content_hash())},
                        {"file_hash", hex(fnv1a_file(c.config))}}},
            {"profiles", {{"path", fs::absolute(c.profiles).string()}, {"file_hash", hex(fnv1a_file(c.profiles))}}},
            {"git_commit", git_head()},
            {"created", utc_now()}};
  write_json(fs::path(c.out) / "manifest.json", m);
}

std::shared_ptr<const TransitionModel> make_backing(const std::string& backing, const std::string& surrogate,
                                                    const Loaded& in) {
  if (backing == "reference") return std::make_shared<ReferenceModel>(in.config, in.profiles);
  if (surrogate.empty()) throw std::invalid_argument("--surrogate is required for backing '" + backing + "'");
  if (backing == "pinn") return surrogate::SurrogateBundle::load(surrogate, in.config).cascade(in.config, in.profiles);
  if (backing == "linear" || backing == "mlp") {
    auto m = baselines::BaselineModel::from_json(in.config, in.profiles, read_json(surrogate));
    if (baselines::to_string(m->kind()) != backing)
      throw std::invalid_argument(surrogate + " holds a " + baselines::to_string(m->kind()) + " model, not " + backing);
    return m;
  }
  throw std::invalid_argument("unknown backing '" + backing + "'");
}

baselines::DatasetKind dataset_kind(const std::string& s) {
  if (s == "generative") return baselines::DatasetKind::generative;
  if (s == "agent") return baselines::DatasetKind::agent_based;
  throw std::invalid_argument("unknown dataset kind '" + s + "' (generative or agent)");
}

baselines::TransitionDataset build_dataset(const std::string& kind, int n, const Loaded& in, std::uint64_t seed) {
  if (dataset_kind(kind) == baselines::DatasetKind::generative)
    return baselines::build_generative_dataset(in.config, in.profiles, n, seed);
  return baselines::build_agent_dataset(in.config, in.profiles, n, seed);
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "grid config JSON")->capture_default_str();
  app->add_option("--profiles", c.profiles, "daily profiles CSV")->capture_default_str();
  app->add_option("--seed", c.seed, "run seed")->capture_default_str();
  app->add_option("--out", c.out, "output directory")->capture_default_str();
}

struct PpoArgs {
  std::string backing = "reference";
  std::string surrogate;
  int n_envs = 8;
  int buffer_size = 256;
  std::int64_t steps = 200'000;
  int eval_every = 1;
  int patience = 20;
  int episode_length = 288;
  int eval_episodes = 1;
};

void add_ppo(CLI::App* app, PpoArgs& a) {
  app->add_option("--backing", a.backing, "reference, pinn, linear or mlp")
      ->check(CLI::IsMember({"reference", "pinn", "linear", "mlp"}))
      ->capture_default_str();
  app->add_option("--surrogate", a.surrogate, "bundle directory (pinn) or baseline JSON (linear, mlp)");
  app->add_option("--n-envs", a.n_envs, "parallel environments")->capture_default_str();
  app->add_option("--buffer-size", a.buffer_size, "steps per env per update")->capture_default_str();
  app->add_option("--steps", a.steps, "env step cap")->capture_default_str();
  app->add_option("--eval-every", a.eval_every, "updates between evaluations")->capture_default_str();
  app->add_option("--patience", a.patience, "training episodes without improvement before stopping")->capture_default_str();
  app->add_option("--episode-length", a.episode_length, "steps per episode")->capture_default_str();
  app->add_option("--eval-episodes", a.eval_episodes, "episodes per evaluation")->capture_default_str();
}

rl::PpoConfig ppo_config(const PpoArgs& a, std::uint64_t seed) {
  rl::PpoConfig pc;
  pc.n_envs = a.n_envs;
  pc.buffer_size = a.buffer_size;
  pc.max_env_steps = a.steps;
  pc.eval_every = a.eval_every;
  pc.patience_episodes = a.patience;
  pc.eval_episode_length = a.episode_length;
  pc.eval_episodes = a.eval_episodes;
  pc.seed = seed;
  pc.validate();
  return pc;
}

json ppo_args_json(const PpoArgs& a) {
  return {{"backing", a.backing},      {"surrogate", a.surrogate}, {"n_envs", a.n_envs},
          {"buffer_size", a.buffer_size}, {"steps", a.steps},       {"eval_every", a.eval_every},
          {"patience", a.patience},    {"episode_length", a.episode_length}, {"eval_episodes", a.eval_episodes}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ANM6 surrogate and PPO experiments"};
  app.require_subcommand(1);
  Common common;

  // train-surrogate
  auto* ts = app.add_subcommand("train-surrogate", "train the PINN bundle or a regression baseline");
  add_common(ts, common);
  std::string ts_backing = "pinn", ts_dataset = "agent";
  int ts_samples = 10000;
  std::int64_t ts_gen_steps = 0, ts_des_steps = 0, ts_bal_steps = 0;
  ts->add_option("--backing", ts_backing, "pinn, linear or mlp")
      ->check(CLI::IsMember({"pinn", "linear", "mlp"}))
      ->capture_default_str();
  ts->add_option("--dataset", ts_dataset, "baselines: generative or agent")->capture_default_str();
  ts->add_option("--samples", ts_samples, "baselines: dataset size")->capture_default_str();
  ts->add_option("--gen-steps", ts_gen_steps, "pinn: generator net step cap (0 keeps the default)");
  ts->add_option("--des-steps", ts_des_steps, "pinn: DES net step cap (0 keeps the default)");
  ts->add_option("--balance-steps", ts_bal_steps, "pinn: balance net step cap (0 keeps the default)");

  // build-dataset
  auto* bd = app.add_subcommand("build-dataset", "collect reference transitions for the baselines");
  add_common(bd, common);
  std::string bd_kind = "generative";
  int bd_samples = 10000;
  bd->add_option("--dataset", bd_kind, "generative or agent")->capture_default_str();
  bd->add_option("--samples", bd_samples, "number of transitions")->capture_default_str();

  // train-policy
  auto* tp = app.add_subcommand("train-policy", "PPO on the chosen backing, evaluated on the reference env");
  add_common(tp, common);
  PpoArgs tp_args;
  add_ppo(tp, tp_args);

  // eval
  auto* ev = app.add_subcommand("eval", "score a policy on the reference env and/or a surrogate's fidelity");
  add_common(ev, common);
  std::string ev_policy, ev_backing, ev_surrogate;
  int ev_episodes = 5, ev_length = 288;
  ev->add_option("--policy", ev_policy, "policy JSON (omit for the random agent)");
  ev->add_option("--backing", ev_backing, "surrogate to score: pinn, linear or mlp")
      ->check(CLI::IsMember({"pinn", "linear", "mlp"}));
  ev->add_option("--surrogate", ev_surrogate, "bundle directory or baseline JSON");
  ev->add_option("--episodes", ev_episodes, "evaluation episodes")->capture_default_str();
  ev->add_option("--episode-length", ev_length, "steps per episode")->capture_default_str();

  // bench
  auto* be = app.add_subcommand("bench", "median transition time, surrogate vs reference env");
  add_common(be, common);
  std::string be_surrogate;
  int be_n = 1000, be_batch = 100;
  be->add_option("--surrogate", be_surrogate, "bundle directory")->required();
  be->add_option("--n", be_n, "transitions")->capture_default_str();
  be->add_option("--batch", be_batch, "surrogate batch size")->capture_default_str();

  // sweep
  auto* sw = app.add_subcommand("sweep", "PPO over an n_envs x buffer_size grid");
  add_common(sw, common);
  PpoArgs sw_args;
  add_ppo(sw, sw_args);
  std::vector<int> sw_envs = {1, 10, 100}, sw_bufs = {30, 300, 3000};
  bool sw_pairs = false;
  sw->add_option("--grid-envs", sw_envs, "n_envs values")->capture_default_str();
  sw->add_option("--grid-buffers", sw_bufs, "buffer_size values")->capture_default_str();
  sw->add_flag("--pairs", sw_pairs, "zip the two lists into cells instead of crossing them");
  int sw_last = 10;
  sw->add_option("--last-evals", sw_last, "evaluations averaged per cell")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (ts->parsed()) {
      const auto in = load_inputs(common);
      json args = {{"backing", ts_backing}, {"dataset", ts_dataset}, {"samples", ts_samples},
                   {"gen_steps", ts_gen_steps}, {"des_steps", ts_des_steps}, {"balance_steps", ts_bal_steps}};
      write_manifest(common, "train-surrogate", args, in.config);
      if (ts_backing == "pinn") {
        surrogate::BundleOptions opt;
        opt.seed = common.seed;
        opt.gen.seed += common.seed;
        opt.des.seed += common.seed;
        opt.balance.seed += common.seed;
        if (ts_gen_steps > 0) opt.gen.max_steps = ts_gen_steps;
        if (ts_des_steps > 0) opt.des.max_steps = ts_des_steps;
        if (ts_bal_steps > 0) opt.balance.max_steps = ts_bal_steps;
        opt.on_progress = [](const std::string& s) { std::cerr << s << '\n'; };
        surrogate::BundleReport rep;
        const auto bundle = stage("train bundle", [&] { return surrogate::train_bundle(in.config, in.profiles, opt, &rep); });
        stage("save bundle", [&] { bundle.save(fs::path(common.out) / "bundle"); return 0; });
        json r = {{"gen", {{"steps", rep.gen.steps}, {"seconds", rep.gen.seconds},
                           {"mean_distance", rep.gen_quality.mean_distance}}},
                  {"des", {{"steps", rep.des.steps}, {"seconds", rep.des.seconds},
                           {"mean_distance", rep.des_quality.mean_distance}}},
                  {"balance", {{"steps", rep.balance.steps}, {"seconds", rep.balance.seconds},
                               {"voltage_mae", rep.balance_quality.voltage_mae}}},
                  {"terminal", {{"heldout_accuracy", rep.terminal.heldout_accuracy},
                                {"train_accuracy", rep.terminal.train_accuracy},
                                {"positive_rate", rep.terminal.positive_rate}}}};
        write_json(fs::path(common.out) / "report.json", r);
        std::cout << "generator net: mean distance " << rep.gen_quality.mean_distance << "\n"
                  << "DES net: mean distance " << rep.des_quality.mean_distance << "\n"
                  << "balance net: voltage MAE " << rep.balance_quality.voltage_mae << " p.u.\n"
                  << "terminal classifier: held-out accuracy " << rep.terminal.heldout_accuracy << "\n"
                  << "bundle written to " << (fs::path(common.out) / "bundle").string() << "\n";
      } else {
        const auto data = stage("build dataset", [&] { return build_dataset(ts_dataset, ts_samples, in, common.seed); });
        baselines::BaselineOptions bo;
        bo.seed = common.seed;
        const auto model = stage("fit baseline", [&] {
          return baselines::fit_baseline(baselines::baseline_kind_from_string(ts_backing), data, in.config,
                                         in.profiles, bo);
        });
        const auto file = fs::path(common.out) / (ts_backing + ".json");
        std::ofstream(file) << model->to_json().dump();
        const auto m = stage("evaluate", [&] {
          return baselines::evaluate_surrogate(*model, in.config, in.profiles, baselines::random_policy(in.config), 5,
                                               common.seed + 1);
        });
        write_json(fs::path(common.out) / "metrics.json", m.to_json());
        std::cout << ts_backing << " on " << ts_dataset << " data (" << data.size() << " samples): teacher-forced MAE "
                  << m.mae_mean << ", R2 " << m.r2_mean << "\nmodel written to " << file.string() << "\n";
      }
    } else if (bd->parsed()) {
      const auto in = load_inputs(common);
      write_manifest(common, "build-dataset", {{"dataset", bd_kind}, {"samples", bd_samples}}, in.config);
      const auto data = stage("build dataset", [&] { return build_dataset(bd_kind, bd_samples, in, common.seed); });
      stage("save dataset", [&] { data.save(fs::path(common.out) / "dataset"); return 0; });
      std::cout << data.size() << " " << bd_kind << " transitions written to "
                << (fs::path(common.out) / "dataset").string() << ".{bin,json}\n";
    } else if (tp->parsed()) {
      const auto in = load_inputs(common);
      write_manifest(common, "train-policy", ppo_args_json(tp_args), in.config);
      const auto model = stage("load backing", [&] { return make_backing(tp_args.backing, tp_args.surrogate, in); });
      const auto pc = stage("ppo config", [&] { return ppo_config(tp_args, common.seed); });
      rl::VecEnv venv(model, in.config, pc.n_envs, common.seed, tp_args.episode_length);
      Anm6Env eval_env(in.config, in.profiles);
      rl::PpoTrainer trainer(in.config, pc);
      const fs::path out(common.out);
      std::ofstream live(out / "log.jsonl");
      rl::TrainLog log;
      log = stage("train", [&] {
        return trainer.train(venv, eval_env, [&](const rl::UpdateRecord& r) {
          live << log.record_json(r).dump() << '\n' << std::flush;
          if (r.eval_score) std::cerr << "update " << r.update << " steps " << r.env_steps << " eval " << *r.eval_score << '\n';
        });
      });
      log.write_csv(out / "log.csv");
      std::ofstream(out / "policy.json") << trainer.best_policy().to_json().dump();
      json summary = {{"backing", log.backing},        {"best_score", log.best_score},
                      {"best_update", log.best_update}, {"mean_last_10", log.mean_last_evals(10)},
                      {"train_seconds", log.train_seconds}, {"total_seconds", log.total_seconds},
                      {"updates", log.updates.size()}, {"early_stopped", log.early_stopped}};
      write_json(out / "summary.json", summary);
      std::cout << "backing " << log.backing << ": best evaluation " << log.best_score << " at update "
                << log.best_update << ", " << log.updates.size() << " updates, " << log.train_seconds
                << " s training (" << log.total_seconds << " s with evaluation)\n";
    } else if (ev->parsed()) {
      const auto in = load_inputs(common);
      write_manifest(common, "eval",
                     {{"policy", ev_policy}, {"backing", ev_backing}, {"surrogate", ev_surrogate},
                      {"episodes", ev_episodes}, {"episode_length", ev_length}},
                     in.config);
      Anm6Env env(in.config, in.profiles);
      json r;
      std::optional<rl::Policy> policy;
      if (!ev_policy.empty())
        policy = stage("load policy", [&] { return rl::Policy::from_json(in.config, read_json(ev_policy)); });
      const double score = policy ? rl::evaluate_policy(*policy, env, ev_episodes, common.seed, ev_length)
                                  : rl::evaluate_random(env, ev_episodes, common.seed, ev_length);
      r["policy"] = ev_policy.empty() ? "random" : ev_policy;
      r["score"] = score;
      std::cout << "reference-env score (" << r["policy"].get<std::string>() << ", " << ev_episodes
                << " episodes): " << score << "\n";
      if (!ev_backing.empty()) {
        const auto model = stage("load backing", [&] { return make_backing(ev_backing, ev_surrogate, in); });
        baselines::PolicyFn act = baselines::random_policy(in.config);
        if (policy) act = [&](const State& s, std::mt19937_64&) { return policy->act_deterministic(s); };
        const auto m = stage("fidelity", [&] {
          return baselines::evaluate_surrogate(*model, in.config, in.profiles, act, ev_episodes, common.seed, ev_length);
        });
        r["fidelity"] = m.to_json();
        std::cout << ev_backing << " teacher-forced MAE " << m.mae_mean << " (scaled " << m.mae_scaled_mean << "), R2 "
                  << m.r2_mean << " over " << m.samples << " steps\n";
      }
      write_json(fs::path(common.out) / "eval.json", r);
    } else if (be->parsed()) {
      const auto in = load_inputs(common);
      write_manifest(common, "bench", {{"surrogate", be_surrogate}, {"n", be_n}, {"batch", be_batch}}, in.config);
      const auto sur = stage("load bundle", [&] { return make_backing("pinn", be_surrogate, in); });
      ReferenceModel ref(in.config, in.profiles);
      const auto t = stage("benchmark", [&] { return surrogate::benchmark_inference(*sur, ref, be_n, be_batch, common.seed); });
      write_json(fs::path(common.out) / "bench.json", t.to_json());
      std::cout << t.to_json().dump() << "\n";
    } else if (sw->parsed()) {
      const auto in = load_inputs(common);
      json args = ppo_args_json(sw_args);
      args["grid_envs"] = sw_envs;
      args["grid_buffers"] = sw_bufs;
      args["pairs"] = sw_pairs;
      args["last_evals"] = sw_last;
      write_manifest(common, "sweep", args, in.config);
      const auto model = stage("load backing", [&] { return make_backing(sw_args.backing, sw_args.surrogate, in); });
      rl::SweepOptions so;
      so.ppo = stage("ppo config", [&] { return ppo_config(sw_args, common.seed); });
      so.episode_length = sw_args.episode_length;
      so.last_evals = sw_last;
      so.out_dir = fs::path(common.out);
      auto report = [](const rl::SweepCell& c) {
        std::cerr << "cell " << c.n_envs << "x" << c.buffer_size << ": mean reward " << c.mean_reward << ", "
                  << c.total_seconds << " s\n";
      };
      rl::SweepResult res;
      if (sw_pairs) {
        if (sw_envs.size() != sw_bufs.size()) throw Stage("sweep", "--pairs needs lists of equal length");
        for (std::size_t i = 0; i < sw_envs.size(); ++i) {
          so.n_envs = {sw_envs[i]};
          so.buffer_sizes = {sw_bufs[i]};
          const auto one = stage("sweep", [&] { return rl::run_sweep(model, in.config, in.profiles, so, report); });
          res.cells.push_back(one.cells.front());
        }
        std::vector<double> e, b, rw, tm;
        for (const auto& c : res.cells) {
          e.push_back(c.n_envs);
          b.push_back(c.buffer_size);
          rw.push_back(c.mean_reward);
          tm.push_back(c.total_seconds);
        }
        res.corr_buffer_reward = rl::pearson(b, rw);
        res.corr_buffer_time = rl::pearson(b, tm);
        res.corr_envs_reward = rl::pearson(e, rw);
        res.corr_envs_time = rl::pearson(e, tm);
      } else {
        so.n_envs = sw_envs;
        so.buffer_sizes = sw_bufs;
        res = stage("sweep", [&] { return rl::run_sweep(model, in.config, in.profiles, so, report); });
      }
      res.write_csv(fs::path(common.out) / "sweep.csv");
      write_json(fs::path(common.out) / "sweep.json", res.to_json());
      std::cout << "corr(buffer_size, mean reward) = " << res.corr_buffer_reward
                << "\ncorr(buffer_size, training time) = " << res.corr_buffer_time
                << "\ncorr(n_envs, mean reward) = " << res.corr_envs_reward
                << "\ncorr(n_envs, training time) = " << res.corr_envs_time << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error in " << e.what() << "\n";
    return 1;
  }
  return 0;
}
