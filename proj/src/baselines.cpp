#include "anm/baselines/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "anm/nn/adamw.hpp"
#include "anm/nn/checkpoint.hpp"
#include "anm/nn/sobol.hpp"

namespace anm::baselines {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(DatasetKind k) { return k == DatasetKind::generative ? "generative" : "agent_based"; }

std::string to_string(BaselineKind k) { return k == BaselineKind::linear ? "linear" : "mlp"; }

BaselineKind baseline_kind_from_string(const std::string& s) {
  if (s == "linear") return BaselineKind::linear;
  if (s == "mlp") return BaselineKind::mlp;
  throw std::invalid_argument("unknown baseline kind '" + s + "' (expected linear or mlp)");
}

MatrixXd TransitionDataset::inputs() const {
  if (states.empty()) return {};
  const auto s0 = states.front().encode();
  const auto a0 = actions.front().encode();
  MatrixXd x(size(), s0.size() + a0.size());
  for (std::size_t i = 0; i < size(); ++i) {
    const auto s = states[i].encode();
    const auto a = actions[i].encode();
    for (std::size_t j = 0; j < s.size(); ++j) x(i, j) = s[j];
    for (std::size_t j = 0; j < a.size(); ++j) x(i, s.size() + j) = a[j];
  }
  return x;
}

MatrixXd TransitionDataset::targets() const {
  if (states.empty()) return {};
  const std::size_t ns = next_states.front().encode().size();
  MatrixXd y(size(), ns + 1);
  for (std::size_t i = 0; i < size(); ++i) {
    const auto s = next_states[i].encode();
    for (std::size_t j = 0; j < ns; ++j) y(i, j) = s[j];
    y(i, ns) = rewards[i];
  }
  return y;
}

void TransitionDataset::save(const std::filesystem::path& stem) const {
  const MatrixXd x = inputs(), y = targets();
  const auto bin = std::filesystem::path(stem.string() + ".bin");
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw std::runtime_error("dataset: cannot write " + bin.string());
  auto column = [&](const double* data, Eigen::Index n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  };
  // Column-major storage makes every column contiguous.
  for (Eigen::Index c = 0; c < x.cols(); ++c) column(x.col(c).data(), x.rows());
  for (Eigen::Index c = 0; c < y.cols(); ++c) column(y.col(c).data(), y.rows());
  std::vector<double> d(dones.begin(), dones.end());
  column(d.data(), static_cast<Eigen::Index>(d.size()));
  nlohmann::json m{{"format", "anm-dataset"},
                   {"version", 1},
                   {"kind", to_string(kind)},
                   {"seed", seed},
                   {"samples", size()},
                   {"input_columns", x.cols()},
                   {"target_columns", y.cols()},
                   {"dtype", "float64-le"},
                   {"layout", "columnar: inputs (state, action), targets (next_state, reward), done"},
                   {"config_hash", hash_hex(config_hash)}};
  std::ofstream man(stem.string() + ".json");
  if (!man) throw std::runtime_error("dataset: cannot write manifest for " + stem.string());
  man << m.dump(2) << '\n';
}

TransitionDataset TransitionDataset::load(const std::filesystem::path& stem, const GridConfig& config) {
  std::ifstream man(stem.string() + ".json");
  if (!man) throw std::runtime_error("dataset: cannot read manifest for " + stem.string());
  nlohmann::json m;
  man >> m;
  if (m.value("format", "") != "anm-dataset") throw std::runtime_error("dataset: not an anm-dataset manifest");
  if (m.at("config_hash").get<std::string>() != hash_hex(config.content_hash()))
    throw std::runtime_error("dataset: built for a different grid configuration");
  const auto n = m.at("samples").get<std::size_t>();
  const int nx = m.at("input_columns").get<int>(), ny = m.at("target_columns").get<int>();
  const int ns = config.state_dim(), na = config.action_dim();
  if (nx != ns + na || ny != ns + 1) throw std::runtime_error("dataset: column counts do not match the grid");
  std::ifstream in(stem.string() + ".bin", std::ios::binary);
  if (!in) throw std::runtime_error("dataset: cannot read " + stem.string() + ".bin");
  MatrixXd x(n, nx), y(n, ny);
  VectorXd d(n);
  in.read(reinterpret_cast<char*>(x.data()), static_cast<std::streamsize>(x.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(y.data()), static_cast<std::streamsize>(y.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(double)));
  if (!in) throw std::runtime_error("dataset: " + stem.string() + ".bin is truncated");
  TransitionDataset ds;
  ds.kind = m.at("kind").get<std::string>() == "generative" ? DatasetKind::generative : DatasetKind::agent_based;
  ds.seed = m.at("seed").get<std::uint64_t>();
  ds.config_hash = config.content_hash();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(ns), a(na), t(ns);
    for (int j = 0; j < ns; ++j) s[j] = x(i, j);
    for (int j = 0; j < na; ++j) a[j] = x(i, ns + j);
    for (int j = 0; j < ns; ++j) t[j] = y(i, j);
    ds.states.push_back(State::decode(config, s));
    ds.actions.push_back(Action::decode(config, a));
    ds.next_states.push_back(State::decode(config, t));
    ds.rewards.push_back(y(i, ns));
    ds.dones.push_back(d[i] != 0.0);
  }
  return ds;
}

TransitionDataset build_generative_dataset(const GridConfig& config, const DailyProfiles& profiles, int n,
                                           std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("build_generative_dataset: n must be >= 0");
  TransitionDataset ds;
  ds.kind = DatasetKind::generative;
  ds.seed = seed;
  ds.config_hash = config.content_hash();
  const auto sr = state_ranges(config);
  const auto ab = action_bounds(config);
  const int ns = config.state_dim(), na = config.action_dim();
  nn::SobolSampler sobol(ns + na);
  // Disjoint stretches of the sequence per seed.
  sobol.skip(1 + seed * (1ULL << 24));
  const auto y = build_admittance(config);
  for (int i = 0; i < n; ++i) {
    const auto u = sobol.next();
    std::vector<double> s(ns), a(na);
    for (int j = 0; j + 1 < ns; ++j) s[j] = sr.low[j] + u[j] * (sr.high[j] - sr.low[j]);
    s[ns - 1] = std::min(std::floor(u[ns - 1] * config.aux_modulus), config.aux_modulus - 1.0);
    for (int j = 0; j < na; ++j) a[j] = ab.low[j] + u[ns + j] * (ab.high[j] - ab.low[j]);
    const auto state = State::decode(config, s);
    const auto action = Action::decode(config, a);
    const auto out = reference_transition(config, profiles, y, state, action);
    ds.states.push_back(state);
    ds.actions.push_back(action);
    ds.next_states.push_back(out.next_state);
    ds.rewards.push_back(out.reward);
    ds.dones.push_back(out.done);
  }
  return ds;
}

TransitionDataset build_agent_dataset(const GridConfig& config, const DailyProfiles& profiles, int n,
                                      std::uint64_t seed, int episode_length) {
  if (n < 0) throw std::invalid_argument("build_agent_dataset: n must be >= 0");
  TransitionDataset ds;
  ds.kind = DatasetKind::agent_based;
  ds.seed = seed;
  ds.config_hash = config.content_hash();
  if (n == 0) return ds;
  Anm6Env env(config, profiles);
  env.set_episode_length(episode_length);
  std::mt19937_64 rng(seed);
  env.reset(rng());
  for (int i = 0; i < n; ++i) {
    const auto a = random_action(config, rng);
    const State s = env.state();
    const auto out = env.step(a);
    ds.states.push_back(s);
    ds.actions.push_back(a);
    ds.next_states.push_back(out.next_state);
    ds.rewards.push_back(out.reward);
    ds.dones.push_back(out.done || out.truncated);
    if (out.done || out.truncated) env.reset(rng());
  }
  return ds;
}

BaselineModel::BaselineModel(const GridConfig& config, const DailyProfiles& profiles)
    : config_(config), profiles_(profiles), y_(build_admittance(config)) {}

MatrixXd BaselineModel::predict(const MatrixXd& inputs) const {
  const MatrixXd z = ((inputs.rowwise() - x_mean_.transpose()).array().rowwise() * x_inv_std_.transpose().array())
                         .matrix();
  MatrixXd out;
  if (kind_ == BaselineKind::linear) {
    out = z * weights_.topRows(z.cols());
    out.rowwise() += weights_.row(z.cols());
  } else {
    out = net_.forward(z.transpose()).transpose();
  }
  return (out.array().rowwise() * y_std_.transpose().array()).rowwise() + y_mean_.transpose().array();
}

std::vector<StepOutcome> BaselineModel::step_batch(const std::vector<State>& states,
                                                   const std::vector<Action>& actions) const {
  TransitionDataset tmp;
  tmp.states = states;
  tmp.actions = actions;
  const MatrixXd pred = predict(tmp.inputs());
  const int ns = config_.state_dim();
  std::vector<StepOutcome> out(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    std::vector<double> s(ns);
    for (int j = 0; j < ns; ++j) s[j] = pred(i, j);
    // The time slot is categorical; wrap the regressed value back onto it.
    const long aux = std::lround(s[ns - 1]);
    s[ns - 1] = static_cast<double>(((aux % config_.aux_modulus) + config_.aux_modulus) % config_.aux_modulus);
    out[i].next_state = State::decode(config_, s);
    out[i].reward = clip_reward(config_, pred(i, ns));
    out[i].info.converged = true;
  }
  return out;
}

State BaselineModel::reset_state(int aux, double soc) const { return initial_state(config_, profiles_, y_, aux, soc); }

nlohmann::json BaselineModel::to_json() const {
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j{{"format", "anm-baseline"},
                   {"version", 1},
                   {"kind", to_string(kind_)},
                   {"x_mean", vec(x_mean_)},
                   {"x_inv_std", vec(x_inv_std_)},
                   {"y_mean", vec(y_mean_)},
                   {"y_std", vec(y_std_)}};
  if (kind_ == BaselineKind::linear) {
    j["rows"] = weights_.rows();
    j["cols"] = weights_.cols();
    j["weights"] = std::vector<double>(weights_.data(), weights_.data() + weights_.size());
  } else {
    j["net"] = nn::to_json(net_);
  }
  return j;
}

std::shared_ptr<BaselineModel> BaselineModel::from_json(const GridConfig& config, const DailyProfiles& profiles,
                                                        const nlohmann::json& j) {
  if (j.value("format", "") != "anm-baseline") throw std::runtime_error("baseline: not an anm-baseline record");
  std::shared_ptr<BaselineModel> m(new BaselineModel(config, profiles));
  m->kind_ = baseline_kind_from_string(j.at("kind").get<std::string>());
  auto vec = [&](const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    return VectorXd(Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  m->x_mean_ = vec("x_mean");
  m->x_inv_std_ = vec("x_inv_std");
  m->y_mean_ = vec("y_mean");
  m->y_std_ = vec("y_std");
  if (m->x_mean_.size() != config.state_dim() + config.action_dim() || m->y_mean_.size() != config.state_dim() + 1)
    throw std::runtime_error("baseline: shapes do not match the grid");
  if (m->kind_ == BaselineKind::linear) {
    const auto w = j.at("weights").get<std::vector<double>>();
    m->weights_ = Eigen::Map<const MatrixXd>(w.data(), j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  } else {
    m->net_ = nn::mlp_from_json(j.at("net"));
  }
  return m;
}

namespace {

// Weighted least absolute deviations, one output at a time.
VectorXd fit_lad(const MatrixXd& a, const VectorXd& y, int iterations, double ridge) {
  const Eigen::Index p = a.cols();
  const MatrixXd reg = ridge * MatrixXd::Identity(p, p);
  VectorXd beta = (a.transpose() * a + reg).ldlt().solve(a.transpose() * y);
  for (int it = 0; it < iterations; ++it) {
    const VectorXd r = y - a * beta;
    const VectorXd w = (r.array().abs().max(1e-6)).inverse();
    const MatrixXd aw = a.array().colwise() * w.array();
    const VectorXd next = (a.transpose() * aw + reg).ldlt().solve(aw.transpose() * y);
    const double change = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    if (change < 1e-9) break;
  }
  return beta;
}

}  // namespace

std::shared_ptr<BaselineModel> fit_baseline(BaselineKind kind, const TransitionDataset& data,
                                            const GridConfig& config, const DailyProfiles& profiles,
                                            const BaselineOptions& options) {
  if (data.size() == 0) throw std::invalid_argument("fit_baseline: empty dataset");
  const MatrixXd x = data.inputs(), y = data.targets();
  const Eigen::Index n = x.rows();
  std::shared_ptr<BaselineModel> m(new BaselineModel(config, profiles));
  m->kind_ = kind;
  m->x_mean_ = x.colwise().mean();
  m->y_mean_ = y.colwise().mean();
  m->x_inv_std_.resize(x.cols());
  m->y_std_.resize(y.cols());
  int varying = 0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double sd = std::sqrt((x.col(c).array() - m->x_mean_[c]).square().mean());
    // Constant columns carry no information; zero them out.
    m->x_inv_std_[c] = sd > 1e-12 ? 1.0 / sd : 0.0;
    varying += sd > 1e-12;
  }
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    const double sd = std::sqrt((y.col(c).array() - m->y_mean_[c]).square().mean());
    m->y_std_[c] = sd > 1e-12 ? sd : 1.0;
  }
  if (kind == BaselineKind::linear && varying == 0)
    throw std::invalid_argument("fit_baseline: every input column is constant");
  const MatrixXd z = ((x.rowwise() - m->x_mean_.transpose()).array().rowwise() * m->x_inv_std_.transpose().array())
                         .matrix();
  const MatrixXd t = ((y.rowwise() - m->y_mean_.transpose()).array().rowwise() / m->y_std_.transpose().array())
                         .matrix();

  if (kind == BaselineKind::linear) {
    MatrixXd a(n, z.cols() + 1);
    a.leftCols(z.cols()) = z;
    a.col(z.cols()).setOnes();
    m->weights_.resize(z.cols() + 1, t.cols());
    for (Eigen::Index c = 0; c < t.cols(); ++c)
      m->weights_.col(c) = fit_lad(a, t.col(c), options.irls_iterations, options.ridge);
    return m;
  }

  std::vector<int> sizes{static_cast<int>(z.cols())};
  sizes.insert(sizes.end(), options.hidden.begin(), options.hidden.end());
  sizes.push_back(static_cast<int>(t.cols()));
  m->net_ = nn::Mlp<double>(sizes, nn::Activation::tanh);
  std::mt19937_64 rng(options.seed);
  m->net_.init_glorot(rng);
  nn::AdamW opt(m->net_.n_params(), {options.learning_rate, 0.9, 0.999, 1e-8, 0.0});
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  nn::Mlp<double>::Tape tape;
  nn::ParamVector<double> grad;
  for (int e = 0; e < options.epochs; ++e) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (Eigen::Index s = 0; s < n; s += options.batch) {
      const Eigen::Index b = std::min<Eigen::Index>(options.batch, n - s);
      MatrixXd xb(z.cols(), b), tb(t.cols(), b);
      for (Eigen::Index c = 0; c < b; ++c) {
        xb.col(c) = z.row(idx[s + c]).transpose();
        tb.col(c) = t.row(idx[s + c]).transpose();
      }
      const MatrixXd pred = m->net_.forward(xb, tape);
      // Mean absolute error; its subgradient is the sign of the residual.
      const MatrixXd d = (pred - tb).array().sign() / static_cast<double>(b * t.cols());
      grad.assign(m->net_.n_params(), 0.0);
      m->net_.backward(tape, d, grad);
      opt.step(m->net_.params(), grad);
    }
  }
  return m;
}

nlohmann::json Metrics::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < mae.size(); ++i) {
    per.push_back({{"name", i < names.size() ? names[i] : std::to_string(i)},
                   {"mae", mae[i]},
                   {"r2", std::isnan(r2[i]) ? nlohmann::json(nullptr) : nlohmann::json(r2[i])}});
  }
  return {{"samples", samples},
          {"mae_mean", mae_mean},
          {"mae_scaled_mean", mae_scaled_mean},
          {"r2_mean", r2_mean},
          {"dimensions", per}};
}

Metrics compute_metrics(const MatrixXd& truth, const MatrixXd& pred, const std::vector<std::string>& names,
                        const std::vector<double>& widths) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw std::invalid_argument("compute_metrics: shapes differ");
  Metrics m;
  m.names = names;
  m.samples = static_cast<int>(truth.rows());
  const Eigen::Index d = truth.cols();
  if (truth.rows() == 0) return m;
  int with_var = 0, scaled = 0;
  for (Eigen::Index c = 0; c < d; ++c) {
    const double mae = (truth.col(c) - pred.col(c)).cwiseAbs().mean();
    const double mean = truth.col(c).mean();
    const double ss_tot = (truth.col(c).array() - mean).square().sum();
    const double ss_res = (truth.col(c) - pred.col(c)).squaredNorm();
    const double scale = std::max(1.0, truth.col(c).cwiseAbs().maxCoeff());
    const bool var = ss_tot > 1e-20 * scale * scale * static_cast<double>(truth.rows());
    const double r2 = var ? 1.0 - ss_res / ss_tot : std::numeric_limits<double>::quiet_NaN();
    m.mae.push_back(mae);
    m.r2.push_back(r2);
    m.mae_mean += mae;
    if (var) {
      m.r2_mean += r2;
      ++with_var;
    }
    if (static_cast<Eigen::Index>(widths.size()) == d && widths[c] > 0.0) {
      m.mae_scaled_mean += mae / widths[c];
      ++scaled;
    }
  }
  m.mae_mean /= static_cast<double>(d);
  if (with_var) m.r2_mean /= with_var;
  if (scaled) m.mae_scaled_mean /= scaled;
  return m;
}

std::vector<std::string> output_names(const GridConfig& config) {
  std::vector<std::string> n;
  for (const auto& d : config.devices) n.push_back("P_" + d.name);
  for (const auto& d : config.devices) n.push_back("Q_" + d.name);
  n.push_back("soc");
  for (int g : config.generator_devices()) n.push_back("Pmax_" + config.devices[g].name);
  n.push_back("aux");
  n.push_back("reward");
  return n;
}

std::vector<double> output_widths(const GridConfig& config) {
  const auto r = state_ranges(config);
  std::vector<double> w;
  for (std::size_t i = 0; i < r.low.size(); ++i) w.push_back(r.high[i] - r.low[i]);
  w.push_back(config.reward_max - config.reward_min);
  return w;
}

PolicyFn random_policy(const GridConfig& config) {
  return [config](const State&, std::mt19937_64& rng) { return random_action(config, rng); };
}

Metrics evaluate_surrogate(const TransitionModel& surrogate, const GridConfig& config, const DailyProfiles& profiles,
                           const PolicyFn& policy, int episodes, std::uint64_t seed, int episode_length) {
  Anm6Env env(config, profiles);
  env.set_episode_length(episode_length);
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> truth, pred;
  for (int e = 0; e < episodes; ++e) {
    env.reset(seed + static_cast<std::uint64_t>(e));
    for (int t = 0; t < episode_length; ++t) {
      const State s = env.state();
      const Action a = policy(s, rng);
      const auto real = env.step(a);
      const auto guess = surrogate.step(s, a);
      auto tr = real.next_state.encode();
      tr.push_back(real.reward);
      auto pr = guess.next_state.encode();
      pr.push_back(guess.reward);
      truth.push_back(std::move(tr));
      pred.push_back(std::move(pr));
      if (real.done || real.truncated) break;
    }
  }
  const int d = config.state_dim() + 1;
  MatrixXd tm(truth.size(), d), pm(pred.size(), d);
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (int j = 0; j < d; ++j) {
      tm(i, j) = truth[i][j];
      pm(i, j) = pred[i][j];
    }
  return compute_metrics(tm, pm, output_names(config), output_widths(config));
}

}  // namespace anm::baselines
