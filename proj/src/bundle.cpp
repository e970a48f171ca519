#include "anm/surrogate/bundle.hpp"

#include <fstream>
#include <random>
#include <stdexcept>

#include "anm/nn/checkpoint.hpp"

namespace anm::surrogate {

namespace {

constexpr const char* kFormat = "anm-bundle";
constexpr int kVersion = 1;

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("bundle: cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bundle: parse error in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("bundle: cannot write " + path.string());
  out << j.dump() << '\n';
}

}  // namespace

void SurrogateBundle::check(const GridConfig& config) const {
  const int ng = static_cast<int>(config.generator_devices().size());
  const int nb = config.n_buses();
  auto expect = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("SurrogateBundle: " + what);
  };
  expect(gen_net.n_inputs() == layout::gen_inputs_per_device * ng &&
             gen_net.n_outputs() == layout::gen_outputs_per_device * ng,
         "gen_net shape does not match the generator count");
  expect(des_net.n_inputs() == layout::des_inputs && des_net.n_outputs() == layout::des_outputs,
         "des_net shape is not 3 -> 12");
  expect(balance_net.n_inputs() == 2 * (nb - 1) && balance_net.n_outputs() == 2 * (nb - 1) + 2,
         "balance_net shape does not match the bus count");
  expect(terminal_clf.n_features() == config.state_dim() + config.action_dim() + 2 * (nb - 1),
         "terminal_clf feature count does not match the grid");
  scaling.index("soc");  // throws on a foreign table
}

void SurrogateBundle::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nn::save_checkpoint(dir / "gen_net.json", gen_net);
  nn::save_checkpoint(dir / "des_net.json", des_net);
  nn::save_checkpoint(dir / "balance_net.json", balance_net);
  write_json(dir / "terminal_clf.json", terminal_clf.to_json());
  write_json(dir / "scaling.json", scaling.to_json());
  nlohmann::json m;
  m["format"] = kFormat;
  m["version"] = kVersion;
  m["config_hash"] = hash_hex(config_hash);
  m["gen_net"] = {{"file", "gen_net.json"}, {"hash", hash_hex(nn::parameter_hash(gen_net))}};
  m["des_net"] = {{"file", "des_net.json"}, {"hash", hash_hex(nn::parameter_hash(des_net))}};
  m["balance_net"] = {{"file", "balance_net.json"}, {"hash", hash_hex(nn::parameter_hash(balance_net))}};
  m["terminal_clf"] = {{"file", "terminal_clf.json"}};
  m["scaling"] = {{"file", "scaling.json"}};
  write_json(dir / "manifest.json", m);
}

SurrogateBundle SurrogateBundle::load(const std::filesystem::path& dir, const GridConfig& config) {
  const auto m = read_json(dir / "manifest.json");
  if (m.value("format", "") != kFormat || m.value("version", 0) != kVersion)
    throw std::runtime_error("bundle: " + dir.string() + " is not an anm-bundle v1 directory");
  if (m.at("config_hash").get<std::string>() != hash_hex(config.content_hash()))
    throw std::runtime_error("bundle: trained for a different grid configuration (hash " +
                             m.at("config_hash").get<std::string>() + ", expected " +
                             hash_hex(config.content_hash()) + ")");
  SurrogateBundle b;
  b.config_hash = config.content_hash();
  auto net = [&](const char* key) {
    auto n = nn::load_checkpoint(dir / m.at(key).at("file").get<std::string>());
    if (hash_hex(nn::parameter_hash(n)) != m.at(key).at("hash").get<std::string>())
      throw std::runtime_error(std::string("bundle: ") + key + " does not match the manifest");
    return n;
  };
  b.gen_net = net("gen_net");
  b.des_net = net("des_net");
  b.balance_net = net("balance_net");
  b.terminal_clf = GbdtClassifier::from_json(read_json(dir / m.at("terminal_clf").at("file").get<std::string>()));
  b.scaling = ScalingTable::from_json(read_json(dir / m.at("scaling").at("file").get<std::string>()));
  b.check(config);
  return b;
}

std::shared_ptr<Cascade> SurrogateBundle::cascade(const GridConfig& config, const DailyProfiles& profiles) const {
  check(config);
  return std::make_shared<Cascade>(config, profiles, std::make_shared<KktGenerator>(config, scaling, gen_net),
                                   std::make_shared<KktDes>(config, scaling, des_net),
                                   std::make_shared<PinnBalance>(config, scaling, balance_net),
                                   std::make_shared<GbdtTerminal>(terminal_clf));
}

TerminalData collect_terminal_data(const GridConfig& config, const DailyProfiles& profiles, const Cascade& devices,
                                   int n, std::uint64_t seed) {
  Anm6Env env(config, profiles);
  std::mt19937_64 rng(seed);
  env.reset(rng());
  std::vector<State> states;
  std::vector<Action> actions;
  std::vector<int> labels;
  states.reserve(n);
  actions.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto a = random_action(config, rng);
    states.push_back(env.state());
    actions.push_back(a);
    const auto out = env.step(a);
    labels.push_back(out.done ? 1 : 0);
    if (out.done || out.truncated) env.reset(rng());
  }
  const auto staged = devices.stage_devices(states, actions);
  const auto f = Cascade::terminal_features(config, states, actions, staged.injections);
  TerminalData d;
  d.features = f;
  d.done = std::move(labels);
  return d;
}

GbdtClassifier train_terminal_clf(const TerminalData& data, const GbdtOptions& options, double heldout,
                                  TerminalReport* report) {
  const auto n = static_cast<Eigen::Index>(data.done.size());
  if (n != data.features.rows()) throw std::invalid_argument("train_terminal_clf: feature and label counts differ");
  if (!(heldout >= 0.0 && heldout < 1.0)) throw std::invalid_argument("train_terminal_clf: heldout must be in [0, 1)");
  const auto n_train = static_cast<Eigen::Index>(std::llround((1.0 - heldout) * static_cast<double>(n)));
  const GbdtClassifier::RowMatrix x_train = data.features.topRows(n_train);
  const std::vector<int> y_train(data.done.begin(), data.done.begin() + n_train);
  auto clf = GbdtClassifier::fit(x_train, y_train, options);
  if (report) {
    report->train_samples = static_cast<int>(n_train);
    report->heldout_samples = static_cast<int>(n - n_train);
    report->train_accuracy = clf.accuracy(x_train, y_train);
    if (n > n_train) {
      const GbdtClassifier::RowMatrix x_test = data.features.bottomRows(n - n_train);
      report->heldout_accuracy =
          clf.accuracy(x_test, std::vector<int>(data.done.begin() + n_train, data.done.end()));
    }
    int pos = 0;
    for (int v : data.done) pos += v;
    report->positive_rate = n ? static_cast<double>(pos) / static_cast<double>(n) : 0.0;
  }
  return clf;
}

BundleOptions::BundleOptions() {
  gen.max_steps = 300'000;
  des.max_steps = 1'000'000;
  balance.max_steps = 400'000;
  gen.seed = 1;
  des.seed = 2;
  balance.seed = 3;
}

SurrogateBundle train_bundle(const GridConfig& config, const DailyProfiles& profiles, const BundleOptions& options,
                             BundleReport* report) {
  BundleReport local;
  BundleReport& r = report ? *report : local;
  auto progress = [&](const std::string& s) {
    if (options.on_progress) options.on_progress(s);
  };
  SurrogateBundle b;
  b.config_hash = config.content_hash();
  b.scaling = ScalingTable::from_config(config);

  progress("gen_net");
  b.gen_net = train_gen_net(config, b.scaling, options.gen, &r.gen);
  r.gen_quality = evaluate_gen_net(b.gen_net, config, b.scaling);
  progress("des_net");
  b.des_net = train_des_net(config, b.scaling, options.des, &r.des);
  r.des_quality = evaluate_des_net(b.des_net, config, b.scaling);
  progress("balance_net");
  b.balance_net = train_balance_net(config, b.scaling, options.balance, &r.balance);
  r.balance_quality = evaluate_balance_net(b.balance_net, config, b.scaling);

  progress("terminal_clf");
  // Device stages only; the terminal and balance slots are placeholders here.
  const Cascade devices(config, profiles, std::make_shared<KktGenerator>(config, b.scaling, b.gen_net),
                        std::make_shared<KktDes>(config, b.scaling, b.des_net),
                        std::make_shared<NewtonBalance>(config), std::make_shared<SolverTerminal>());
  const auto data = collect_terminal_data(config, profiles, devices, options.terminal_samples, options.seed + 4);
  b.terminal_clf = train_terminal_clf(data, options.gbdt, options.terminal_heldout, &r.terminal);
  b.check(config);
  return b;
}

}  // namespace anm::surrogate
