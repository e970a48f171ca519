#include "anm/grid.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace anm {

using nlohmann::json;

std::string to_string(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::slack: return "slack";
    case DeviceKind::renewable_gen: return "renewable_gen";
    case DeviceKind::load: return "load";
    case DeviceKind::des: return "des";
  }
  return "unknown";
}

DeviceKind device_kind_from_string(const std::string& name) {
  if (name == "slack") return DeviceKind::slack;
  if (name == "renewable_gen") return DeviceKind::renewable_gen;
  if (name == "load") return DeviceKind::load;
  if (name == "des") return DeviceKind::des;
  throw ConfigError("devices[].kind: unknown device kind '" + name + "'");
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void fail(const std::string& field, const std::string& what) {
  throw ConfigError(field + ": " + what);
}

std::string at(const char* list, std::size_t i, const char* field) {
  return std::string(list) + "[" + std::to_string(i) + "]." + field;
}

}  // namespace

int GridConfig::bus_index(int bus_id) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == bus_id) return static_cast<int>(i);
  throw ConfigError("bus id " + std::to_string(bus_id) + " does not exist");
}

int GridConfig::slack_device() const {
  for (std::size_t i = 0; i < devices.size(); ++i)
    if (devices[i].kind == DeviceKind::slack) return static_cast<int>(i);
  throw ConfigError("devices: no slack device");
}

int GridConfig::des_device() const {
  for (std::size_t i = 0; i < devices.size(); ++i)
    if (devices[i].kind == DeviceKind::des) return static_cast<int>(i);
  throw ConfigError("devices: no DES device");
}

std::vector<int> GridConfig::generator_devices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < devices.size(); ++i)
    if (devices[i].kind == DeviceKind::renewable_gen) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> GridConfig::load_devices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < devices.size(); ++i)
    if (devices[i].kind == DeviceKind::load) out.push_back(static_cast<int>(i));
  return out;
}

void GridConfig::validate() const {
  if (schema_version != 1) fail("schema_version", "unsupported version " + std::to_string(schema_version));
  if (buses.empty()) fail("buses", "at least one bus is required");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id != static_cast<int>(i) + 1)
      fail(at("buses", i, "id"), "bus ids must be 1..N in order");
    if (!(buses[i].v_min < buses[i].v_max))
      fail(at("buses", i, "v_min"), "V_lower must be strictly below V_upper");
  }
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto& br = branches[i];
    if (br.from < 1 || br.from > n_buses()) fail(at("branches", i, "from"), "references a missing bus");
    if (br.to < 1 || br.to > n_buses()) fail(at("branches", i, "to"), "references a missing bus");
    if (br.from == br.to) fail(at("branches", i, "to"), "branch endpoints must differ");
    if (!(br.rating > 0.0)) fail(at("branches", i, "rating"), "rating must be positive");
    if (!(br.tap > 0.0)) fail(at("branches", i, "tap"), "tap ratio must be positive");
  }
  int n_slack = 0;
  int n_des = 0;
  std::set<int> ids;
  for (std::size_t i = 0; i < devices.size(); ++i) {
    const auto& d = devices[i];
    if (!ids.insert(d.id).second) fail(at("devices", i, "id"), "duplicate device id");
    if (d.bus < 1 || d.bus > n_buses()) fail(at("devices", i, "bus"), "references a missing bus");
    if (!(d.p_min <= d.p_max)) fail(at("devices", i, "p_min"), "P_lower must not exceed P_upper");
    if (!(d.q_min <= d.q_max)) fail(at("devices", i, "q_min"), "Q_lower must not exceed Q_upper");
    switch (d.kind) {
      case DeviceKind::slack:
        ++n_slack;
        if (d.bus != 1) fail(at("devices", i, "bus"), "the slack device must be attached to bus 1");
        break;
      case DeviceKind::load:
        if (d.p_max > 0.0) fail(at("devices", i, "p_max"), "loads must have P_upper <= 0");
        if (!(d.power_factor > 0.0 && d.power_factor <= 1.0))
          fail(at("devices", i, "power_factor"), "power factor must lie in (0, 1]");
        break;
      case DeviceKind::renewable_gen:
        if (d.lines.size() != 2) fail(at("devices", i, "lines"), "generators need exactly 2 flexibility lines");
        break;
      case DeviceKind::des:
        ++n_des;
        if (d.lines.size() != 4) fail(at("devices", i, "lines"), "DES needs exactly 4 flexibility lines");
        if (!(d.soc_min >= 0.0 && d.soc_min < d.soc_max))
          fail(at("devices", i, "soc_min"), "need 0 <= soc_min < soc_max");
        if (!(d.eta > 0.0 && d.eta <= 1.0)) fail(at("devices", i, "eta"), "efficiency must lie in (0, 1]");
        break;
    }
  }
  if (n_slack != 1) fail("devices", "exactly one slack device is required");
  if (n_des != 1) fail("devices", "exactly one DES device is required");
  if (!(delta_t > 0.0)) fail("delta_t_h", "must be positive");
  if (aux_modulus != static_cast<int>(std::lround(24.0 / delta_t)))
    fail("aux_modulus", "must equal 24 h / delta_t");
  if (!(base_power > 0.0)) fail("base_power_mva", "must be positive");
  if (!(reward_min < reward_max)) fail("reward_clip", "lower clip must be below upper clip");
  if (episode_length <= 0) fail("episode_length", "must be positive");
}

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

std::complex<double> complex_field(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("expected [real, imag] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

GridConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  GridConfig c;
  try {
    if (!j.contains("schema_version")) fail("schema_version", "missing");
    c.schema_version = j.at("schema_version").get<int>();
    c.base_power = get_or(j, "base_power_mva", c.base_power);
    c.delta_t = get_or(j, "delta_t_h", c.delta_t);
    c.lambda_penalty = get_or(j, "lambda_penalty", c.lambda_penalty);
    if (j.contains("reward_clip")) {
      c.reward_min = j["reward_clip"].at(0).get<double>();
      c.reward_max = j["reward_clip"].at(1).get<double>();
    }
    c.episode_length = get_or(j, "episode_length", c.episode_length);
    c.aux_modulus = get_or(j, "aux_modulus", c.aux_modulus);
    for (const auto& b : j.at("buses")) {
      BusSpec bus;
      bus.id = b.at("id").get<int>();
      bus.v_min = b.at("v_min").get<double>();
      bus.v_max = b.at("v_max").get<double>();
      c.buses.push_back(bus);
    }
    for (const auto& b : j.value("branches", json::array())) {
      BranchSpec br;
      br.from = b.at("from").get<int>();
      br.to = b.at("to").get<int>();
      if (b.contains("y")) {
        br.y_series = complex_field(b["y"]);
      } else {
        const std::complex<double> z(b.at("r").get<double>(), b.at("x").get<double>());
        if (std::abs(z) == 0.0) fail("branches[].r", "series impedance must be nonzero");
        br.y_series = 1.0 / z;
      }
      if (b.contains("y_shunt")) br.y_shunt = complex_field(b["y_shunt"]);
      br.tap = get_or(b, "tap", 1.0);
      br.rating = b.at("rating").get<double>();
      c.branches.push_back(br);
    }
    for (const auto& d : j.at("devices")) {
      DeviceSpec dev;
      dev.id = d.at("id").get<int>();
      dev.name = get_or<std::string>(d, "name", "device" + std::to_string(dev.id));
      dev.kind = device_kind_from_string(d.at("kind").get<std::string>());
      dev.bus = d.at("bus").get<int>();
      dev.p_min = d.at("p_min").get<double>();
      dev.p_max = d.at("p_max").get<double>();
      dev.q_min = get_or(d, "q_min", 0.0);
      dev.q_max = get_or(d, "q_max", 0.0);
      for (const auto& l : d.value("lines", json::array()))
        dev.lines.push_back({l.at(0).get<double>(), l.at(1).get<double>()});
      dev.power_factor = get_or(d, "power_factor", 1.0);
      dev.soc_min = get_or(d, "soc_min", 0.0);
      dev.soc_max = get_or(d, "soc_max", 0.0);
      dev.eta = get_or(d, "eta", 1.0);
      c.devices.push_back(dev);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  c.validate();
  return c;
}

GridConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::filesystem::path default_config_path() {
  return std::filesystem::path(ANM_DATA_DIR) / "anm6_desk.json";
}

std::string GridConfig::to_json_string() const {
  json j;
  j["schema_version"] = schema_version;
  j["base_power_mva"] = base_power;
  j["delta_t_h"] = delta_t;
  j["lambda_penalty"] = lambda_penalty;
  j["reward_clip"] = {reward_min, reward_max};
  j["episode_length"] = episode_length;
  j["aux_modulus"] = aux_modulus;
  j["buses"] = json::array();
  for (const auto& b : buses) j["buses"].push_back({{"id", b.id}, {"v_min", b.v_min}, {"v_max", b.v_max}});
  j["branches"] = json::array();
  for (const auto& br : branches)
    j["branches"].push_back({{"from", br.from},
                             {"to", br.to},
                             {"y", {br.y_series.real(), br.y_series.imag()}},
                             {"y_shunt", {br.y_shunt.real(), br.y_shunt.imag()}},
                             {"tap", br.tap},
                             {"rating", br.rating}});
  j["devices"] = json::array();
  for (const auto& d : devices) {
    json lines = json::array();
    for (const auto& l : d.lines) lines.push_back({l.tau, l.rho});
    j["devices"].push_back({{"id", d.id},
                            {"name", d.name},
                            {"kind", to_string(d.kind)},
                            {"bus", d.bus},
                            {"p_min", d.p_min},
                            {"p_max", d.p_max},
                            {"q_min", d.q_min},
                            {"q_max", d.q_max},
                            {"lines", lines},
                            {"power_factor", d.power_factor},
                            {"soc_min", d.soc_min},
                            {"soc_max", d.soc_max},
                            {"eta", d.eta}});
  }
  return j.dump(2);
}

std::uint64_t GridConfig::content_hash() const {
  const std::string s = to_json_string();
  return fnv1a(s.data(), s.size());
}

AdmittanceMatrix build_admittance(const GridConfig& config) {
  const int n = config.n_buses();
  AdmittanceMatrix y = AdmittanceMatrix::Zero(n, n);
  for (const auto& br : config.branches) {
    const int i = br.from - 1;
    const int k = br.to - 1;
    const double t = br.tap;
    // Two-port stamp: the tap sits on the from side, the shunt at both ends.
    y(i, i) += (br.y_series + br.y_shunt) / (t * t);
    y(k, k) += br.y_series + br.y_shunt;
    y(i, k) -= br.y_series / t;
    y(k, i) -= br.y_series / t;
  }
  return y;
}

BusInjections aggregate_bus_injections(const std::vector<std::pair<double, double>>& device_powers,
                                       const GridConfig& config) {
  if (device_powers.size() != config.devices.size())
    throw std::invalid_argument("aggregate_bus_injections: one (P, Q) per device expected");
  BusInjections inj;
  inj.p.assign(config.n_buses() - 1, 0.0);
  inj.q.assign(config.n_buses() - 1, 0.0);
  for (std::size_t d = 0; d < config.devices.size(); ++d) {
    const auto& dev = config.devices[d];
    if (dev.kind == DeviceKind::slack || dev.bus == 1) continue;
    inj.p[dev.bus - 2] += device_powers[d].first;
    inj.q[dev.bus - 2] += device_powers[d].second;
  }
  return inj;
}

}  // namespace anm
