#include "anm/nn/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "anm/grid.hpp"

namespace anm::nn {

namespace {
constexpr const char* kFormat = "anm-mlp";
constexpr int kVersion = 1;
}  // namespace

std::uint64_t parameter_hash(const Mlp<double>& net) {
  std::uint64_t h = fnv1a(net.sizes().data(), net.sizes().size() * sizeof(int));
  const int act = static_cast<int>(net.hidden_activation());
  h = fnv1a(&act, sizeof(act), h);
  return fnv1a(net.params().data(), net.params().size() * sizeof(double), h);
}

nlohmann::json to_json(const Mlp<double>& net) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["dtype"] = "float64";
  j["sizes"] = net.sizes();
  j["activation"] = to_string(net.hidden_activation());
  j["params"] = std::vector<double>(net.params().begin(), net.params().end());
  j["hash"] = hash_hex(parameter_hash(net));
  return j;
}

Mlp<double> mlp_from_json(const nlohmann::json& j, const std::optional<std::vector<int>>& expected_sizes) {
  if (j.value("format", "") != kFormat) throw std::runtime_error("checkpoint: not an anm-mlp record");
  if (j.value("version", 0) != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  if (j.value("dtype", "") != "float64") throw std::runtime_error("checkpoint: unsupported dtype");
  const auto sizes = j.at("sizes").get<std::vector<int>>();
  if (expected_sizes && *expected_sizes != sizes) throw std::runtime_error("checkpoint: layer sizes do not match");
  Mlp<double> net(sizes, activation_from_string(j.at("activation").get<std::string>()));
  const auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != net.n_params()) throw std::runtime_error("checkpoint: parameter count does not match sizes");
  net.params().assign(params.begin(), params.end());
  if (hash_hex(parameter_hash(net)) != j.at("hash").get<std::string>())
    throw std::runtime_error("checkpoint: content hash mismatch");
  return net;
}

void save_checkpoint(const std::filesystem::path& path, const Mlp<double>& net) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out << to_json(net).dump() << '\n';
}

Mlp<double> load_checkpoint(const std::filesystem::path& path, const std::optional<std::vector<int>>& expected_sizes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: parse error: ") + e.what());
  }
  return mlp_from_json(j, expected_sizes);
}

}  // namespace anm::nn
