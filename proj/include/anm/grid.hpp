#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace anm {

/// Raised when a grid configuration fails to parse or violates an invariant.
/// The message always starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DeviceKind { slack, renewable_gen, load, des };

std::string to_string(DeviceKind kind);
DeviceKind device_kind_from_string(const std::string& name);

struct BusSpec {
  int id = 0;
  double v_min = 0.95;  // p.u.
  double v_max = 1.05;  // p.u.
};

struct BranchSpec {
  int from = 0;
  int to = 0;
  std::complex<double> y_series;  // p.u.
  std::complex<double> y_shunt;   // p.u., applied at both ends
  double tap = 1.0;
  double rating = 1.0;  // apparent power limit, p.u.
};

/// One reactive-capability line. Whether it is an upper (Q <= tau P + rho) or
/// a lower (Q >= tau P + rho) bound depends on its position in the device's
/// list: even positions are upper bounds, odd positions lower bounds.
struct FlexLine {
  double tau = 0.0;
  double rho = 0.0;
};

struct DeviceSpec {
  int id = 0;
  std::string name;
  DeviceKind kind = DeviceKind::load;
  int bus = 0;
  double p_min = 0.0;  // MW
  double p_max = 0.0;  // MW
  double q_min = 0.0;  // MVAr
  double q_max = 0.0;  // MVAr
  std::vector<FlexLine> lines;
  double power_factor = 1.0;  // loads only
  double soc_min = 0.0;       // MWh, DES only
  double soc_max = 0.0;       // MWh, DES only
  double eta = 1.0;           // DES only
};

struct GridConfig {
  int schema_version = 1;
  std::vector<BusSpec> buses;
  std::vector<BranchSpec> branches;
  std::vector<DeviceSpec> devices;
  double base_power = 100.0;  // MVA
  double delta_t = 0.25;      // h
  double lambda_penalty = 100.0;
  double reward_min = -100.0;
  double reward_max = 100.0;
  int episode_length = 3000;
  int aux_modulus = 96;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;

  int n_buses() const { return static_cast<int>(buses.size()); }
  int n_devices() const { return static_cast<int>(devices.size()); }
  int bus_index(int bus_id) const;

  int slack_device() const;
  int des_device() const;
  /// Non-slack generators in device order; these are the controllable gens.
  std::vector<int> generator_devices() const;
  std::vector<int> load_devices() const;

  int action_dim() const { return 2 * static_cast<int>(generator_devices().size()) + 2; }
  int state_dim() const {
    return 2 * n_devices() + 1 + static_cast<int>(generator_devices().size()) + 1;
  }

  /// Stable FNV-1a hash of the canonical serialisation.
  std::uint64_t content_hash() const;
  std::string to_json_string() const;
};

GridConfig parse_config(const std::string& text);
GridConfig load_config(const std::filesystem::path& path);
std::filesystem::path default_config_path();

using AdmittanceMatrix = Eigen::MatrixXcd;

AdmittanceMatrix build_admittance(const GridConfig& config);

/// Per-bus injections for buses 2..N, in the same units as the inputs.
struct BusInjections {
  std::vector<double> p;
  std::vector<double> q;
};

/// `device_powers` holds one (P, Q) pair per device in config order; the slack
/// device's entry is ignored.
BusInjections aggregate_bus_injections(const std::vector<std::pair<double, double>>& device_powers,
                                       const GridConfig& config);

std::string hash_hex(std::uint64_t h);
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace anm
