#include "anm/profiles.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace anm {

DailyProfiles::DailyProfiles(const GridConfig& config, std::vector<std::vector<double>> by_device)
    : slots_(config.aux_modulus), by_device_(std::move(by_device)) {
  if (by_device_.size() != config.devices.size())
    throw ConfigError("profiles: one series slot per device expected");
  for (std::size_t d = 0; d < config.devices.size(); ++d) {
    const auto& dev = config.devices[d];
    const bool needs = dev.kind == DeviceKind::load || dev.kind == DeviceKind::renewable_gen;
    auto& s = by_device_[d];
    if (!needs) {
      s.clear();
      continue;
    }
    if (static_cast<int>(s.size()) != slots_)
      throw ConfigError("profiles." + dev.name + ": expected " + std::to_string(slots_) + " slots");
    for (double v : s) {
      if (dev.kind == DeviceKind::load && v > 0.0)
        throw ConfigError("profiles." + dev.name + ": load demand must be non-positive");
      if (dev.kind == DeviceKind::renewable_gen && v < 0.0)
        throw ConfigError("profiles." + dev.name + ": generation capacity must be non-negative");
    }
  }
}

double DailyProfiles::at(int device, int aux) const {
  const auto& s = by_device_.at(device);
  if (s.empty()) throw std::out_of_range("profiles: device has no series");
  const int n = static_cast<int>(s.size());
  return s[((aux % n) + n) % n];
}

DailyProfiles DailyProfiles::constant(const GridConfig& config, const std::vector<double>& value_by_device) {
  std::vector<std::vector<double>> series(config.devices.size());
  for (std::size_t d = 0; d < config.devices.size(); ++d) {
    const auto kind = config.devices[d].kind;
    if (kind == DeviceKind::load || kind == DeviceKind::renewable_gen)
      series[d].assign(config.aux_modulus, value_by_device.at(d));
  }
  return DailyProfiles(config, std::move(series));
}

DailyProfiles load_profiles(const std::filesystem::path& path, const GridConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open profiles file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("profiles: empty file");

  std::vector<int> column_device;
  {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // slot
    while (std::getline(ss, cell, ',')) {
      int found = -1;
      for (std::size_t d = 0; d < config.devices.size(); ++d)
        if (config.devices[d].name == cell) found = static_cast<int>(d);
      if (found < 0) throw ConfigError("profiles: column '" + cell + "' matches no device");
      column_device.push_back(found);
    }
  }
  std::vector<std::vector<double>> series(config.devices.size());
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    if (std::stoi(cell) != row) throw ConfigError("profiles: slots must be listed as 0..N-1 in order");
    for (int dev : column_device) {
      if (!std::getline(ss, cell, ',')) throw ConfigError("profiles: short row " + std::to_string(row));
      series[dev].push_back(std::stod(cell));
    }
    ++row;
  }
  return DailyProfiles(config, std::move(series));
}

std::filesystem::path default_profiles_path() {
  return std::filesystem::path(ANM_DATA_DIR) / "anm6_profiles.csv";
}

}  // namespace anm
