#pragma once

#include <filesystem>
#include <vector>

#include "anm/grid.hpp"

namespace anm {

/// Deterministic daily series: demand (MW, <= 0) for every load and available
/// capacity (MW, >= 0) for every non-slack generator. Lookups wrap modulo the
/// number of slots.
class DailyProfiles {
 public:
  DailyProfiles() = default;
  /// `by_device[d]` is empty for devices without a profile (slack, DES).
  DailyProfiles(const GridConfig& config, std::vector<std::vector<double>> by_device);

  int slots() const { return slots_; }
  double at(int device, int aux) const;
  const std::vector<double>& series(int device) const { return by_device_[device]; }

  /// Same profile for every slot; handy for tests.
  static DailyProfiles constant(const GridConfig& config, const std::vector<double>& value_by_device);

 private:
  int slots_ = 0;
  std::vector<std::vector<double>> by_device_;
};

/// CSV with a header row `slot,<device name>,...` and one row per slot.
DailyProfiles load_profiles(const std::filesystem::path& path, const GridConfig& config);
std::filesystem::path default_profiles_path();

}  // namespace anm
