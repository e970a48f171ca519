#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "anm/grid.hpp"
#include "anm/projection.hpp"

namespace anm::surrogate {

struct ScalingSlot {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
};

/// Input ranges for label-free training, one slot per Sobol dimension:
/// aP_<gen>..., aQ_<gen>..., aP_des, aQ_des, Pmax_<gen>..., P_bus1..N,
/// Q_bus2..N, soc, then reserved slots up to the sampler dimension.
class ScalingTable {
 public:
  ScalingTable() = default;
  explicit ScalingTable(std::vector<ScalingSlot> slots);

  /// Ranges derived from the device bounds. Buses with no device get a
  /// symmetric range of +-`empty_bus_halfwidth` MW so the slot stays valid.
  static ScalingTable from_config(const GridConfig& config, int dimension = 21, double empty_bus_halfwidth = 1e-3);

  const std::vector<ScalingSlot>& slots() const { return slots_; }
  int size() const { return static_cast<int>(slots_.size()); }
  int index(const std::string& name) const;
  const ScalingSlot& slot(const std::string& name) const { return slots_[index(name)]; }

  /// Unit cube <-> physical.
  double from_unit(int slot, double u) const;
  double to_unit(int slot, double x) const;
  /// Physical <-> [-1, 1], the network input convention.
  double to_sym(int slot, double x) const { return 2.0 * to_unit(slot, x) - 1.0; }
  double from_sym(int slot, double z) const { return from_unit(slot, 0.5 * (z + 1.0)); }

  nlohmann::json to_json() const;
  static ScalingTable from_json(const nlohmann::json& j);

 private:
  std::vector<ScalingSlot> slots_;
};

/// Isotropic per-device frame: x = center + scale * z. Euclidean projection
/// commutes with it, so the network can work entirely in z.
struct DeviceFrame {
  Vec2 center{};
  double scale = 1.0;

  Vec2 to_local(const Vec2& x) const { return {(x[0] - center[0]) / scale, (x[1] - center[1]) / scale}; }
  Vec2 to_global(const Vec2& z) const { return {center[0] + scale * z[0], center[1] + scale * z[1]}; }
};
DeviceFrame device_frame(const DeviceSpec& device);

/// The polytope rewritten in a device frame with unit-norm rows. Same
/// feasible set and same projection, better conditioned duals.
Polytope2D to_local(const Polytope2D& poly, const DeviceFrame& frame);

}  // namespace anm::surrogate
