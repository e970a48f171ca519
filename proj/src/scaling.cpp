#include "anm/surrogate/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "anm/env.hpp"

namespace anm::surrogate {

ScalingTable::ScalingTable(std::vector<ScalingSlot> slots) : slots_(std::move(slots)) {
  for (const auto& s : slots_)
    if (!(s.lower < s.upper)) throw std::invalid_argument("scaling slot '" + s.name + "': lower must be below upper");
}

ScalingTable ScalingTable::from_config(const GridConfig& config, int dimension, double empty_bus_halfwidth) {
  std::vector<ScalingSlot> slots;
  const auto gens = config.generator_devices();
  for (int g : gens) slots.push_back({"aP_" + config.devices[g].name, config.devices[g].p_min, config.devices[g].p_max});
  for (int g : gens) slots.push_back({"aQ_" + config.devices[g].name, config.devices[g].q_min, config.devices[g].q_max});
  const auto& des = config.devices[config.des_device()];
  slots.push_back({"aP_des", des.p_min, des.p_max});
  slots.push_back({"aQ_des", des.q_min, des.q_max});
  for (int g : gens)
    slots.push_back({"Pmax_" + config.devices[g].name, config.devices[g].p_min, config.devices[g].p_max});

  const int nb = config.n_buses();
  std::vector<double> plo(nb, 0.0), phi(nb, 0.0), qlo(nb, 0.0), qhi(nb, 0.0);
  for (const auto& d : config.devices) {
    if (d.kind == DeviceKind::slack) continue;
    const int b = config.bus_index(d.bus);
    plo[b] += d.p_min;
    phi[b] += d.p_max;
    if (d.kind == DeviceKind::load) {
      qlo[b] += std::min(load_reactive(d.p_min, d.power_factor), 0.0);
      qhi[b] += std::max(load_reactive(d.p_min, d.power_factor), 0.0);
    } else {
      qlo[b] += d.q_min;
      qhi[b] += d.q_max;
    }
  }
  // Bus 1 carries only the slack, which balances everything else.
  double tot_lo = 0.0, tot_hi = 0.0;
  for (int b = 1; b < nb; ++b) {
    tot_lo += plo[b];
    tot_hi += phi[b];
  }
  plo[0] = -tot_hi;
  phi[0] = -tot_lo;
  auto widen = [&](double& lo, double& hi) {
    if (hi - lo < 2.0 * empty_bus_halfwidth) {
      const double mid = 0.5 * (lo + hi);
      lo = mid - empty_bus_halfwidth;
      hi = mid + empty_bus_halfwidth;
    }
  };
  for (int b = 0; b < nb; ++b) {
    widen(plo[b], phi[b]);
    slots.push_back({"P_bus" + std::to_string(b + 1), plo[b], phi[b]});
  }
  for (int b = 1; b < nb; ++b) {
    widen(qlo[b], qhi[b]);
    slots.push_back({"Q_bus" + std::to_string(b + 1), qlo[b], qhi[b]});
  }
  slots.push_back({"soc", des.soc_min, des.soc_max});
  if (static_cast<int>(slots.size()) > dimension)
    throw std::invalid_argument("ScalingTable: sampler dimension " + std::to_string(dimension) + " is below the " +
                                std::to_string(slots.size()) + " identified slots");
  for (int k = static_cast<int>(slots.size()); k < dimension; ++k)
    slots.push_back({"reserved" + std::to_string(k + 1), 0.0, 1.0});
  return ScalingTable(std::move(slots));
}

int ScalingTable::index(const std::string& name) const {
  for (std::size_t i = 0; i < slots_.size(); ++i)
    if (slots_[i].name == name) return static_cast<int>(i);
  throw std::out_of_range("scaling table has no slot '" + name + "'");
}

double ScalingTable::from_unit(int slot, double u) const {
  const auto& s = slots_[slot];
  return s.lower + u * (s.upper - s.lower);
}

double ScalingTable::to_unit(int slot, double x) const {
  const auto& s = slots_[slot];
  return (x - s.lower) / (s.upper - s.lower);
}

nlohmann::json ScalingTable::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : slots_) j.push_back({{"name", s.name}, {"lower", s.lower}, {"upper", s.upper}});
  return j;
}

ScalingTable ScalingTable::from_json(const nlohmann::json& j) {
  std::vector<ScalingSlot> slots;
  for (const auto& s : j) slots.push_back({s.at("name"), s.at("lower"), s.at("upper")});
  return ScalingTable(std::move(slots));
}

DeviceFrame device_frame(const DeviceSpec& device) {
  DeviceFrame f;
  f.center = {0.5 * (device.p_min + device.p_max), 0.5 * (device.q_min + device.q_max)};
  f.scale = 0.5 * std::max(device.p_max - device.p_min, device.q_max - device.q_min);
  if (!(f.scale > 0.0)) f.scale = 1.0;
  return f;
}

Polytope2D to_local(const Polytope2D& poly, const DeviceFrame& frame) {
  Polytope2D out;
  for (std::size_t i = 0; i < poly.rows(); ++i) {
    const auto& g = poly.normals[i];
    const double norm = std::sqrt(g[0] * g[0] + g[1] * g[1]);
    // g.(c + s z) <= h  <=>  (g/|g|).z <= (h - g.c) / (s |g|)
    out.normals.push_back({g[0] / norm, g[1] / norm});
    out.offsets.push_back((poly.offsets[i] - g[0] * frame.center[0] - g[1] * frame.center[1]) / (frame.scale * norm));
  }
  return out;
}

}  // namespace anm::surrogate
