#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "anm/env.hpp"

namespace anm::test {

inline const GridConfig& desk() {
  static const GridConfig c = load_config(default_config_path());
  return c;
}

inline const DailyProfiles& desk_profiles() {
  static const DailyProfiles p = load_profiles(default_profiles_path(), desk());
  return p;
}

inline nlohmann::json desk_json() {
  std::ifstream in(default_config_path());
  return nlohmann::json::parse(in);
}

// Two buses, one branch, slack + one gen + one load + DES on bus 2.
inline nlohmann::json two_bus_json() {
  return nlohmann::json::parse(R"({
    "schema_version": 1,
    "buses": [{"id": 1, "v_min": 0.95, "v_max": 1.05}, {"id": 2, "v_min": 0.95, "v_max": 1.05}],
    "branches": [{"from": 1, "to": 2, "y": [1.0, -5.0], "rating": 10.0}],
    "devices": [
      {"id": 0, "kind": "slack", "bus": 1, "p_min": -1000, "p_max": 1000, "q_min": -1000, "q_max": 1000},
      {"id": 1, "kind": "load", "bus": 2, "p_min": -10, "p_max": 0, "power_factor": 1.0},
      {"id": 2, "kind": "renewable_gen", "bus": 2, "p_min": 0, "p_max": 10, "q_min": -5, "q_max": 5,
       "lines": [[0, 100], [0, -100]]},
      {"id": 3, "kind": "des", "bus": 2, "p_min": -5, "p_max": 5, "q_min": -5, "q_max": 5,
       "lines": [[0, 100], [0, -100], [0, 100], [0, -100]],
       "soc_min": 0, "soc_max": 50, "eta": 0.9}
    ]
  })");
}

}  // namespace anm::test
