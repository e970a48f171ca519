#pragma once

#include <cstdint>

#include <json.hpp>

#include "anm/transition_model.hpp"

namespace anm::surrogate {

struct TimingReport {
  int n = 0;
  int batch = 0;
  double surrogate_median_s = 0.0;  // per transition, batched
  double env_median_s = 0.0;        // per transition, one at a time
  double ratio = 0.0;               // env / surrogate, 0 when n == 0

  nlohmann::json to_json() const;
};

/// Times the same n random-agent transitions through both models. The
/// reference model is stepped one transition at a time; the surrogate in
/// batches of `batch`, each batch's time divided by its size.
TimingReport benchmark_inference(const TransitionModel& surrogate, const TransitionModel& reference, int n,
                                 int batch = 100, std::uint64_t seed = 0);

}  // namespace anm::surrogate
