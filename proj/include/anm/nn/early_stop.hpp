#pragma once

#include <cstdint>
#include <limits>

namespace anm::nn {

/// Stops once the best value seen has not improved for `patience` consecutive
/// observations. Lower is better.
class EarlyStop {
 public:
  explicit EarlyStop(std::int64_t patience, double min_delta = 0.0) : patience_(patience), min_delta_(min_delta) {}

  /// Records one observation; returns true when training should stop.
  bool update(double value) {
    ++step_;
    if (value < best_ - min_delta_) {
      best_ = value;
      best_step_ = step_;
    }
    return step_ - best_step_ >= patience_;
  }

  bool should_stop() const { return step_ - best_step_ >= patience_; }
  double best() const { return best_; }
  std::int64_t best_step() const { return best_step_; }
  std::int64_t steps() const { return step_; }

 private:
  std::int64_t patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  std::int64_t best_step_ = 0;
  std::int64_t step_ = 0;
};

}  // namespace anm::nn
