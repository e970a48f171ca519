#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace anm::nn {

struct AdamWOptions {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
};

/// AdamW with decoupled weight decay applied before the moment step.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::size_t n, AdamWOptions options) : opt_(options), m_(n, 0.0), v_(n, 0.0) {}

  const AdamWOptions& options() const { return opt_; }
  void set_learning_rate(double lr) { opt_.learning_rate = lr; }
  long steps() const { return t_; }

  template <class P, class G = P>
  void step(P& params, const G& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw std::invalid_argument("AdamW::step: parameter/gradient size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const double lr = opt_.learning_rate;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
      v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g * g;
      double p = params[i];
      p -= lr * opt_.weight_decay * p;
      p -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + opt_.epsilon);
      params[i] = static_cast<typename P::value_type>(p);
    }
  }

 private:
  AdamWOptions opt_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace anm::nn
