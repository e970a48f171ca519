#include "anm/surrogate/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <stdexcept>

namespace anm::surrogate {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

}  // namespace

nlohmann::json TimingReport::to_json() const {
  return {{"n", n},
          {"batch", batch},
          {"surrogate_median_s", surrogate_median_s},
          {"env_median_s", env_median_s},
          {"ratio", ratio}};
}

TimingReport benchmark_inference(const TransitionModel& surrogate, const TransitionModel& reference, int n,
                                 int batch, std::uint64_t seed) {
  if (n < 0 || batch <= 0) throw std::invalid_argument("benchmark_inference: need n >= 0 and batch > 0");
  TimingReport r;
  r.n = n;
  r.batch = batch;
  if (n == 0) return r;

  const auto* ref = dynamic_cast<const ReferenceModel*>(&reference);
  if (!ref) throw std::invalid_argument("benchmark_inference: reference must be the reference model");
  const auto& config = ref->config();
  const auto& des = config.devices[config.des_device()];

  // Random-agent trajectory on the reference model supplies the inputs.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> aux(0, config.aux_modulus - 1);
  std::uniform_real_distribution<double> soc(des.soc_min, des.soc_max);
  std::vector<State> states;
  std::vector<Action> actions;
  State s = reference.reset_state(aux(rng), soc(rng));
  for (int i = 0; i < n; ++i) {
    const auto a = random_action(config, rng);
    states.push_back(s);
    actions.push_back(a);
    const auto out = reference.step(s, a);
    s = out.done ? reference.reset_state(aux(rng), soc(rng)) : out.next_state;
  }

  // Reference and surrogate alternate batch by batch so that drift in machine
  // load hits both sides alike.
  using clock = std::chrono::steady_clock;
  std::vector<double> env_times, sur_times;
  env_times.reserve(n);
  for (int i = 0; i < n; i += batch) {
    const int m = std::min(batch, n - i);
    for (int k = i; k < i + m; ++k) {
      const auto t0 = clock::now();
      const auto out = reference.step(states[k], actions[k]);
      const auto t1 = clock::now();
      env_times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    const std::vector<State> bs(states.begin() + i, states.begin() + i + m);
    const std::vector<Action> ba(actions.begin() + i, actions.begin() + i + m);
    const auto t0 = clock::now();
    const auto out = surrogate.step_batch(bs, ba);
    const auto t1 = clock::now();
    sur_times.push_back(std::chrono::duration<double>(t1 - t0).count() / m);
  }
  r.env_median_s = median(env_times);
  r.surrogate_median_s = median(sur_times);
  r.ratio = r.surrogate_median_s > 0.0 ? r.env_median_s / r.surrogate_median_s : 0.0;
  return r;
}

}  // namespace anm::surrogate
