#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "anm/nn/mlp.hpp"
#include "anm/surrogate/cascade.hpp"
#include "anm/surrogate/gbdt.hpp"
#include "anm/surrogate/scaling.hpp"
#include "anm/surrogate/training.hpp"

namespace anm::surrogate {

/// The three physics-trained nets, the terminal classifier and the scaling
/// they were trained with.
struct SurrogateBundle {
  std::uint64_t config_hash = 0;
  ScalingTable scaling;
  nn::Mlp<double> gen_net;
  nn::Mlp<double> des_net;
  nn::Mlp<double> balance_net;
  GbdtClassifier terminal_clf;

  /// Throws std::invalid_argument when a shape disagrees with `config`.
  void check(const GridConfig& config) const;

  /// Writes manifest.json plus one file per component.
  void save(const std::filesystem::path& dir) const;
  /// Refuses a bundle whose manifest hash differs from `config`'s.
  static SurrogateBundle load(const std::filesystem::path& dir, const GridConfig& config);

  std::shared_ptr<Cascade> cascade(const GridConfig& config, const DailyProfiles& profiles) const;
};

/// Labeled transitions for the terminal classifier.
struct TerminalData {
  GbdtClassifier::RowMatrix features;
  std::vector<int> done;
};

/// Random-agent episodes on the reference env. Labels come from the env; the
/// injection features come from `devices` (the cascade the classifier will
/// sit behind), so training and inference see the same inputs.
TerminalData collect_terminal_data(const GridConfig& config, const DailyProfiles& profiles, const Cascade& devices,
                                   int n, std::uint64_t seed);

struct TerminalReport {
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  int train_samples = 0;
  int heldout_samples = 0;
  double positive_rate = 0.0;
};

/// Fits on the first (1 - heldout) share of the rows and scores the rest.
GbdtClassifier train_terminal_clf(const TerminalData& data, const GbdtOptions& options, double heldout,
                                  TerminalReport* report = nullptr);

struct BundleOptions {
  TrainOptions gen;
  TrainOptions des;
  TrainOptions balance;
  GbdtOptions gbdt;
  int terminal_samples = 20000;
  double terminal_heldout = 0.2;
  std::uint64_t seed = 0;
  std::function<void(const std::string&)> on_progress;

  BundleOptions();
};

struct BundleReport {
  TrainReport gen, des, balance;
  ProjectionQuality gen_quality, des_quality;
  BalanceQuality balance_quality;
  TerminalReport terminal;
};

SurrogateBundle train_bundle(const GridConfig& config, const DailyProfiles& profiles, const BundleOptions& options,
                             BundleReport* report = nullptr);

}  // namespace anm::surrogate
