#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace anm::surrogate {

struct GbdtOptions {
  int n_trees = 100;
  int max_depth = 3;
  double shrinkage = 0.1;
  double threshold = 0.5;
  int min_leaf = 5;
  double l2 = 1.0;
};

/// Binary classifier: boosted depth-limited regression trees fit to the
/// logistic loss with second-order leaf values.
class GbdtClassifier {
 public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  /// One sample per row of `x`, labels in {0, 1}. Throws std::invalid_argument
  /// when only one class is present.
  static GbdtClassifier fit(const RowMatrix& x, const std::vector<int>& y, const GbdtOptions& options = {});

  int n_features() const { return n_features_; }
  int n_trees() const { return static_cast<int>(trees_.size()); }
  const GbdtOptions& options() const { return options_; }

  double raw_score(const double* x) const;
  double predict_proba(const double* x) const;
  bool predict(const double* x) const { return predict_proba(x) >= options_.threshold; }
  double accuracy(const RowMatrix& x, const std::vector<int>& y) const;
  /// `x` holds n samples back to back, n_features() values each.
  void predict_batch(const double* x, std::size_t n, char* out) const;
  /// Feature-major layout: feature f of sample i is x[f * ld + i].
  void predict_columns(const double* x, std::size_t n, std::size_t ld, char* out) const;

  /// Contribution of tree `t` (already multiplied by the shrinkage).
  double tree_output(int t, const double* x) const;

  nlohmann::json to_json() const;
  static GbdtClassifier from_json(const nlohmann::json& j);

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  struct Tree {
    std::vector<Node> nodes;
    double eval(const double* x) const;
  };

  // Inference copy of every tree in one array. Leaves point to themselves,
  // so each tree is walked a fixed number of steps without branching.
  struct FlatNode {
    int feature = 0;
    int left = 0;
    int right = 0;
    double threshold = 0.0;
    double value = 0.0;
  };
  struct Flat {
    std::vector<FlatNode> nodes;
    std::vector<int> root;
    int depth = 0;
  };
  // Leaf-bitmask form: a node whose test sends the sample right clears the
  // leaves of its left subtree; the lowest surviving bit is the leaf reached.
  struct Masked {
    std::vector<int> feature;
    std::vector<double> threshold;
    std::vector<std::uint64_t> mask;
    std::vector<int> node_begin;  // per tree, size n_trees + 1
    std::vector<double> leaf_value;
    std::vector<int> leaf_begin;
    bool usable = false;  // false when some tree has more than 64 leaves
  };
  void flatten();
  double walk(int t, const double* x) const;

  GbdtOptions options_;
  int n_features_ = 0;
  double base_score_ = 0.0;
  std::vector<Tree> trees_;
  Flat flat_;
  Masked masked_;
};

}  // namespace anm::surrogate
