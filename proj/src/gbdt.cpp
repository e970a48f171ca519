#include "anm/surrogate/gbdt.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace anm::surrogate {

namespace {
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
}  // namespace

double GbdtClassifier::Tree::eval(const double* x) const {
  int n = 0;
  while (nodes[n].feature >= 0) n = x[nodes[n].feature] <= nodes[n].threshold ? nodes[n].left : nodes[n].right;
  return nodes[n].value;
}

GbdtClassifier GbdtClassifier::fit(const RowMatrix& x, const std::vector<int>& y, const GbdtOptions& options) {
  const int n = static_cast<int>(x.rows());
  const int f = static_cast<int>(x.cols());
  if (static_cast<int>(y.size()) != n) throw std::invalid_argument("gbdt: label count does not match rows");
  const int positives = static_cast<int>(std::count(y.begin(), y.end(), 1));
  if (positives == 0 || positives == n) throw std::invalid_argument("gbdt: training data holds a single class");

  GbdtClassifier model;
  model.options_ = options;
  model.n_features_ = f;
  const double prior = static_cast<double>(positives) / n;
  model.base_score_ = std::log(prior / (1.0 - prior));

  // Presort every feature once; nodes are tracked through node_of.
  std::vector<std::vector<int>> order(f, std::vector<int>(n));
  for (int j = 0; j < f; ++j) {
    std::iota(order[j].begin(), order[j].end(), 0);
    std::stable_sort(order[j].begin(), order[j].end(), [&](int a, int b) { return x(a, j) < x(b, j); });
  }

  std::vector<double> score(n, model.base_score_), g(n), h(n);
  std::vector<int> node_of(n);
  const double lam = options.l2;

  for (int t = 0; t < options.n_trees; ++t) {
    for (int i = 0; i < n; ++i) {
      const double p = sigmoid(score[i]);
      g[i] = p - y[i];
      h[i] = std::max(p * (1.0 - p), 1e-12);
    }
    Tree tree;
    tree.nodes.push_back({});
    std::fill(node_of.begin(), node_of.end(), 0);
    std::vector<int> frontier{0};

    for (int depth = 0; depth < options.max_depth && !frontier.empty(); ++depth) {
      const int nn = static_cast<int>(tree.nodes.size());
      std::vector<double> gs(nn, 0.0), hs(nn, 0.0);
      std::vector<int> cnt(nn, 0);
      for (int i = 0; i < n; ++i) {
        gs[node_of[i]] += g[i];
        hs[node_of[i]] += h[i];
        ++cnt[node_of[i]];
      }
      std::vector<double> best_gain(nn, 1e-12), best_thr(nn, 0.0);
      std::vector<int> best_feat(nn, -1);
      std::vector<char> open(nn, 0);
      for (int id : frontier) open[id] = cnt[id] >= 2 * options.min_leaf;

      std::vector<double> gl(nn), hl(nn);
      std::vector<int> cl(nn);
      std::vector<double> last(nn);
      for (int j = 0; j < f; ++j) {
        std::fill(gl.begin(), gl.end(), 0.0);
        std::fill(hl.begin(), hl.end(), 0.0);
        std::fill(cl.begin(), cl.end(), 0);
        std::fill(last.begin(), last.end(), -INFINITY);
        for (int i : order[j]) {
          const int id = node_of[i];
          if (!open[id]) continue;
          const double v = x(i, j);
          // Candidate split between the previous value and this one.
          if (cl[id] >= options.min_leaf && cnt[id] - cl[id] >= options.min_leaf && v > last[id]) {
            const double gr = gs[id] - gl[id], hr = hs[id] - hl[id];
            const double gain = gl[id] * gl[id] / (hl[id] + lam) + gr * gr / (hr + lam) -
                                gs[id] * gs[id] / (hs[id] + lam);
            if (gain > best_gain[id]) {
              best_gain[id] = gain;
              best_feat[id] = j;
              best_thr[id] = 0.5 * (last[id] + v);
            }
          }
          gl[id] += g[i];
          hl[id] += h[i];
          ++cl[id];
          last[id] = v;
        }
      }

      std::vector<int> next;
      for (int id : frontier) {
        if (best_feat[id] < 0) continue;
        const int l = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        tree.nodes[id].feature = best_feat[id];
        tree.nodes[id].threshold = best_thr[id];
        tree.nodes[id].left = l;
        tree.nodes[id].right = l + 1;
        next.push_back(l);
        next.push_back(l + 1);
      }
      for (int i = 0; i < n; ++i) {
        const auto& nd = tree.nodes[node_of[i]];
        if (nd.feature >= 0 && nd.left >= nn) node_of[i] = x(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
      }
      frontier = std::move(next);
    }

    // Newton leaf values.
    const int nn = static_cast<int>(tree.nodes.size());
    std::vector<double> gs(nn, 0.0), hs(nn, 0.0);
    for (int i = 0; i < n; ++i) {
      gs[node_of[i]] += g[i];
      hs[node_of[i]] += h[i];
    }
    for (int id = 0; id < nn; ++id)
      if (tree.nodes[id].feature < 0) tree.nodes[id].value = -options.shrinkage * gs[id] / (hs[id] + lam);
    for (int i = 0; i < n; ++i) score[i] += tree.nodes[node_of[i]].value;
    model.trees_.push_back(std::move(tree));
  }
  model.flatten();
  return model;
}

void GbdtClassifier::flatten() {
  flat_ = {};
  int depth = 0;
  for (const auto& t : trees_) {
    const int base = static_cast<int>(flat_.nodes.size());
    flat_.root.push_back(base);
    std::vector<int> d(t.nodes.size(), 0);
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      const auto& nd = t.nodes[k];
      const int self = base + static_cast<int>(k);
      if (nd.feature < 0) {
        flat_.nodes.push_back({0, self, self, 0.0, nd.value});
        continue;
      }
      flat_.nodes.push_back({nd.feature, base + nd.left, base + nd.right, nd.threshold, nd.value});
      d[nd.left] = d[k] + 1;
      d[nd.right] = d[k] + 1;
      depth = std::max(depth, d[k] + 1);
    }
  }
  flat_.depth = depth;

  masked_ = {};
  masked_.usable = true;
  masked_.node_begin.push_back(0);
  masked_.leaf_begin.push_back(0);
  for (const auto& t : trees_) {
    // Leaves numbered left to right; [lo, hi) is each subtree's leaf range.
    std::vector<int> lo(t.nodes.size()), hi(t.nodes.size());
    std::vector<double> leaves;
    auto number = [&](auto&& self, int k) -> void {
      const auto& nd = t.nodes[k];
      lo[k] = static_cast<int>(leaves.size());
      if (nd.feature < 0) {
        leaves.push_back(nd.value);
      } else {
        self(self, nd.left);
        self(self, nd.right);
      }
      hi[k] = static_cast<int>(leaves.size());
    };
    if (!t.nodes.empty()) number(number, 0);
    if (leaves.size() > 64) masked_.usable = false;
    for (std::size_t k = 0; k < t.nodes.size() && masked_.usable; ++k) {
      const auto& nd = t.nodes[k];
      if (nd.feature < 0) continue;
      std::uint64_t m = ~std::uint64_t{0};
      for (int b = lo[nd.left]; b < hi[nd.left]; ++b) m &= ~(std::uint64_t{1} << b);
      masked_.feature.push_back(nd.feature);
      masked_.threshold.push_back(nd.threshold);
      masked_.mask.push_back(m);
    }
    masked_.node_begin.push_back(static_cast<int>(masked_.feature.size()));
    masked_.leaf_value.insert(masked_.leaf_value.end(), leaves.begin(), leaves.end());
    masked_.leaf_begin.push_back(static_cast<int>(masked_.leaf_value.size()));
  }
}

void GbdtClassifier::predict_columns(const double* x, std::size_t n, std::size_t ld, char* out) const {
  if (!masked_.usable) {
    std::vector<double> row(n_features_);
    for (std::size_t i = 0; i < n; ++i) {
      for (int f = 0; f < n_features_; ++f) row[f] = x[f * ld + i];
      out[i] = predict(row.data());
    }
    return;
  }
  constexpr std::size_t chunk = 64;
  double score[chunk];
  std::uint64_t m[chunk];
  for (std::size_t i0 = 0; i0 < n; i0 += chunk) {
    const std::size_t len = std::min(chunk, n - i0);
    for (std::size_t j = 0; j < len; ++j) score[j] = base_score_;
    for (int t = 0; t < n_trees(); ++t) {
      for (std::size_t j = 0; j < len; ++j) m[j] = ~std::uint64_t{0};
      for (int k = masked_.node_begin[t]; k < masked_.node_begin[t + 1]; ++k) {
        const double* col = x + static_cast<std::size_t>(masked_.feature[k]) * ld + i0;
        const double thr = masked_.threshold[k];
        const std::uint64_t mk = masked_.mask[k];
        for (std::size_t j = 0; j < len; ++j) m[j] &= mk | (std::uint64_t{0} - static_cast<std::uint64_t>(col[j] <= thr));
      }
      const double* leaf = masked_.leaf_value.data() + masked_.leaf_begin[t];
      for (std::size_t j = 0; j < len; ++j) score[j] += leaf[std::countr_zero(m[j])];
    }
    for (std::size_t j = 0; j < len; ++j) out[i0 + j] = sigmoid(score[j]) >= options_.threshold;
  }
}

double GbdtClassifier::walk(int t, const double* x) const {
  int n = flat_.root[t];
  for (int d = 0; d < flat_.depth; ++d) {
    const auto& nd = flat_.nodes[n];
    n = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  return flat_.nodes[n].value;
}

void GbdtClassifier::predict_batch(const double* x, std::size_t n, char* out) const {
  constexpr std::size_t lanes = 8;
  const std::size_t f = static_cast<std::size_t>(n_features_);
  std::vector<double> s(n, base_score_);
  const FlatNode* nodes = flat_.nodes.data();
  // Several samples per tree at once so the lookups overlap.
  std::size_t i = 0;
  for (; i + lanes <= n; i += lanes) {
    const double* xi = x + i * f;
    for (int t = 0; t < n_trees(); ++t) {
      int idx[lanes];
      for (std::size_t j = 0; j < lanes; ++j) idx[j] = flat_.root[t];
      for (int d = 0; d < flat_.depth; ++d)
        for (std::size_t j = 0; j < lanes; ++j) {
          const FlatNode& nd = nodes[idx[j]];
          const int right = !(xi[j * f + nd.feature] <= nd.threshold);
          idx[j] = nd.left + ((nd.right - nd.left) & -right);
        }
      for (std::size_t j = 0; j < lanes; ++j) s[i + j] += nodes[idx[j]].value;
    }
  }
  for (; i < n; ++i)
    for (int t = 0; t < n_trees(); ++t) s[i] += walk(t, x + i * f);
  for (std::size_t k = 0; k < n; ++k) out[k] = sigmoid(s[k]) >= options_.threshold;
}

double GbdtClassifier::raw_score(const double* x) const {
  double s = base_score_;
  for (int t = 0; t < n_trees(); ++t) s += walk(t, x);
  return s;
}

double GbdtClassifier::predict_proba(const double* x) const { return sigmoid(raw_score(x)); }

double GbdtClassifier::tree_output(int t, const double* x) const { return trees_.at(t).eval(x); }

double GbdtClassifier::accuracy(const RowMatrix& x, const std::vector<int>& y) const {
  if (x.rows() == 0) return 0.0;
  int ok = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) ok += (predict(x.row(i).data()) ? 1 : 0) == y[i];
  return static_cast<double>(ok) / x.rows();
}

nlohmann::json GbdtClassifier::to_json() const {
  nlohmann::json j;
  j["format"] = "anm-gbdt";
  j["n_features"] = n_features_;
  j["base_score"] = base_score_;
  j["options"] = {{"n_trees", options_.n_trees},     {"max_depth", options_.max_depth},
                  {"shrinkage", options_.shrinkage}, {"threshold", options_.threshold},
                  {"min_leaf", options_.min_leaf},   {"l2", options_.l2}};
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& t : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& nd : t.nodes) nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.value});
    trees.push_back(nodes);
  }
  return j;
}

GbdtClassifier GbdtClassifier::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "anm-gbdt") throw std::runtime_error("gbdt: not an anm-gbdt record");
  GbdtClassifier m;
  m.n_features_ = j.at("n_features");
  m.base_score_ = j.at("base_score");
  const auto& o = j.at("options");
  m.options_ = {o.at("n_trees"), o.at("max_depth"), o.at("shrinkage"), o.at("threshold"), o.at("min_leaf"), o.at("l2")};
  for (const auto& t : j.at("trees")) {
    Tree tree;
    for (const auto& nd : t) tree.nodes.push_back({nd[0], nd[1], nd[2], nd[3], nd[4]});
    m.trees_.push_back(std::move(tree));
  }
  m.flatten();
  return m;
}

}  // namespace anm::surrogate
