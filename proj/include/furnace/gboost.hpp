#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace furnace {

/// Flattened binary regression tree; children are pool indices, -1 for leaves.
struct TreeNode {
  bool is_leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;  // impurity (SSE) decrease of this split
  double value = 0.0;
  int left = -1;
  int right = -1;
};

class RegressionTree {
 public:
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  double predict_row(const std::vector<std::vector<double>>& columns,
                     std::size_t row) const {
    int i = 0;
    while (!nodes_[i].is_leaf)
      i = columns[nodes_[i].feature][row] <= nodes_[i].threshold ? nodes_[i].left
                                                                 : nodes_[i].right;
    return nodes_[i].value;
  }

  void accumulate_importance(std::vector<double>& importance) const {
    for (const auto& n : nodes_)
      if (!n.is_leaf) importance[n.feature] += n.gain;
  }

  /// Exact greedy least-squares fit on the given sample subset. Ties in
  /// split gain resolve to the lowest feature index, then lowest threshold.
  static RegressionTree fit(const std::vector<std::vector<double>>& columns,
                            const std::vector<double>& y,
                            const std::vector<std::vector<std::size_t>>& sorted_idx,
                            const std::vector<std::size_t>& samples, int max_depth,
                            std::size_t min_leaf) {
    RegressionTree tree;
    std::vector<char> member(y.size(), 0);
    tree.build(columns, y, sorted_idx, samples, member, 0, max_depth, min_leaf);
    return tree;
  }

 private:
  struct Split {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
  };

  int build(const std::vector<std::vector<double>>& columns, const std::vector<double>& y,
            const std::vector<std::vector<std::size_t>>& sorted_idx,
            const std::vector<std::size_t>& samples, std::vector<char>& member,
            int depth, int max_depth, std::size_t min_leaf) {
    const int node_id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    double sum = 0.0;
    for (std::size_t s : samples) sum += y[s];
    const double mean = sum / static_cast<double>(samples.size());
    nodes_[node_id].value = mean;

    if (depth >= max_depth || samples.size() < 2 * min_leaf) return node_id;

    const Split split = best_split(columns, y, sorted_idx, samples, member, min_leaf);
    if (!split.found) return node_id;

    std::vector<std::size_t> left, right;
    left.reserve(samples.size());
    right.reserve(samples.size());
    for (std::size_t s : samples) {
      if (columns[split.feature][s] <= split.threshold)
        left.push_back(s);
      else
        right.push_back(s);
    }

    nodes_[node_id].is_leaf = false;
    nodes_[node_id].feature = split.feature;
    nodes_[node_id].threshold = split.threshold;
    nodes_[node_id].gain = split.gain;
    const int l = build(columns, y, sorted_idx, left, member, depth + 1, max_depth, min_leaf);
    const int r = build(columns, y, sorted_idx, right, member, depth + 1, max_depth, min_leaf);
    nodes_[node_id].left = l;
    nodes_[node_id].right = r;
    return node_id;
  }

  Split best_split(const std::vector<std::vector<double>>& columns,
                   const std::vector<double>& y,
                   const std::vector<std::vector<std::size_t>>& sorted_idx,
                   const std::vector<std::size_t>& samples, std::vector<char>& member,
                   std::size_t min_leaf) const {
    const std::size_t n = samples.size();
    double total = 0.0;
    for (std::size_t s : samples) {
      member[s] = 1;
      total += y[s];
    }
    const double parent_score = total * total / static_cast<double>(n);

    Split best;
    for (std::size_t f = 0; f < columns.size(); ++f) {
      double left_sum = 0.0;
      std::size_t left_cnt = 0;
      double prev_value = 0.0;
      bool have_prev = false;
      for (std::size_t s : sorted_idx[f]) {
        if (!member[s]) continue;
        const double v = columns[f][s];
        if (have_prev && v > prev_value && left_cnt >= min_leaf &&
            n - left_cnt >= min_leaf) {
          const double right_sum = total - left_sum;
          const double score =
              left_sum * left_sum / static_cast<double>(left_cnt) +
              right_sum * right_sum / static_cast<double>(n - left_cnt);
          const double gain = score - parent_score;
          if (gain > best.gain + 1e-12) {
            best.found = true;
            best.feature = f;
            best.threshold = 0.5 * (prev_value + v);
            best.gain = gain;
          }
        }
        left_sum += y[s];
        ++left_cnt;
        prev_value = v;
        have_prev = true;
      }
    }
    for (std::size_t s : samples) member[s] = 0;
    if (best.found && best.gain <= 1e-12) best.found = false;
    return best;
  }

  std::vector<TreeNode> nodes_;
};

struct GbConfig {
  int rounds = 100;
  int depth = 3;
  double shrinkage = 0.1;  // nu
  std::size_t min_leaf = 2;
};

/// Least-squares gradient boosting: the initial prediction is the target
/// mean and every round fits one tree to the current residuals.
class GbModel {
 public:
  static GbModel fit(const std::vector<std::vector<double>>& columns,
                     const std::vector<double>& y, const GbConfig& cfg = {}) {
    if (columns.empty()) throw std::invalid_argument("GbModel: no features");
    if (y.size() < 2) throw std::invalid_argument("GbModel: need at least 2 samples");
    for (const auto& c : columns)
      if (c.size() != y.size()) throw std::invalid_argument("GbModel: ragged columns");

    GbModel model;
    model.n_features_ = columns.size();
    model.cfg_ = cfg;
    model.init_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());

    double sse = 0.0;
    for (double v : y) sse += (v - model.init_) * (v - model.init_);
    if (sse <= 1e-24) return model;  // constant target: init only

    std::vector<std::vector<std::size_t>> sorted_idx(columns.size());
    for (std::size_t f = 0; f < columns.size(); ++f) {
      sorted_idx[f].resize(y.size());
      std::iota(sorted_idx[f].begin(), sorted_idx[f].end(), 0);
      std::stable_sort(sorted_idx[f].begin(), sorted_idx[f].end(),
                       [&](std::size_t a, std::size_t b) {
                         return columns[f][a] < columns[f][b];
                       });
    }

    std::vector<std::size_t> all(y.size());
    std::iota(all.begin(), all.end(), 0);
    std::vector<double> residual(y.size());
    std::vector<double> pred(y.size(), model.init_);
    for (int round = 0; round < cfg.rounds; ++round) {
      for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - pred[i];
      RegressionTree tree =
          RegressionTree::fit(columns, residual, sorted_idx, all, cfg.depth, cfg.min_leaf);
      if (tree.nodes().size() == 1) break;  // nothing left to split on
      for (std::size_t i = 0; i < y.size(); ++i)
        pred[i] += cfg.shrinkage * tree.predict_row(columns, i);
      model.trees_.push_back(std::move(tree));
    }
    return model;
  }

  double initial_prediction() const { return init_; }
  const std::vector<RegressionTree>& trees() const { return trees_; }
  std::size_t n_features() const { return n_features_; }
  const GbConfig& config() const { return cfg_; }

  double predict_row(const std::vector<std::vector<double>>& columns,
                     std::size_t row) const {
    double p = init_;
    for (const auto& t : trees_) p += cfg_.shrinkage * t.predict_row(columns, row);
    return p;
  }

  std::vector<double> predict(const std::vector<std::vector<double>>& columns) const {
    if (columns.size() != n_features_)
      throw std::invalid_argument("GbModel: feature count mismatch");
    std::vector<double> out(columns[0].size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = predict_row(columns, i);
    return out;
  }

  /// Raw per-feature total impurity decrease across all splits.
  std::vector<double> raw_importance() const {
    std::vector<double> imp(n_features_, 0.0);
    for (const auto& t : trees_) t.accumulate_importance(imp);
    return imp;
  }

 private:
  double init_ = 0.0;
  std::size_t n_features_ = 0;
  GbConfig cfg_;
  std::vector<RegressionTree> trees_;
};

}  // namespace furnace
