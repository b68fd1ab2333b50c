// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "actrec/classifiers.hpp"
#include "actrec/errors.hpp"

namespace actrec {
namespace {

double entropy(std::span<const std::size_t> counts, std::size_t total) {
  if (total == 0) return 0.0;
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

struct Candidate {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double ratio = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureSet& set, const TreeOptions& opts) : set_(set), opts_(opts) {}

  std::unique_ptr<TreeNode> build(std::vector<std::size_t> idx, int depth) {
    std::vector<std::size_t> counts(set_.classes.size(), 0);
    for (std::size_t i : idx) ++counts[set_.records[i].label];
    const std::size_t majority =
        static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    const bool pure = counts[majority] == idx.size();
    auto leaf = [&] {
      auto n = std::make_unique<TreeNode>();
      n->node = TreeLeaf{majority};
      return n;
    };
    if (pure || depth >= opts_.max_depth || idx.size() < opts_.min_leaf) return leaf();

    const Candidate best = best_split(idx, counts);
    if (!best.found) return leaf();

    std::vector<std::size_t> left, right;
    for (std::size_t i : idx) {
      (set_.records[i].features[best.feature] <= best.threshold ? left : right).push_back(i);
    }
    auto n = std::make_unique<TreeNode>();
    TreeSplit split;
    split.feature = best.feature;
    split.threshold = best.threshold;
    split.left = build(std::move(left), depth + 1);
    split.right = build(std::move(right), depth + 1);
    n->node = std::move(split);
    return n;
  }

 private:
  Candidate best_split(const std::vector<std::size_t>& idx,
                       const std::vector<std::size_t>& counts) const {
    const std::size_t n = idx.size();
    const double parent = entropy(counts, n);
    Candidate best;
    std::vector<std::size_t> order = idx;
    std::vector<std::size_t> left(counts.size()), right(counts.size());
    for (std::size_t f = 0; f < set_.dim; ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const float va = set_.records[a].features[f];
        const float vb = set_.records[b].features[f];
        return va != vb ? va < vb : a < b;
      });
      std::fill(left.begin(), left.end(), 0);
      right = counts;
      for (std::size_t pos = 0; pos + 1 < n; ++pos) {
        const std::size_t label = set_.records[order[pos]].label;
        ++left[label];
        --right[label];
        const float here = set_.records[order[pos]].features[f];
        const float next = set_.records[order[pos + 1]].features[f];
        if (here == next) continue;
        const std::size_t nl = pos + 1;
        const std::size_t nr = n - nl;
        const double wl = static_cast<double>(nl) / static_cast<double>(n);
        const double wr = static_cast<double>(nr) / static_cast<double>(n);
        const double gain = parent - wl * entropy(left, nl) - wr * entropy(right, nr);
        if (gain <= 1e-12) continue;
        const double split_info = -wl * std::log2(wl) - wr * std::log2(wr);
        const double ratio = gain / split_info;
        if (!best.found || ratio > best.ratio + 1e-12) {
          best.found = true;
          best.feature = f;
          best.threshold = (static_cast<double>(here) + static_cast<double>(next)) / 2.0;
          best.ratio = ratio;
        }
      }
    }
    return best;
  }

  const FeatureSet& set_;
  const TreeOptions& opts_;
};

}  // namespace

int TreeNode::depth() const {
  if (const auto* s = std::get_if<TreeSplit>(&node)) {
    return 1 + std::max(s->left->depth(), s->right->depth());
  }
  return 0;
}

std::size_t TreeNode::leaf_count() const {
  if (const auto* s = std::get_if<TreeSplit>(&node)) {
    return s->left->leaf_count() + s->right->leaf_count();
  }
  return 1;
}

std::unique_ptr<TreeNode> tree_train(const FeatureSet& train, const TreeOptions& opts) {
  train.validate();
  if (train.records.empty()) throw ConfigError("decision tree needs a non-empty training set");
  if (opts.max_depth < 0) throw ConfigError("max_depth must be non-negative");
  std::vector<std::size_t> idx(train.records.size());
  std::iota(idx.begin(), idx.end(), 0);
  return TreeBuilder(train, opts).build(std::move(idx), 0);
}

std::size_t tree_predict(const TreeNode& root, std::span<const float> x) {
  const TreeNode* n = &root;
  while (const auto* s = std::get_if<TreeSplit>(&n->node)) {
    if (s->feature >= x.size()) {
      throw ShapeError("tree splits on feature " + std::to_string(s->feature) +
                       " but the input has " + std::to_string(x.size()));
    }
    n = x[s->feature] <= s->threshold ? s->left.get() : s->right.get();
  }
  return std::get<TreeLeaf>(n->node).label;
}

}  // namespace actrec
