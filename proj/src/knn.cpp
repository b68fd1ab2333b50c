// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <numeric>

#include "actrec/classifiers.hpp"
#include "actrec/errors.hpp"

namespace actrec {

std::size_t knn_predict(const FeatureSet& train, std::size_t k, std::span<const float> x) {
  if (train.records.empty()) throw ConfigError("kNN needs a non-empty training set");
  if (k < 1 || k > train.records.size()) {
    throw ConfigError("kNN k=" + std::to_string(k) + " must lie in [1, " +
                      std::to_string(train.records.size()) + "]");
  }
  if (x.size() != train.dim) {
    throw ShapeError("query has " + std::to_string(x.size()) + " dimensions, training set has " +
                     std::to_string(train.dim));
  }
  std::vector<double> dist(train.records.size());
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const auto& f = train.records[i].features;
    double acc = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double diff = static_cast<double>(f[d]) - x[d];
      acc += diff * diff;
    }
    dist[i] = acc;
  }
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  // Equal distances keep the lower record index first.
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
                    });

  std::vector<std::size_t> votes(train.classes.size(), 0);
  for (std::size_t r = 0; r < k; ++r) ++votes[train.records[order[r]].label];
  const std::size_t top = *std::max_element(votes.begin(), votes.end());
  // Among the labels sharing the top vote, the one with the nearest member wins.
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t label = train.records[order[r]].label;
    if (votes[label] == top) return label;
  }
  return train.records[order[0]].label;
}

}  // namespace actrec
