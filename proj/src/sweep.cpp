// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <map>

#include "actrec/finetune.hpp"

namespace actrec {

int round_to_granularity(double size, int granularity) {
  if (granularity < 1) throw ConfigError("sweep granularity must be positive");
  const double steps = std::floor(size / granularity + 0.5);
  return std::max(1, static_cast<int>(steps)) * granularity;
}

SweepResult sweep_layer_size(const std::function<double(int)>& evaluate,
                             std::array<int, 3> initial, int rounds, int granularity) {
  if (rounds < 0) throw ConfigError("sweep rounds must be non-negative");
  if (granularity < 1) throw ConfigError("sweep granularity must be positive");
  std::sort(initial.begin(), initial.end());
  if (initial[0] <= 0) throw ConfigError("sweep sizes must be positive");
  if (initial[0] == initial[1] || initial[1] == initial[2]) {
    throw ConfigError("sweep needs three distinct initial sizes");
  }

  SweepResult result;
  std::map<int, double> scores;
  auto run = [&](int size) {
    if (size <= 0 || scores.count(size)) return;
    double acc;
    try {
      acc = evaluate(size);
    } catch (const std::exception& e) {
      std::throw_with_nested(SweepError(size, e.what()));
    }
    scores[size] = acc;
    result.trace.push_back({size, acc});
  };
  auto best_of = [&] {
    // Highest score; ties go to the smaller size.
    auto best = scores.begin();
    for (auto it = scores.begin(); it != scores.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    return best;
  };

  for (int s : initial) run(s);
  for (int r = 0; r < rounds; ++r) {
    const auto best = best_of();
    auto neighbour = scores.end();
    if (best != scores.begin()) neighbour = std::prev(best);
    const auto right = std::next(best);
    if (right != scores.end() && (neighbour == scores.end() || right->second > neighbour->second)) {
      neighbour = right;
    }
    const int lo = std::min(best->first, neighbour->first);
    const int hi = std::max(best->first, neighbour->first);
    const int mid = round_to_granularity((lo + hi) / 2.0, granularity);
    run(mid);
    run(round_to_granularity((lo + mid) / 2.0, granularity));
    run(round_to_granularity((mid + hi) / 2.0, granularity));
  }
  const auto best = best_of();
  result.best_size = best->first;
  result.best_accuracy = best->second;
  return result;
}

}  // namespace actrec
