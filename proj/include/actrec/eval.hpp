// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "actrec/dataio.hpp"

namespace actrec {

struct SplitResult {
  DatasetManifest train;
  DatasetManifest test;
  std::uint64_t seed = 0;
};

/// Number of a class's videos that go to the test side: round-half-up of
/// fraction * videos, at least one, and never all of them.
std::size_t test_video_count(std::size_t videos, double test_fraction);

/// Stratified split by video: within each class the distinct video ids
/// (sorted, then shuffled by the seeded stream) are divided so that every
/// frame of a video lands on the same side.
SplitResult split_by_video(const DatasetManifest& manifest, double test_fraction,
                           std::uint64_t seed);

/// Rows are true labels, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> classes);
  ConfusionMatrix(std::vector<std::string> classes, std::vector<std::vector<std::uint64_t>> counts);

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t size() const { return classes_.size(); }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth][pred]; }
  void add(std::size_t truth, std::size_t pred, std::uint64_t n = 1);

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t truth) const;

  /// Tab-separated table with a header row of class names; rows are truth.
  std::string to_tsv() const;

 private:
  std::vector<std::string> classes_;
  std::vector<std::vector<std::uint64_t>> counts_;
};

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                          std::vector<std::string> classes);

/// trace / total; throws on an empty matrix.
double accuracy(const ConfusionMatrix& m);

using VideoVotes = std::map<std::string, std::size_t>;

/// Modal predicted label per video; ties go to the lower label index.
VideoVotes majority_vote(std::span<const std::pair<std::string, std::size_t>> frame_preds);

double video_accuracy(const VideoVotes& votes, const VideoVotes& truth);

/// Per-frame prediction as written by the classify stage.
struct Prediction {
  std::size_t sample_index = 0;
  std::string video_id;
  std::string label;
  bool operator==(const Prediction&) const = default;
};

/// `sample_index<TAB>video_id<TAB>pred_label` lines.
std::string format_predictions(std::span<const Prediction> preds);
std::vector<Prediction> parse_predictions(std::string_view text);
void save_predictions(std::span<const Prediction> preds, const std::filesystem::path& path);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

}  // namespace actrec
