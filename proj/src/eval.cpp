// SPDX-License-Identifier: Apache-2.0
#include "actrec/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "actrec/errors.hpp"
#include "actrec/rng.hpp"

namespace actrec {

std::size_t test_video_count(std::size_t videos, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie strictly between 0 and 1");
  }
  if (videos < 2) throw ConfigError("a class needs at least two videos to split");
  auto n = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(videos) + 0.5));
  return std::clamp<std::size_t>(n, 1, videos - 1);
}

SplitResult split_by_video(const DatasetManifest& manifest, double test_fraction,
                           std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie strictly between 0 and 1");
  }
  std::map<std::string, std::set<std::string>> videos_by_class;
  std::map<std::string, std::string> class_of_video;
  for (const Sample& s : manifest.samples) {
    if (s.video_id.empty()) {
      throw ConfigError("sample " + s.image_path + " has no video id");
    }
    const auto [it, inserted] = class_of_video.emplace(s.video_id, s.label);
    if (!inserted && it->second != s.label) {
      throw ConfigError("video " + s.video_id + " appears under classes " + it->second +
                        " and " + s.label);
    }
    videos_by_class[s.label].insert(s.video_id);
  }

  Rng rng = Rng(seed).substream("split");
  std::set<std::string> test_videos;
  for (const auto& [label, ids] : videos_by_class) {
    if (ids.size() < 2) {
      throw ConfigError("class " + label + " has " + std::to_string(ids.size()) +
                        " video(s); splitting needs at least two");
    }
    std::vector<std::string> order(ids.begin(), ids.end());
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[rng.below(i + 1)]);
    }
    const std::size_t n_test = test_video_count(order.size(), test_fraction);
    test_videos.insert(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  }

  std::vector<Sample> train, test;
  for (const Sample& s : manifest.samples) {
    (test_videos.count(s.video_id) ? test : train).push_back(s);
  }
  SplitResult r;
  r.train = make_manifest(std::move(train));
  r.test = make_manifest(std::move(test));
  r.seed = seed;
  return r;
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> classes)
    : classes_(std::move(classes)),
      counts_(classes_.size(), std::vector<std::uint64_t>(classes_.size(), 0)) {}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> classes,
                                 std::vector<std::vector<std::uint64_t>> counts)
    : classes_(std::move(classes)), counts_(std::move(counts)) {
  if (counts_.size() != classes_.size()) throw ShapeError("confusion matrix must be square");
  for (const auto& row : counts_) {
    if (row.size() != classes_.size()) throw ShapeError("confusion matrix must be square");
  }
}

void ConfusionMatrix::add(std::size_t truth, std::size_t pred, std::uint64_t n) {
  if (truth >= size() || pred >= size()) {
    throw ConfigError("label index out of range for " + std::to_string(size()) + " classes");
  }
  counts_[truth][pred] += n;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts_)
    for (auto c : row) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < size(); ++i) t += counts_[i][i];
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t t = 0;
  for (auto c : counts_.at(truth)) t += c;
  return t;
}

std::string ConfusionMatrix::to_tsv() const {
  std::ostringstream os;
  os << "truth\\pred";
  for (const auto& c : classes_) os << '\t' << c;
  os << '\n';
  for (std::size_t i = 0; i < size(); ++i) {
    os << classes_[i];
    for (auto c : counts_[i]) os << '\t' << c;
    os << '\n';
  }
  return os.str();
}

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                          std::vector<std::string> classes) {
  if (preds.size() != truth.size()) {
    throw ConfigError("prediction count " + std::to_string(preds.size()) +
                      " differs from truth count " + std::to_string(truth.size()));
  }
  ConfusionMatrix m(std::move(classes));
  for (std::size_t i = 0; i < preds.size(); ++i) m.add(truth[i], preds[i]);
  return m;
}

double accuracy(const ConfusionMatrix& m) {
  const auto total = m.total();
  if (total == 0) throw ConfigError("accuracy of an empty confusion matrix is undefined");
  return static_cast<double>(m.trace()) / static_cast<double>(total);
}

VideoVotes majority_vote(std::span<const std::pair<std::string, std::size_t>> frame_preds) {
  if (frame_preds.empty()) throw ConfigError("majority vote needs at least one frame");
  std::map<std::string, std::map<std::size_t, std::size_t>> tallies;
  for (const auto& [video, label] : frame_preds) ++tallies[video][label];
  VideoVotes votes;
  for (const auto& [video, counts] : tallies) {
    std::size_t best = counts.begin()->first;
    std::size_t best_count = 0;
    for (const auto& [label, n] : counts) {  // ascending label order
      if (n > best_count) {
        best = label;
        best_count = n;
      }
    }
    votes[video] = best;
  }
  return votes;
}

double video_accuracy(const VideoVotes& votes, const VideoVotes& truth) {
  if (votes.size() != truth.size()) {
    throw ConfigError("vote and truth video sets differ in size");
  }
  if (votes.empty()) throw ConfigError("video accuracy of an empty set is undefined");
  std::size_t correct = 0;
  for (const auto& [video, label] : votes) {
    const auto it = truth.find(video);
    if (it == truth.end()) throw ConfigError("video " + video + " has no ground truth");
    correct += it->second == label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(votes.size());
}

std::string format_predictions(std::span<const Prediction> preds) {
  std::string out;
  for (const auto& p : preds) {
    out += std::to_string(p.sample_index) + '\t' + p.video_id + '\t' + p.label + '\n';
  }
  return out;
}

std::vector<Prediction> parse_predictions(std::string_view text) {
  std::vector<Prediction> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) {
      throw ParseError(line_no, "expected sample_index<TAB>video_id<TAB>label");
    }
    Prediction p;
    const auto idx = line.substr(0, t1);
    const auto [ptr, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), p.sample_index);
    if (ec != std::errc() || ptr != idx.data() + idx.size()) {
      throw ParseError(line_no, "invalid sample index");
    }
    p.video_id = std::string(line.substr(t1 + 1, t2 - t1 - 1));
    p.label = std::string(line.substr(t2 + 1));
    if (p.label.empty()) throw ParseError(line_no, "empty label");
    out.push_back(std::move(p));
  }
  return out;
}

void save_predictions(std::span<const Prediction> preds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write predictions " + path.string());
  out << format_predictions(preds);
  if (!out) throw IoError("failed writing predictions " + path.string());
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_predictions(ss.str());
}

}  // namespace actrec
