// SPDX-License-Identifier: Apache-2.0
//
// Classical classifiers over extracted feature vectors: a polynomial-kernel
// SVM trained by SMO (one-vs-one), k-nearest neighbors, and a gain-ratio
// decision tree.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace actrec {

struct FeatureRecord {
  std::vector<float> features;
  std::size_t label = 0;
  std::string video_id;
  bool operator==(const FeatureRecord&) const = default;
};

struct FeatureSet {
  std::size_t dim = 0;
  std::vector<std::string> classes;
  std::vector<FeatureRecord> records;

  /// Throws ConfigError when a record breaks the dim/label invariants.
  void validate() const;
  bool operator==(const FeatureSet&) const = default;
};

inline constexpr std::uint32_t kFeatureFileVersion = 1;

/// "FEAT" | u32 version | u32 count | u32 dim | u32 class count |
/// classes as (u32 length, bytes) | per record: u32 label, (u32 length, bytes)
/// video id, dim f32. Little-endian.
void save_features(const FeatureSet& set, const std::filesystem::path& path);
FeatureSet load_features(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// SVM

struct SvmOptions {
  double C = 1.0;
  int exponent = 2;
  double tolerance = 1e-3;  // KKT violation gap at which SMO stops
  bool standardize = true;
  long max_iterations = 10'000'000;
};

/// Per-dimension (x - mean) / stddev using training statistics; dimensions
/// with zero spread only have their mean removed.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  std::vector<double> apply(std::span<const float> x) const;
};

/// K(x, y) = (x . y)^exponent, no additive constant.
double polynomial_kernel(std::span<const double> a, std::span<const double> b, int exponent);

/// Binary machine between classes `positive` (y = +1) and `negative`
/// (y = -1), positive < negative.
struct PairMachine {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::vector<std::vector<double>> support;  // standardized support vectors
  std::vector<double> alpha;
  std::vector<int> y;
  double bias = 0.0;
  long iterations = 0;

  double decision(std::span<const double> x, int exponent) const;
  /// Sum of alpha_i * y_i over the support vectors.
  double dual_residual() const;
};

struct SvmModel {
  std::size_t dim = 0;
  std::size_t class_count = 0;
  int exponent = 2;
  double C = 1.0;
  Standardizer standardizer;
  std::vector<PairMachine> machines;
};

SvmModel svm_train(const FeatureSet& train, const SvmOptions& opts = {});
std::size_t svm_predict(const SvmModel& model, std::span<const float> x);

// ---------------------------------------------------------------------------
// k-nearest neighbors

std::size_t knn_predict(const FeatureSet& train, std::size_t k, std::span<const float> x);

// ---------------------------------------------------------------------------
// Decision tree

struct TreeNode;

struct TreeLeaf {
  std::size_t label = 0;
};

struct TreeSplit {
  std::size_t feature = 0;
  double threshold = 0.0;  // descend left iff x[feature] <= threshold
  std::unique_ptr<TreeNode> left;
  std::unique_ptr<TreeNode> right;
};

struct TreeNode {
  std::variant<TreeLeaf, TreeSplit> node;

  bool is_leaf() const { return std::holds_alternative<TreeLeaf>(node); }
  int depth() const;
  std::size_t leaf_count() const;
};

struct TreeOptions {
  int max_depth = 20;
  std::size_t min_leaf = 2;  // nodes smaller than this become leaves
};

std::unique_ptr<TreeNode> tree_train(const FeatureSet& train, const TreeOptions& opts = {});
std::size_t tree_predict(const TreeNode& root, std::span<const float> x);

}  // namespace actrec
