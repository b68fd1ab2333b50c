// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <functional>

#include "actrec/classifiers.hpp"
#include "actrec/errors.hpp"
#include "actrec/rng.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace actrec {
namespace {

using fixtures::TempDir;

FeatureSet make_set(std::vector<std::string> classes,
                    const std::vector<std::pair<std::vector<float>, std::size_t>>& points) {
  FeatureSet s;
  s.classes = std::move(classes);
  s.dim = points.front().first.size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    s.records.push_back({points[i].first, points[i].second, "v" + std::to_string(i)});
  }
  return s;
}

FeatureSet xor_set() {
  return make_set({"a", "b"}, {{{1, 1}, 0}, {{-1, -1}, 0}, {{1, -1}, 1}, {{-1, 1}, 1}});
}

// Two clusters of unequal size along a shared direction. A homogeneous
// quadratic kernel cannot tell x from -x, so after centring the clusters
// must sit at different distances from the mean.
FeatureSet separable_set(std::uint64_t seed) {
  Rng rng(seed);
  FeatureSet s;
  s.dim = 2;
  s.classes = {"near", "far"};
  for (int i = 0; i < 18; ++i) {
    s.records.push_back({{static_cast<float>(2.0 + 0.3 * rng.normal()),
                          static_cast<float>(2.0 + 0.3 * rng.normal())},
                         0, "n" + std::to_string(i)});
  }
  for (int i = 0; i < 6; ++i) {
    s.records.push_back({{static_cast<float>(-2.0 + 0.3 * rng.normal()),
                          static_cast<float>(-2.0 + 0.3 * rng.normal())},
                         1, "f" + std::to_string(i)});
  }
  return s;
}

double accuracy_of(const FeatureSet& test, const std::function<std::size_t(std::span<const float>)>& f) {
  std::size_t hit = 0;
  for (const auto& r : test.records) hit += f(r.features) == r.label ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(test.records.size());
}

void expect_machine_invariants(const SvmModel& m) {
  for (const auto& pm : m.machines) {
    EXPECT_LT(std::abs(pm.dual_residual()), 1e-6);
    for (double a : pm.alpha) {
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, m.C + 1e-12);
    }
    EXPECT_LT(pm.positive, pm.negative);
  }
}

TEST(FeatureFileTest, RoundTripAndErrors) {
  TempDir dir;
  const FeatureSet set = fixtures::gaussian_clusters(3, 4, 5, 1.0, 0.1, 1);
  save_features(set, dir / "f.bin");
  EXPECT_EQ(load_features(dir / "f.bin"), set);

  FeatureSet bad = set;
  bad.records[2].label = 7;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = set;
  bad.records[1].features.pop_back();
  EXPECT_THROW(bad.validate(), ConfigError);

  {
    std::ofstream out(dir / "junk.bin", std::ios::binary);
    out << "JUNKJUNKJUNK";
  }
  EXPECT_THROW(load_features(dir / "junk.bin"), MagicError);
  EXPECT_THROW(load_features(dir / "none.bin"), IoError);
}

TEST(SvmTest, XorIsSeparatedByQuadraticKernel) {
  const FeatureSet x = xor_set();
  const SvmModel m = svm_train(x);
  ASSERT_EQ(m.machines.size(), 1u);
  for (const auto& r : x.records) EXPECT_EQ(svm_predict(m, r.features), r.label);
  expect_machine_invariants(m);
}

TEST(SvmTest, SeparableFixtureIsFitExactly) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const FeatureSet s = separable_set(seed);
    const SvmModel m = svm_train(s, SvmOptions{.C = 10.0});
    for (const auto& r : s.records) EXPECT_EQ(svm_predict(m, r.features), r.label) << seed;
    expect_machine_invariants(m);
  }
}

TEST(SvmTest, BinaryPredictionIsSignOfDecision) {
  const FeatureSet s = separable_set(9);
  const SvmModel m = svm_train(s);
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const std::vector<float> x{static_cast<float>(3 * rng.normal()), static_cast<float>(3 * rng.normal())};
    const double d = m.machines[0].decision(m.standardizer.apply(x), m.exponent);
    EXPECT_EQ(svm_predict(m, x), d >= 0 ? 0u : 1u);
  }
}

TEST(SvmTest, MulticlassInvariants) {
  const FeatureSet s = fixtures::gaussian_clusters(4, 10, 6, 3.0, 0.5, 3);
  const SvmModel m = svm_train(s);
  EXPECT_EQ(m.machines.size(), 6u);
  expect_machine_invariants(m);
  EXPECT_GE(accuracy_of(s, [&](auto x) { return svm_predict(m, x); }), 0.9);
  EXPECT_THROW(svm_train(s, SvmOptions{.C = 0.0}), ConfigError);
  EXPECT_THROW(svm_predict(m, std::vector<float>(5)), ShapeError);
}

TEST(SvmTest, KernelSymmetryAndGramPsd) {
  Rng rng(4);
  const FeatureSet s = fixtures::gaussian_clusters(3, 5, 4, 1.0, 0.5, 4);
  const SvmModel m = svm_train(s);
  std::vector<std::vector<double>> z;
  for (const auto& r : s.records) z.push_back(m.standardizer.apply(r.features));
  std::vector<std::vector<double>> gram(z.size(), std::vector<double>(z.size()));
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = 0; j < z.size(); ++j) {
      gram[i][j] = polynomial_kernel(z[i], z[j], 2);
      EXPECT_EQ(polynomial_kernel(z[i], z[j], 2), polynomial_kernel(z[j], z[i], 2));
    }
  }
  for (double ev : oracle::symmetric_eigenvalues(gram)) EXPECT_GE(ev, -1e-8);
}

TEST(SvmTest, ZeroSpreadDimensionPassesThrough) {
  FeatureSet s = xor_set();
  for (auto& r : s.records) r.features.push_back(4.0f);
  s.dim = 3;
  const SvmModel m = svm_train(s);
  EXPECT_EQ(m.standardizer.scale[2], 1.0);
  for (const auto& r : s.records) EXPECT_EQ(svm_predict(m, r.features), r.label);
}

TEST(KnnTest, Cases) {
  const FeatureSet s = make_set({"a", "b"}, {{{0}, 0}, {{1}, 0}, {{5}, 1}, {{9}, 1}});
  EXPECT_EQ(knn_predict(s, 1, std::vector<float>{5}), 1u);
  EXPECT_EQ(knn_predict(s, 3, std::vector<float>{2}), 0u);  // {a, a, b}
  // k = n on a balanced set: 2-2 vote tie goes to the nearest neighbour's label.
  EXPECT_EQ(knn_predict(s, 4, std::vector<float>{6}), 1u);
  EXPECT_EQ(knn_predict(s, 4, std::vector<float>{0.4f}), 0u);
  EXPECT_THROW(knn_predict(s, 0, std::vector<float>{0}), ConfigError);
  EXPECT_THROW(knn_predict(s, 5, std::vector<float>{0}), ConfigError);
}

TEST(KnnTest, OneNearestOnTrainingSetIsExact) {
  const FeatureSet s = fixtures::gaussian_clusters(5, 8, 3, 1.0, 1.0, 5);
  EXPECT_EQ(accuracy_of(s, [&](auto x) { return knn_predict(s, 1, x); }), 1.0);
}

TEST(TreeTest, PureInputIsOneLeaf) {
  const FeatureSet s = make_set({"a", "b"}, {{{0}, 1}, {{3}, 1}, {{4}, 1}});
  const auto root = tree_train(s);
  EXPECT_TRUE(root->is_leaf());
  EXPECT_EQ(tree_predict(*root, std::vector<float>{100}), 1u);
}

TEST(TreeTest, OneDimensionalThreshold) {
  const FeatureSet s = make_set({"a", "b"}, {{{0}, 0}, {{1}, 0}, {{10}, 1}, {{11}, 1}});
  const auto root = tree_train(s, TreeOptions{20, 1});
  ASSERT_FALSE(root->is_leaf());
  const auto& split = std::get<TreeSplit>(root->node);
  EXPECT_GT(split.threshold, 1.0);
  EXPECT_LT(split.threshold, 10.0);
  EXPECT_EQ(root->leaf_count(), 2u);
  EXPECT_EQ(tree_predict(*root, std::vector<float>{0.5f}), 0u);
  EXPECT_EQ(tree_predict(*root, std::vector<float>{10.5f}), 1u);
  EXPECT_EQ(tree_predict(*root, std::vector<float>{10.5f}), tree_predict(*root, std::vector<float>{10.5f}));
  EXPECT_EQ(accuracy_of(s, [&](auto x) { return tree_predict(*root, x); }), 1.0);
}

TEST(TreeTest, DepthZeroIsMajorityStump) {
  const FeatureSet s = make_set({"a", "b"}, {{{0}, 1}, {{1}, 0}, {{2}, 1}});
  const auto root = tree_train(s, TreeOptions{0, 1});
  EXPECT_TRUE(root->is_leaf());
  EXPECT_EQ(tree_predict(*root, std::vector<float>{1}), 1u);
  const auto tie = tree_train(make_set({"a", "b"}, {{{0}, 1}, {{1}, 0}}), TreeOptions{0, 1});
  EXPECT_EQ(tree_predict(*tie, std::vector<float>{0}), 0u);
}

TEST(TreeTest, DepthIsBounded) {
  const FeatureSet s = fixtures::gaussian_clusters(4, 20, 3, 0.5, 1.0, 6);
  for (int d : {1, 2, 3}) EXPECT_LE(tree_train(s, TreeOptions{d, 1})->depth(), d);
}

// Held-out accuracy on overlapping clusters: svm >= knn >= tree.
// High-dimensional like tap features; in a handful of dimensions the
// homogeneous kernel (no linear term) falls behind 3-NN on mean-shifted
// clusters, so the fixture stays in the wide regime.
TEST(ClassifierOrderingTest, SvmThenKnnThenTree) {
  const FeatureSet all = fixtures::gaussian_clusters(4, 60, 64, 1.0, 1.0, 2024);
  FeatureSet train{all.dim, all.classes, {}}, test{all.dim, all.classes, {}};
  for (std::size_t i = 0; i < all.records.size(); ++i) {
    (i % 3 == 0 ? test : train).records.push_back(all.records[i]);
  }
  const SvmModel svm = svm_train(train);
  const auto tree = tree_train(train);
  const double a_svm = accuracy_of(test, [&](auto x) { return svm_predict(svm, x); });
  const double a_knn = accuracy_of(test, [&](auto x) { return knn_predict(train, 3, x); });
  const double a_tree = accuracy_of(test, [&](auto x) { return tree_predict(*tree, x); });
  RecordProperty("svm", std::to_string(a_svm));
  RecordProperty("knn", std::to_string(a_knn));
  RecordProperty("tree", std::to_string(a_tree));
  EXPECT_GE(a_svm, a_knn) << a_svm << " " << a_knn << " " << a_tree;
  EXPECT_GE(a_knn, a_tree) << a_svm << " " << a_knn << " " << a_tree;
  EXPECT_LT(a_tree, 1.0);
}

}  // namespace
}  // namespace actrec
