// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "actrec/classifiers.hpp"
#include "actrec/dataio.hpp"
#include "actrec/eval.hpp"
#include "actrec/network.hpp"

namespace actrec::fixtures {

/// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Same 23-layer layout as the default architecture on a 3x16x16 input with
/// narrow layers (fc16/fc19 = 16, fc22 = 10).
std::string_view tiny_arch_text();
ArchSpec tiny_arch();

RawImage constant_image(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g,
                        std::uint8_t b);

/// The published 9-class frame confusion matrix, in its printed class order.
ConfusionMatrix published_confusion();

struct VideoSplitRow {
  std::string activity;
  std::size_t train_videos;
  std::size_t test_videos;
};
/// Per-activity video counts of the published UCF Sports split.
std::vector<VideoSplitRow> published_split();

/// Manifest with the published per-class video totals, `frames` frames each.
DatasetManifest published_split_manifest(std::size_t frames);

/// Isotropic Gaussian clusters with random centres.
FeatureSet gaussian_clusters(std::size_t classes, std::size_t per_class, std::size_t dim,
                             double centre_spread, double noise, std::uint64_t seed);

/// Two classes, two images each: left-bright versus right-bright patterns.
/// Writes the images and returns the manifest (paths relative to `dir`).
DatasetManifest write_toy_images(const std::filesystem::path& dir, std::size_t side);

/// Tiny network for the head-training fixture: fan-in scaled Gaussian
/// weights, head widened to 64, and a 2-way classifier drawn at 0.01 so the
/// first loss sits near ln 2.
Network toy_finetune_network(std::uint64_t seed);

}  // namespace actrec::fixtures
