// SPDX-License-Identifier: Apache-2.0
#include "support/fixtures.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <random>

#include "actrec/finetune.hpp"

namespace actrec::fixtures {
namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() /
          ("actrec_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string_view tiny_arch_text() {
  return R"(input 3x16x16
1 conv out=4 k=3 s=1 p=0
2 relu
3 maxpool k=2 s=2
4 lrn n=5 k=2 alpha=0.0001 beta=0.75
5 conv out=6 k=3 s=1 p=1
6 relu
7 maxpool k=3 s=2
8 lrn n=5 k=2 alpha=0.0001 beta=0.75
9 conv out=6 k=3 s=1 p=1
10 relu
11 conv out=6 k=3 s=1 p=1
12 relu
13 conv out=4 k=3 s=1 p=1
14 relu
15 maxpool k=2 s=1
16 fc out=16
17 relu
18 dropout rate=0.5
19 fc out=16
20 relu
21 dropout rate=0.5
22 fc out=10
23 softmax
taps 16,19
)";
}

ArchSpec tiny_arch() { return parse_arch(tiny_arch_text()); }

RawImage constant_image(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g,
                        std::uint8_t b) {
  RawImage img{w, h, {}};
  img.rgb.reserve(w * h * 3);
  for (std::size_t i = 0; i < w * h; ++i) {
    img.rgb.push_back(r);
    img.rgb.push_back(g);
    img.rgb.push_back(b);
  }
  return img;
}

ConfusionMatrix published_confusion() {
  return ConfusionMatrix({"LFT", "DIV", "SKT", "KCK", "GYM", "GLF", "WLK", "RUN", "HRB"},
                         {{127, 0, 0, 0, 0, 0, 0, 0, 0},
                          {0, 165, 0, 0, 0, 0, 0, 0, 0},
                          {0, 0, 161, 0, 0, 0, 35, 14, 0},
                          {0, 0, 0, 68, 0, 0, 3, 20, 0},
                          {0, 63, 0, 0, 485, 0, 0, 0, 0},
                          {0, 0, 0, 60, 0, 120, 60, 0, 0},
                          {0, 0, 0, 184, 0, 0, 440, 3, 0},
                          {0, 0, 0, 132, 0, 0, 63, 0, 0},
                          {0, 0, 0, 1, 0, 0, 30, 0, 149}});
}

std::vector<VideoSplitRow> published_split() {
  return {{"Diving", 13, 3},      {"Golf Swinging", 21, 4}, {"Horseback Riding", 11, 3},
          {"Kicking", 21, 4},     {"Lifting", 12, 3},       {"Running", 12, 3},
          {"Skateboarding", 12, 3}, {"Swinging (Gymnastics)", 28, 7}, {"Walking", 17, 5}};
}

DatasetManifest published_split_manifest(std::size_t frames) {
  std::vector<Sample> samples;
  for (const auto& row : published_split()) {
    const std::size_t videos = row.train_videos + row.test_videos;
    for (std::size_t v = 0; v < videos; ++v) {
      const std::string vid = row.activity + "/v" + std::to_string(v);
      for (std::size_t f = 0; f < frames; ++f) {
        samples.push_back({vid + "/f" + std::to_string(f) + ".ppm", row.activity, vid});
      }
    }
  }
  return make_manifest(std::move(samples));
}

FeatureSet gaussian_clusters(std::size_t classes, std::size_t per_class, std::size_t dim,
                             double centre_spread, double noise, std::uint64_t seed) {
  Rng rng(seed);
  FeatureSet set;
  set.dim = dim;
  std::vector<std::vector<double>> centres(classes, std::vector<double>(dim));
  for (std::size_t c = 0; c < classes; ++c) {
    set.classes.push_back("c" + std::to_string(c));
    for (double& v : centres[c]) v = centre_spread * rng.normal();
  }
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      FeatureRecord r;
      r.label = c;
      r.video_id = "v" + std::to_string(c) + "_" + std::to_string(i);
      for (std::size_t d = 0; d < dim; ++d) {
        r.features.push_back(static_cast<float>(centres[c][d] + noise * rng.normal()));
      }
      set.records.push_back(std::move(r));
    }
  }
  return set;
}

DatasetManifest write_toy_images(const fs::path& dir, std::size_t side) {
  std::vector<Sample> samples;
  for (int label = 0; label < 2; ++label) {
    for (int k = 0; k < 2; ++k) {
      RawImage img = constant_image(side, side, 20, 20, 20);
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          const bool bright = label == 0 ? x < side / 2 : x >= side / 2;
          if (!bright) continue;
          for (int c = 0; c < 3; ++c) {
            img.rgb[(y * side + x) * 3 + static_cast<std::size_t>(c)] =
                static_cast<std::uint8_t>(200 + 20 * k);
          }
        }
      }
      const std::string name = "toy_" + std::to_string(label) + "_" + std::to_string(k) + ".ppm";
      save_ppm(img, dir / name);
      samples.push_back({name, label == 0 ? "left" : "right", name});
    }
  }
  return make_manifest(std::move(samples));
}

Network toy_finetune_network(std::uint64_t seed) {
  Rng rng(seed);
  Rng head_rng = rng.substream("head");
  Network net = replace_head(init_weights(tiny_arch(), rng), {{16, 64}, {19, 64}}, 2, head_rng);
  const int classifier = 22;
  for (int i = 1; i <= net.spec.layer_count(); ++i) {
    Tensor* w = nullptr;
    switch (net.spec.layer(i).kind) {
      case LayerKind::Conv:
        w = &net.conv(i).weights;
        break;
      case LayerKind::Fc:
        w = &net.fc(i).weights;
        break;
      default:
        continue;
    }
    const double fan_in = static_cast<double>(w->size() / w->shape()[0]);
    const double sd = i == classifier ? 0.01 : std::sqrt(2.0 / fan_in);
    for (float& v : w->storage()) v = static_cast<float>(sd * rng.normal());
  }
  return net;
}

}  // namespace actrec::fixtures
