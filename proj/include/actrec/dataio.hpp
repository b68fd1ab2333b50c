// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "actrec/tensor.hpp"

namespace actrec {

struct Sample {
  std::string image_path;
  std::string label;
  std::string video_id;  // empty for datasets without videos
  bool operator==(const Sample&) const = default;
};

struct DatasetManifest {
  std::vector<Sample> samples;
  std::vector<std::string> classes;  // sorted; position is the label index

  /// Label index of a class name; throws ConfigError if unknown.
  std::size_t label_index(std::string_view name) const;
  bool operator==(const DatasetManifest&) const = default;
};

/// Builds a manifest from samples, deriving the sorted class list. Rejects
/// duplicate paths and empty labels or paths.
DatasetManifest make_manifest(std::vector<Sample> samples);

/// Tab-separated `path<TAB>label<TAB>video_id`, one record per line; the
/// video field may be empty but its tab may not be omitted. Blank lines are
/// skipped. Relative image paths are kept as written.
DatasetManifest parse_manifest(std::string_view text);
DatasetManifest load_manifest(const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Interleaved 8-bit RGB, row-major.
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t at(std::size_t y, std::size_t x, int c) const {
    return rgb[(y * width + x) * 3 + static_cast<std::size_t>(c)];
  }
};

/// Decodes P2/P3/P5/P6 netpbm data with maxval 255. Graymaps are replicated
/// to three channels.
RawImage decode_pnm(std::span<const std::uint8_t> bytes);
RawImage decode_image(const std::filesystem::path& path);

/// Binary P6 encoding, mainly for fixtures.
std::vector<std::uint8_t> encode_ppm(const RawImage& img);
void save_ppm(const RawImage& img, const std::filesystem::path& path);

struct PreprocessConfig {
  int resize_to = 256;  // shorter side after resizing
  int crop = 227;
  std::array<float, 3> channel_means{0.0f, 0.0f, 0.0f};
};

/// Bilinear resize with half-pixel centers; output is floating point.
struct FloatImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> rgb;  // interleaved
};
FloatImage resize_bilinear(const RawImage& img, std::size_t out_w, std::size_t out_h);

/// Resize so the shorter side equals resize_to, center crop, subtract
/// channel means. Returns a 3 x crop x crop tensor.
Tensor preprocess(const RawImage& img, const PreprocessConfig& cfg);

/// Mean of every resized and cropped pixel, per channel, across all samples.
std::array<float, 3> compute_means(const DatasetManifest& manifest, const PreprocessConfig& cfg,
                                   const std::filesystem::path& base_dir = {});

/// Resolves a sample path against the manifest's directory.
std::filesystem::path resolve_image_path(const std::filesystem::path& base_dir,
                                         const std::string& image_path);

}  // namespace actrec
