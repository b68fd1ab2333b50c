// SPDX-License-Identifier: Apache-2.0
//
// Sequential network description, shape inference, forward passes with
// feature taps, and weight (de)serialization. Layer numbers are 1-based and
// follow the row numbers of the reference architecture table.
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "actrec/layers.hpp"
#include "actrec/rng.hpp"
#include "actrec/tensor.hpp"

namespace actrec {

enum class LayerKind { Conv, Relu, MaxPool, Lrn, Fc, Dropout, Softmax };

std::string_view to_string(LayerKind kind);

struct ConvSpec {
  int out = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  bool operator==(const ConvSpec&) const = default;
};
struct PoolSpec {
  int kernel = 0;
  int stride = 1;
  bool operator==(const PoolSpec&) const = default;
};
struct FcSpec {
  int out = 0;
  bool operator==(const FcSpec&) const = default;
};
struct DropoutSpec {
  double rate = 0.5;
  bool operator==(const DropoutSpec&) const = default;
};

using LayerConfig =
    std::variant<std::monostate, ConvSpec, PoolSpec, LrnParams, FcSpec, DropoutSpec>;

struct LayerSpec {
  int index = 0;
  LayerKind kind = LayerKind::Relu;
  LayerConfig config;

  const ConvSpec& conv() const { return std::get<ConvSpec>(config); }
  const PoolSpec& pool() const { return std::get<PoolSpec>(config); }
  const LrnParams& lrn() const { return std::get<LrnParams>(config); }
  const FcSpec& fc() const { return std::get<FcSpec>(config); }
  const DropoutSpec& dropout() const { return std::get<DropoutSpec>(config); }

  bool operator==(const LayerSpec&) const = default;
};

struct ArchSpec {
  Shape input;
  std::vector<LayerSpec> layers;
  std::vector<int> taps;  // ascending fc layer indices

  const LayerSpec& layer(int index) const;
  LayerSpec& layer(int index);
  int layer_count() const { return static_cast<int>(layers.size()); }

  bool operator==(const ArchSpec&) const = default;
};

/// Parses the line-oriented architecture format:
///   input 3x227x227
///   1 conv out=96 k=11 s=4 p=0
///   taps 16,19
/// Blank lines and '#' comments are ignored. Throws ParseError.
ArchSpec parse_arch(std::string_view text);
ArchSpec load_arch(const std::filesystem::path& path);
std::string format_arch(const ArchSpec& spec);
void save_arch(const ArchSpec& spec, const std::filesystem::path& path);

/// The 23-layer reference architecture with taps at 16 and 19.
ArchSpec default_arch();
std::string_view default_arch_text();

/// Output shape of every layer, in order. Throws ShapeError naming the first
/// layer whose input is incompatible.
std::vector<Shape> infer_shapes(const ArchSpec& spec);

/// Checks structural invariants beyond parsing: contiguous numbering, taps on
/// fc layers, and a valid shape chain.
void validate_arch(const ArchSpec& spec);

using LayerParams = std::variant<std::monostate, ConvParams, FcParams>;

struct Network {
  ArchSpec spec;
  std::vector<LayerParams> params;  // one slot per layer; empty for parameterless kinds

  ConvParams& conv(int index);
  const ConvParams& conv(int index) const;
  FcParams& fc(int index);
  const FcParams& fc(int index) const;

  bool operator==(const Network&) const = default;
};

/// All parameters zero, shaped from the spec.
Network zero_network(const ArchSpec& spec);

/// Conv and fc weights drawn from N(0, stddev^2), biases zero.
Network init_weights(const ArchSpec& spec, Rng& rng, double stddev = 0.01);

/// Throws ShapeError if any parameter tensor disagrees with the spec.
void validate_network(const Network& net);

enum class Mode { Train, Infer };

struct FeatureSegment {
  int layer = 0;
  std::size_t length = 0;
  bool operator==(const FeatureSegment&) const = default;
};

struct FeatureVector {
  std::vector<float> values;
  std::vector<FeatureSegment> provenance;
  bool operator==(const FeatureVector&) const = default;
};

struct ForwardResult {
  std::vector<float> logits;  // output of the last fc layer
  std::vector<float> output;  // softmax(logits) when the network ends in softmax
  std::map<int, FeatureVector> taps;
};

/// Runs every layer. Taps record the fc output after the affine map and
/// before any following nonlinearity. `rng` is only consulted by dropout in
/// training mode.
ForwardResult forward(const Network& net, const Tensor& input, Mode mode,
                      Rng* rng = nullptr);
ForwardResult forward(const Network& net, const Tensor& input, Mode mode, Rng* rng,
                      std::span<const int> taps);

/// Runs layers first..last (inclusive, 1-based) on `x`.
Tensor forward_range(const Network& net, Tensor x, int first, int last, Mode mode,
                     Rng* rng = nullptr);

/// Index of the first fc layer; everything before it is the frozen backbone.
int first_fc_index(const ArchSpec& spec);

FeatureVector concat_features(std::span<const FeatureVector> parts);

inline constexpr std::uint32_t kWeightsVersion = 1;

void save_weights(const Network& net, const std::filesystem::path& path);
Network load_weights(const ArchSpec& spec, const std::filesystem::path& path);

}  // namespace actrec
