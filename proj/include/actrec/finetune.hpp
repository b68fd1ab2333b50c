// SPDX-License-Identifier: Apache-2.0
//
// Head-only fine-tuning: the convolutional backbone stays frozen while the
// fully connected head is resized and trained by minibatch SGD on softmax
// cross-entropy. Also hosts the midpoint layer-size sweep.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "actrec/dataio.hpp"
#include "actrec/errors.hpp"
#include "actrec/network.hpp"

namespace actrec {

struct FinetuneConfig {
  double learning_rate = 1e-4;
  long iterations = 20'000;
  int batch_size = 32;
  std::map<int, int> head_sizes;  // fc layer index -> output size overrides
  std::vector<int> trainable;     // fc layer indices; empty means every fc layer
  std::uint64_t seed = 0;
  long log_stride = 100;
};

struct LossEntry {
  long iteration = 0;
  double loss = 0.0;
  bool operator==(const LossEntry&) const = default;
};
using LossLog = std::vector<LossEntry>;

/// `iteration<TAB>loss` lines.
std::string format_loss_log(const LossLog& log);

/// Resizes the fc head. The last fc layer becomes the classifier with
/// `num_classes` outputs unless a larger size is requested explicitly. A fc
/// layer gets fresh N(0, 0.01^2) weights when its input or output size
/// changes, and the classifier is always fresh; the backbone is copied
/// unchanged.
Network replace_head(const Network& net, const std::map<int, int>& head_sizes,
                     std::size_t num_classes, Rng& rng);

/// Flattened output of every layer before the first fc layer.
std::vector<float> backbone_features(const Network& net, const Tensor& input);

/// Gradient buffers for the fc layers of the head.
struct HeadGradients {
  std::map<int, Tensor> weights;
  std::map<int, std::vector<float>> bias;

  /// Zeroed buffers for `layers` (fc indices).
  static HeadGradients zeros(const Network& net, std::span<const int> layers);
};

/// Runs the head (first fc layer to the final softmax) on one backbone output
/// and adds d(cross-entropy)/d(params) into `acc` for the layers it holds.
/// Returns the loss. Training mode draws dropout masks from `rng`.
double accumulate_head_gradients(const Network& net, std::span<const float> backbone_out,
                                 std::size_t label, Mode mode, Rng* rng, HeadGradients& acc);

struct TrainResult {
  Network net;
  LossLog log;
};

/// SGD on cached backbone outputs. Only fc layers in cfg.trainable change.
/// Throws DivergedError when the loss stops being finite.
TrainResult train_head_on_features(Network net, std::span<const std::vector<float>> features,
                                   std::span<const std::size_t> labels,
                                   const FinetuneConfig& cfg);

/// Decodes and preprocesses every manifest image, caches the frozen backbone
/// output, then trains. Labels follow the manifest's class order.
TrainResult train_head(Network net, const DatasetManifest& train, const FinetuneConfig& cfg,
                       const PreprocessConfig& pre, const std::filesystem::path& base_dir = {});

// ---------------------------------------------------------------------------
// Layer-size sweep

struct SweepStep {
  int size = 0;
  double accuracy = 0.0;
  bool operator==(const SweepStep&) const = default;
};

struct SweepResult {
  int best_size = 0;
  double best_accuracy = 0.0;
  std::vector<SweepStep> trace;  // evaluation order
};

/// An evaluation that failed; the original exception is nested.
class SweepError : public Error {
 public:
  SweepError(int size, const std::string& what)
      : Error("layer size " + std::to_string(size) + ": " + what), size_(size) {}
  int size() const noexcept { return size_; }

 private:
  int size_;
};

/// Nearest positive multiple of `granularity`, halves rounding up.
int round_to_granularity(double size, int granularity);

/// Evaluates the three initial sizes, then each round re-centres on the
/// midpoint between the best size and its better-scoring neighbour and
/// evaluates that midpoint plus the two points halfway to either side.
/// Sizes already evaluated are never evaluated again.
SweepResult sweep_layer_size(const std::function<double(int)>& evaluate,
                             std::array<int, 3> initial, int rounds, int granularity = 512);

}  // namespace actrec
