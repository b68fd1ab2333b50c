// SPDX-License-Identifier: Apache-2.0
//
// Forward kernels for the seven layer types of the network, and backward
// kernels for the layers that are trained during head fine-tuning.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "actrec/rng.hpp"
#include "actrec/tensor.hpp"

namespace actrec {

struct ConvParams {
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  Tensor weights;  // out_channels x in_channels x kernel x kernel
  std::vector<float> bias;

  int in_channels() const;
  bool operator==(const ConvParams&) const = default;
};

struct LrnParams {
  double k = 2.0;
  int n = 5;  // window size across channels, odd
  double alpha = 1e-4;
  double beta = 0.75;
  bool operator==(const LrnParams&) const = default;
};

struct FcParams {
  int out_dim = 0;
  Tensor weights;  // out_dim x in_dim, row-major
  std::vector<float> bias;

  std::size_t in_dim() const;
  bool operator==(const FcParams&) const = default;
};

/// Output extent of a sliding window; throws ShapeError when the window does
/// not fit.
std::size_t window_output_size(std::size_t in, int kernel, int stride, int pad);

/// Cross-correlation (no kernel flip) with zero padding.
Tensor conv_forward(const Tensor& input, const ConvParams& p);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& upstream);

Tensor maxpool_forward(const Tensor& input, int kernel, int stride);

/// Cross-channel response normalization at each pixel.
Tensor lrn_forward(const Tensor& input, const LrnParams& p);

std::vector<float> fc_forward(std::span<const float> x, const FcParams& p);

struct FcGradients {
  std::vector<float> grad_x;
  Tensor grad_w;  // same shape as the weights
  std::vector<float> grad_b;
};

FcGradients fc_backward(std::span<const float> x, const FcParams& p,
                        std::span<const float> upstream);

struct DropoutResult {
  std::vector<float> out;
  std::vector<std::uint8_t> mask;  // 1 = kept
};

/// Inverted dropout: survivors are scaled by 1/(1-rate) in training mode;
/// inference mode is the identity with an all-ones mask.
DropoutResult dropout_forward(std::span<const float> x, double rate, bool train,
                              Rng& rng);
std::vector<float> dropout_backward(std::span<const float> upstream,
                                    std::span<const std::uint8_t> mask,
                                    double rate);

std::vector<float> softmax(std::span<const float> x);

struct CrossEntropyResult {
  double loss = 0.0;
  std::vector<float> grad_logits;  // d loss / d pre-softmax logits
};

inline constexpr double kCrossEntropyEpsilon = 1e-12;

CrossEntropyResult cross_entropy(std::span<const float> probs, std::size_t label);

}  // namespace actrec

namespace actrec {

/// Adds upstream (x) x into grad_w and upstream into grad_b, returning the
/// gradient w.r.t. x (empty when want_grad_x is false). Rows with zero
/// upstream are skipped.
std::vector<float> fc_backward_accumulate(std::span<const float> x, const FcParams& p,
                                          std::span<const float> upstream, Tensor& grad_w,
                                          std::span<float> grad_b, bool want_grad_x = true);

}  // namespace actrec
