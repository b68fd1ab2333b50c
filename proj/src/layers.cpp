// SPDX-License-Identifier: Apache-2.0
#include "actrec/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "actrec/errors.hpp"

namespace actrec {

int ConvParams::in_channels() const {
  return weights.shape().rank() == 4 ? static_cast<int>(weights.shape()[1]) : 0;
}

std::size_t FcParams::in_dim() const {
  return weights.shape().rank() == 2 ? weights.shape()[1] : 0;
}

std::size_t window_output_size(std::size_t in, int kernel, int stride, int pad) {
  if (kernel <= 0 || stride <= 0 || pad < 0) {
    throw ConfigError("window parameters must be positive (kernel " +
                      std::to_string(kernel) + ", stride " + std::to_string(stride) +
                      ", pad " + std::to_string(pad) + ")");
  }
  const std::size_t padded = in + 2 * static_cast<std::size_t>(pad);
  if (padded < static_cast<std::size_t>(kernel)) {
    throw ShapeError("window " + std::to_string(kernel) + " exceeds input extent " +
                     std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

namespace {

void require_rank3(const Tensor& t, const char* op) {
  if (t.shape().rank() != 3) {
    throw ShapeError(std::string(op) + " expects a CxHxW tensor, got " +
                     t.shape().str());
  }
}

// Unfolds padded input patches into a (C*k*k) x (H'*W') matrix.
std::vector<float> im2col(const Tensor& in, int kernel, int stride, int pad,
                          std::size_t out_h, std::size_t out_w) {
  const std::size_t channels = in.shape()[0];
  const long h = static_cast<long>(in.shape()[1]);
  const long w = static_cast<long>(in.shape()[2]);
  const std::size_t cols = out_h * out_w;
  std::vector<float> col(channels * kernel * kernel * cols, 0.0f);
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (int dy = 0; dy < kernel; ++dy) {
      for (int dx = 0; dx < kernel; ++dx, ++row) {
        float* dst = col.data() + row * cols;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const long iy = static_cast<long>(oy) * stride + dy - pad;
          if (iy < 0 || iy >= h) continue;
          const float* src = in.data().data() + (c * static_cast<std::size_t>(h) + static_cast<std::size_t>(iy)) * static_cast<std::size_t>(w);
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const long ix = static_cast<long>(ox) * stride + dx - pad;
            if (ix >= 0 && ix < w) dst[oy * out_w + ox] = src[ix];
          }
        }
      }
    }
  }
  return col;
}

}  // namespace

Tensor conv_forward(const Tensor& input, const ConvParams& p) {
  require_rank3(input, "conv_forward");
  const auto& ws = p.weights.shape();
  if (ws.rank() != 4 || static_cast<int>(ws[0]) != p.out_channels ||
      static_cast<int>(ws[2]) != p.kernel || static_cast<int>(ws[3]) != p.kernel ||
      p.bias.size() != static_cast<std::size_t>(p.out_channels)) {
    throw ConfigError("convolution parameters are inconsistent with their declared sizes");
  }
  if (ws[1] != input.shape()[0]) {
    throw ConfigError("convolution expects " + std::to_string(ws[1]) +
                      " input channels, got " + std::to_string(input.shape()[0]));
  }
  const std::size_t out_h = window_output_size(input.shape()[1], p.kernel, p.stride, p.pad);
  const std::size_t out_w = window_output_size(input.shape()[2], p.kernel, p.stride, p.pad);
  const std::size_t cols = out_h * out_w;
  const std::size_t rows = ws[1] * ws[2] * ws[3];
  const std::vector<float> col = im2col(input, p.kernel, p.stride, p.pad, out_h, out_w);

  Tensor out(Shape{static_cast<std::size_t>(p.out_channels), out_h, out_w});
  float* out_data = out.data().data();
  const float* wdata = p.weights.data().data();

  // Blocks of output channels share each streamed im2col row.
  constexpr std::size_t kBlock = 8;
  const std::size_t outc = static_cast<std::size_t>(p.out_channels);
  for (std::size_t o0 = 0; o0 < outc; o0 += kBlock) {
    const std::size_t o1 = std::min(outc, o0 + kBlock);
    for (std::size_t o = o0; o < o1; ++o) {
      std::fill_n(out_data + o * cols, cols, p.bias[o]);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const float* src = col.data() + r * cols;
      for (std::size_t o = o0; o < o1; ++o) {
        const float wv = wdata[o * rows + r];
        float* dst = out_data + o * cols;
        for (std::size_t i = 0; i < cols; ++i) dst[i] += wv * src[i];
      }
    }
  }
  return out;
}

Tensor relu_forward(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.storage()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& upstream) {
  if (x.shape() != upstream.shape()) {
    throw ShapeError("relu_backward shape mismatch: " + x.shape().str() + " vs " +
                     upstream.shape().str());
  }
  Tensor grad = upstream;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(x[i] > 0.0f)) grad[i] = 0.0f;
  }
  return grad;
}

Tensor maxpool_forward(const Tensor& input, int kernel, int stride) {
  require_rank3(input, "maxpool_forward");
  const std::size_t channels = input.shape()[0];
  const std::size_t out_h = window_output_size(input.shape()[1], kernel, stride, 0);
  const std::size_t out_w = window_output_size(input.shape()[2], kernel, stride, 0);
  Tensor out(Shape{channels, out_h, out_w});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        for (int dy = 0; dy < kernel; ++dy) {
          for (int dx = 0; dx < kernel; ++dx) {
            best = std::max(best, input.at(c, oy * stride + dy, ox * stride + dx));
          }
        }
        out.at(c, oy, ox) = best;
      }
    }
  }
  return out;
}

Tensor lrn_forward(const Tensor& input, const LrnParams& p) {
  require_rank3(input, "lrn_forward");
  if (p.n < 1 || p.n % 2 == 0) {
    throw ConfigError("LRN window size must be a positive odd integer, got " +
                      std::to_string(p.n));
  }
  if (p.alpha < 0.0 || p.beta < 0.0) {
    throw ConfigError("LRN alpha and beta must be non-negative");
  }
  const long channels = static_cast<long>(input.shape()[0]);
  const std::size_t plane = input.shape()[1] * input.shape()[2];
  const long half = p.n / 2;
  Tensor out(input.shape());
  const float* in = input.data().data();
  float* dst = out.data().data();
  std::vector<double> sq(static_cast<std::size_t>(channels));
  for (std::size_t px = 0; px < plane; ++px) {
    for (long c = 0; c < channels; ++c) {
      const double a = in[c * plane + px];
      sq[c] = a * a;
    }
    for (long i = 0; i < channels; ++i) {
      double sum = 0.0;
      for (long j = std::max(0L, i - half); j <= std::min(channels - 1, i + half); ++j) {
        sum += sq[j];
      }
      const double base = p.k + p.alpha * sum;
      if (!(base > 0.0)) {
        throw NumericError("LRN denominator is not positive at channel " +
                           std::to_string(i));
      }
      dst[i * plane + px] =
          static_cast<float>(in[i * plane + px] / std::pow(base, p.beta));
    }
  }
  return out;
}

std::vector<float> fc_forward(std::span<const float> x, const FcParams& p) {
  const auto& ws = p.weights.shape();
  if (ws.rank() != 2 || static_cast<int>(ws[0]) != p.out_dim ||
      p.bias.size() != static_cast<std::size_t>(p.out_dim)) {
    throw ConfigError("fully connected parameters are inconsistent with out_dim " +
                      std::to_string(p.out_dim));
  }
  if (x.size() != ws[1]) {
    throw ShapeError("fully connected layer expects input length " +
                     std::to_string(ws[1]) + ", got " + std::to_string(x.size()));
  }
  const std::size_t in = ws[1];
  std::vector<float> out(static_cast<std::size_t>(p.out_dim));
  const float* w = p.weights.data().data();
  for (std::size_t o = 0; o < out.size(); ++o) {
    const float* row = w + o * in;
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * x[i];
    out[o] = static_cast<float>(acc + p.bias[o]);
  }
  return out;
}

FcGradients fc_backward(std::span<const float> x, const FcParams& p,
                        std::span<const float> upstream) {
  const auto& ws = p.weights.shape();
  if (ws.rank() != 2 || x.size() != ws[1] || upstream.size() != ws[0]) {
    throw ShapeError("fc_backward dimension mismatch: weights " + ws.str() +
                     ", input " + std::to_string(x.size()) + ", upstream " +
                     std::to_string(upstream.size()));
  }
  const std::size_t out_dim = ws[0];
  const std::size_t in = ws[1];
  FcGradients g;
  g.grad_b.assign(upstream.begin(), upstream.end());
  g.grad_w = Tensor(ws);
  std::vector<double> gx(in, 0.0);
  const float* w = p.weights.data().data();
  float* gw = g.grad_w.data().data();
  for (std::size_t o = 0; o < out_dim; ++o) {
    const float u = upstream[o];
    if (u == 0.0f) continue;
    const float* row = w + o * in;
    float* grow = gw + o * in;
    for (std::size_t i = 0; i < in; ++i) {
      gx[i] += static_cast<double>(row[i]) * u;
      grow[i] = u * x[i];
    }
  }
  g.grad_x.assign(gx.begin(), gx.end());
  return g;
}

DropoutResult dropout_forward(std::span<const float> x, double rate, bool train,
                              Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  DropoutResult r;
  r.out.assign(x.begin(), x.end());
  r.mask.assign(x.size(), 1);
  if (!train || rate == 0.0) return r;
  const float scale = static_cast<float>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (rng.uniform() < rate) {
      r.mask[i] = 0;
      r.out[i] = 0.0f;
    } else {
      r.out[i] *= scale;
    }
  }
  return r;
}

std::vector<float> dropout_backward(std::span<const float> upstream,
                                    std::span<const std::uint8_t> mask, double rate) {
  if (upstream.size() != mask.size()) {
    throw ShapeError("dropout_backward mask length mismatch");
  }
  const float scale = static_cast<float>(1.0 / (1.0 - rate));
  std::vector<float> g(upstream.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = mask[i] ? upstream[i] * (rate == 0.0 ? 1.0f : scale) : 0.0f;
  }
  return g;
}

std::vector<float> softmax(std::span<const float> x) {
  std::vector<float> out(x.size());
  if (x.empty()) return out;
  const float mx = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  std::vector<double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(static_cast<double>(x[i]) - mx);
    total += e[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(e[i] / total);
  return out;
}

CrossEntropyResult cross_entropy(std::span<const float> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw ConfigError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(probs.size()) + " classes");
  }
  CrossEntropyResult r;
  r.loss = -std::log(std::max(static_cast<double>(probs[label]), kCrossEntropyEpsilon));
  r.grad_logits.assign(probs.begin(), probs.end());
  r.grad_logits[label] -= 1.0f;
  return r;
}

}  // namespace actrec

namespace actrec {

std::vector<float> fc_backward_accumulate(std::span<const float> x, const FcParams& p,
                                          std::span<const float> upstream, Tensor& grad_w,
                                          std::span<float> grad_b, bool want_grad_x) {
  const auto& ws = p.weights.shape();
  if (ws.rank() != 2 || x.size() != ws[1] || upstream.size() != ws[0] ||
      grad_w.shape() != ws || grad_b.size() != ws[0]) {
    throw ShapeError("fc_backward_accumulate dimension mismatch for weights " + ws.str());
  }
  const std::size_t in = ws[1];
  std::vector<double> gx(want_grad_x ? in : 0, 0.0);
  const float* w = p.weights.data().data();
  float* gw = grad_w.data().data();
  for (std::size_t o = 0; o < ws[0]; ++o) {
    const float u = upstream[o];
    grad_b[o] += u;
    if (u == 0.0f) continue;
    float* grow = gw + o * in;
    for (std::size_t i = 0; i < in; ++i) grow[i] += u * x[i];
    if (want_grad_x) {
      const float* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) gx[i] += static_cast<double>(row[i]) * u;
    }
  }
  return std::vector<float>(gx.begin(), gx.end());
}

}  // namespace actrec
