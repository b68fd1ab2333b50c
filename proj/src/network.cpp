// SPDX-License-Identifier: Apache-2.0
#include "actrec/network.hpp"

#include <algorithm>

#include "actrec/errors.hpp"

namespace actrec {

ConvParams& Network::conv(int index) {
  return const_cast<ConvParams&>(std::as_const(*this).conv(index));
}

const ConvParams& Network::conv(int index) const {
  const auto* p = index >= 1 && index <= static_cast<int>(params.size())
                      ? std::get_if<ConvParams>(&params[index - 1])
                      : nullptr;
  if (!p) throw ConfigError("layer " + std::to_string(index) + " is not a conv layer");
  return *p;
}

FcParams& Network::fc(int index) {
  return const_cast<FcParams&>(std::as_const(*this).fc(index));
}

const FcParams& Network::fc(int index) const {
  const auto* p = index >= 1 && index <= static_cast<int>(params.size())
                      ? std::get_if<FcParams>(&params[index - 1])
                      : nullptr;
  if (!p) throw ConfigError("layer " + std::to_string(index) + " is not an fc layer");
  return *p;
}

Network zero_network(const ArchSpec& spec) {
  const std::vector<Shape> shapes = infer_shapes(spec);
  Network net;
  net.spec = spec;
  net.params.resize(spec.layers.size());
  Shape in = spec.input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind == LayerKind::Conv) {
      ConvParams p;
      p.out_channels = l.conv().out;
      p.kernel = l.conv().kernel;
      p.stride = l.conv().stride;
      p.pad = l.conv().pad;
      p.weights = Tensor(Shape{static_cast<std::size_t>(p.out_channels), in[0],
                               static_cast<std::size_t>(p.kernel),
                               static_cast<std::size_t>(p.kernel)});
      p.bias.assign(static_cast<std::size_t>(p.out_channels), 0.0f);
      net.params[i] = std::move(p);
    } else if (l.kind == LayerKind::Fc) {
      FcParams p;
      p.out_dim = l.fc().out;
      p.weights = Tensor(Shape{static_cast<std::size_t>(p.out_dim), in.element_count()});
      p.bias.assign(static_cast<std::size_t>(p.out_dim), 0.0f);
      net.params[i] = std::move(p);
    }
    in = shapes[i];
  }
  return net;
}

Network init_weights(const ArchSpec& spec, Rng& rng, double stddev) {
  Network net = zero_network(spec);
  for (auto& slot : net.params) {
    Tensor* w = nullptr;
    if (auto* c = std::get_if<ConvParams>(&slot)) w = &c->weights;
    if (auto* f = std::get_if<FcParams>(&slot)) w = &f->weights;
    if (!w) continue;
    for (float& v : w->storage()) v = static_cast<float>(stddev * rng.normal());
  }
  return net;
}

void validate_network(const Network& net) {
  const std::vector<Shape> shapes = infer_shapes(net.spec);
  if (net.params.size() != net.spec.layers.size()) {
    throw ShapeError("network has " + std::to_string(net.params.size()) +
                     " parameter slots for " + std::to_string(net.spec.layers.size()) +
                     " layers");
  }
  Shape in = net.spec.input;
  for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
    const LayerSpec& l = net.spec.layers[i];
    const std::string where = "layer " + std::to_string(l.index);
    if (l.kind == LayerKind::Conv) {
      const auto* p = std::get_if<ConvParams>(&net.params[i]);
      const auto k = static_cast<std::size_t>(l.conv().kernel);
      if (!p || p->weights.shape() != Shape{static_cast<std::size_t>(l.conv().out), in[0], k, k} ||
          p->bias.size() != static_cast<std::size_t>(l.conv().out) ||
          p->out_channels != l.conv().out || p->kernel != l.conv().kernel ||
          p->stride != l.conv().stride || p->pad != l.conv().pad) {
        throw ShapeError(where + ": conv parameters do not match the architecture");
      }
    } else if (l.kind == LayerKind::Fc) {
      const auto* p = std::get_if<FcParams>(&net.params[i]);
      if (!p || p->out_dim != l.fc().out ||
          p->weights.shape() != Shape{static_cast<std::size_t>(l.fc().out), in.element_count()} ||
          p->bias.size() != static_cast<std::size_t>(l.fc().out)) {
        throw ShapeError(where + ": fc parameters do not match the architecture");
      }
    } else if (!std::holds_alternative<std::monostate>(net.params[i])) {
      throw ShapeError(where + ": parameterless layer carries parameters");
    }
    in = shapes[i];
  }
}

namespace {

Tensor apply_layer(const Network& net, const LayerSpec& l, Tensor x, Mode mode, Rng* rng) {
  switch (l.kind) {
    case LayerKind::Conv:
      return conv_forward(x, net.conv(l.index));
    case LayerKind::Relu:
      return relu_forward(x);
    case LayerKind::MaxPool:
      return maxpool_forward(x, l.pool().kernel, l.pool().stride);
    case LayerKind::Lrn:
      return lrn_forward(x, l.lrn());
    case LayerKind::Fc: {
      auto out = fc_forward(x.data(), net.fc(l.index));
      const std::size_t n = out.size();
      return Tensor(Shape{n}, std::move(out));
    }
    case LayerKind::Dropout: {
      const bool train = mode == Mode::Train;
      if (train && rng == nullptr) {
        throw ConfigError("dropout in training mode needs a random stream");
      }
      Rng unused(0);
      auto r = dropout_forward(x.data(), l.dropout().rate, train, train ? *rng : unused);
      const Shape shape = x.shape();
      return Tensor(shape, std::move(r.out));
    }
    case LayerKind::Softmax: {
      auto out = softmax(x.data());
      const std::size_t n = out.size();
      return Tensor(Shape{n}, std::move(out));
    }
  }
  return x;
}

}  // namespace

Tensor forward_range(const Network& net, Tensor x, int first, int last, Mode mode, Rng* rng) {
  if (first < 1 || last > net.spec.layer_count()) {
    throw ConfigError("layer range " + std::to_string(first) + ".." + std::to_string(last) +
                      " is outside the network");
  }
  for (int i = first; i <= last; ++i) {
    x = apply_layer(net, net.spec.layer(i), std::move(x), mode, rng);
  }
  return x;
}

ForwardResult forward(const Network& net, const Tensor& input, Mode mode, Rng* rng) {
  return forward(net, input, mode, rng, net.spec.taps);
}

ForwardResult forward(const Network& net, const Tensor& input, Mode mode, Rng* rng,
                      std::span<const int> taps) {
  if (input.shape() != net.spec.input) {
    throw ShapeError("network input must be " + net.spec.input.str() + ", got " +
                     input.shape().str());
  }
  for (int t : taps) {
    if (t < 1 || t > net.spec.layer_count() || net.spec.layer(t).kind != LayerKind::Fc) {
      throw ConfigError("tap " + std::to_string(t) + " does not name an fc layer");
    }
  }
  ForwardResult result;
  Tensor x = input;
  for (const LayerSpec& l : net.spec.layers) {
    x = apply_layer(net, l, std::move(x), mode, rng);
    if (l.kind == LayerKind::Fc) {
      result.logits = x.storage();
      if (std::find(taps.begin(), taps.end(), l.index) != taps.end()) {
        result.taps[l.index] = FeatureVector{x.storage(), {{l.index, x.size()}}};
      }
    }
  }
  result.output = x.storage();
  return result;
}

int first_fc_index(const ArchSpec& spec) {
  for (const LayerSpec& l : spec.layers) {
    if (l.kind == LayerKind::Fc) return l.index;
  }
  throw ConfigError("architecture has no fc layer");
}

FeatureVector concat_features(std::span<const FeatureVector> parts) {
  if (parts.empty()) throw ConfigError("cannot concatenate an empty list of feature vectors");
  FeatureVector out;
  for (const FeatureVector& p : parts) {
    out.values.insert(out.values.end(), p.values.begin(), p.values.end());
    out.provenance.insert(out.provenance.end(), p.provenance.begin(), p.provenance.end());
  }
  return out;
}

}  // namespace actrec
