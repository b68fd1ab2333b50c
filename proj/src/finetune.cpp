// SPDX-License-Identifier: Apache-2.0
#include "actrec/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace actrec {
namespace {

std::vector<int> fc_indices(const ArchSpec& spec) {
  std::vector<int> out;
  for (const LayerSpec& l : spec.layers) {
    if (l.kind == LayerKind::Fc) out.push_back(l.index);
  }
  return out;
}

// The head runs from the first fc layer to a terminal softmax and may only
// contain layers with backward kernels.
int check_head(const ArchSpec& spec) {
  const int first = first_fc_index(spec);
  if (spec.layers.back().kind != LayerKind::Softmax) {
    throw ConfigError("head training needs the network to end in softmax");
  }
  for (int i = first; i < spec.layer_count(); ++i) {
    const LayerKind k = spec.layer(i).kind;
    if (k != LayerKind::Fc && k != LayerKind::Relu && k != LayerKind::Dropout) {
      throw ConfigError("layer " + std::to_string(i) + " (" + std::string(to_string(k)) +
                        ") cannot be trained in the head");
    }
  }
  return first;
}

}  // namespace

std::string format_loss_log(const LossLog& log) {
  std::ostringstream os;
  os.precision(9);
  for (const LossEntry& e : log) os << e.iteration << '\t' << e.loss << '\n';
  return os.str();
}

Network replace_head(const Network& net, const std::map<int, int>& head_sizes,
                     std::size_t num_classes, Rng& rng) {
  if (num_classes < 2) throw ConfigError("a classification head needs at least two classes");
  const std::vector<int> fcs = fc_indices(net.spec);
  if (fcs.empty()) throw ConfigError("architecture has no fc layer");
  const int classifier = fcs.back();
  for (const auto& [index, size] : head_sizes) {
    if (std::find(fcs.begin(), fcs.end(), index) == fcs.end()) {
      throw ConfigError("head size given for layer " + std::to_string(index) +
                        ", which is not an fc layer");
    }
    if (size <= 0) throw ConfigError("head sizes must be positive");
  }

  ArchSpec spec = net.spec;
  for (int index : fcs) {
    const auto it = head_sizes.find(index);
    int out = spec.layer(index).fc().out;
    if (it != head_sizes.end()) {
      out = it->second;
    } else if (index == classifier) {
      out = static_cast<int>(num_classes);
    }
    if (index == classifier && out < static_cast<int>(num_classes)) {
      throw ConfigError("classifier layer " + std::to_string(index) + " size " +
                        std::to_string(out) + " is below the class count " +
                        std::to_string(num_classes));
    }
    spec.layer(index).config = FcSpec{out};
  }
  const std::vector<Shape> old_shapes = infer_shapes(net.spec);
  const std::vector<Shape> new_shapes = infer_shapes(spec);

  Network out;
  out.spec = spec;
  out.params = net.params;
  auto input_of = [](const ArchSpec& a, const std::vector<Shape>& shapes, int index) {
    return index == 1 ? a.input : shapes[static_cast<std::size_t>(index) - 2];
  };
  for (int index : fcs) {
    const std::size_t in_dim = input_of(spec, new_shapes, index).element_count();
    const bool same = old_shapes[index - 1] == new_shapes[index - 1] &&
                      input_of(net.spec, old_shapes, index) == input_of(spec, new_shapes, index);
    if (same && index != classifier) continue;
    FcParams p;
    p.out_dim = spec.layer(index).fc().out;
    p.weights = Tensor(Shape{static_cast<std::size_t>(p.out_dim), in_dim});
    for (float& w : p.weights.storage()) w = static_cast<float>(0.01 * rng.normal());
    p.bias.assign(static_cast<std::size_t>(p.out_dim), 0.0f);
    out.params[static_cast<std::size_t>(index) - 1] = std::move(p);
  }
  validate_network(out);
  return out;
}

std::vector<float> backbone_features(const Network& net, const Tensor& input) {
  if (input.shape() != net.spec.input) {
    throw ShapeError("network input must be " + net.spec.input.str() + ", got " +
                     input.shape().str());
  }
  const int first = first_fc_index(net.spec);
  if (first == 1) return input.storage();
  return forward_range(net, input, 1, first - 1, Mode::Infer).storage();
}

HeadGradients HeadGradients::zeros(const Network& net, std::span<const int> layers) {
  HeadGradients g;
  for (int index : layers) {
    const FcParams& p = net.fc(index);
    g.weights.emplace(index, Tensor(p.weights.shape()));
    g.bias.emplace(index, std::vector<float>(p.bias.size(), 0.0f));
  }
  return g;
}

double accumulate_head_gradients(const Network& net, std::span<const float> backbone_out,
                                 std::size_t label, Mode mode, Rng* rng, HeadGradients& acc) {
  const int first = check_head(net.spec);
  const int last = net.spec.layer_count();  // softmax
  const bool train = mode == Mode::Train;
  if (train && rng == nullptr) throw ConfigError("training-mode head pass needs a random stream");

  // inputs[k] is the input of layer first + k.
  std::vector<std::vector<float>> inputs;
  std::vector<std::vector<std::uint8_t>> masks(static_cast<std::size_t>(last - first));
  std::vector<float> x(backbone_out.begin(), backbone_out.end());
  for (int i = first; i < last; ++i) {
    const LayerSpec& l = net.spec.layer(i);
    inputs.push_back(x);
    switch (l.kind) {
      case LayerKind::Fc:
        x = fc_forward(x, net.fc(i));
        break;
      case LayerKind::Relu:
        for (float& v : x) v = v > 0.0f ? v : 0.0f;
        break;
      case LayerKind::Dropout: {
        Rng unused(0);
        auto r = dropout_forward(x, l.dropout().rate, train, train ? *rng : unused);
        x = std::move(r.out);
        masks[static_cast<std::size_t>(i - first)] = std::move(r.mask);
        break;
      }
      default:
        break;
    }
  }
  const std::vector<float> probs = softmax(x);
  CrossEntropyResult ce = cross_entropy(probs, label);

  std::vector<float> g = std::move(ce.grad_logits);
  for (int i = last - 1; i >= first; --i) {
    const LayerSpec& l = net.spec.layer(i);
    const auto& in = inputs[static_cast<std::size_t>(i - first)];
    switch (l.kind) {
      case LayerKind::Fc: {
        const bool need_x = i > first;
        const auto w = acc.weights.find(i);
        if (w != acc.weights.end()) {
          g = fc_backward_accumulate(in, net.fc(i), g, w->second, acc.bias.at(i), need_x);
        } else if (need_x) {
          g = fc_backward(in, net.fc(i), g).grad_x;
        }
        break;
      }
      case LayerKind::Relu:
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (!(in[k] > 0.0f)) g[k] = 0.0f;
        }
        break;
      case LayerKind::Dropout:
        if (train) g = dropout_backward(g, masks[static_cast<std::size_t>(i - first)], l.dropout().rate);
        break;
      default:
        break;
    }
  }
  return ce.loss;
}

TrainResult train_head_on_features(Network net, std::span<const std::vector<float>> features,
                                   std::span<const std::size_t> labels,
                                   const FinetuneConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (cfg.iterations < 0 || cfg.batch_size < 1 || cfg.log_stride < 1) {
    throw ConfigError("iterations, batch size and log stride must be positive");
  }
  if (features.empty() || features.size() != labels.size()) {
    throw ConfigError("training needs one label per cached feature vector");
  }
  check_head(net.spec);
  const std::vector<int> fcs = fc_indices(net.spec);
  std::vector<int> trainable = cfg.trainable.empty() ? fcs : cfg.trainable;
  for (int t : trainable) {
    if (std::find(fcs.begin(), fcs.end(), t) == fcs.end()) {
      throw ConfigError("layer " + std::to_string(t) + " is not a trainable fc layer");
    }
  }
  const std::size_t classes = static_cast<std::size_t>(net.fc(fcs.back()).out_dim);
  for (std::size_t label : labels) {
    if (label >= classes) {
      throw ConfigError("label " + std::to_string(label) + " exceeds the classifier size " +
                        std::to_string(classes));
    }
  }

  const Rng root(cfg.seed);
  Rng batch_rng = root.substream("shuffle");
  Rng dropout_rng = root.substream("dropout");
  TrainResult result;
  const float step = static_cast<float>(cfg.learning_rate / cfg.batch_size);
  for (long it = 0; it < cfg.iterations; ++it) {
    HeadGradients grads = HeadGradients::zeros(net, trainable);
    double loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t pick = batch_rng.below(features.size());
      loss += accumulate_head_gradients(net, features[pick], labels[pick], Mode::Train,
                                        &dropout_rng, grads);
    }
    loss /= cfg.batch_size;
    if (!std::isfinite(loss)) {
      throw DivergedError(it, "training diverged at iteration " + std::to_string(it) +
                                  " (loss is not finite); lower the learning rate");
    }
    if (it % cfg.log_stride == 0 || it == cfg.iterations - 1) result.log.push_back({it, loss});
    if (cfg.learning_rate == 0.0) continue;
    for (int t : trainable) {
      FcParams& p = net.fc(t);
      auto& w = p.weights.storage();
      const auto& gw = grads.weights.at(t).storage();
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= step * gw[k];
      const auto& gb = grads.bias.at(t);
      for (std::size_t k = 0; k < p.bias.size(); ++k) p.bias[k] -= step * gb[k];
    }
  }
  result.net = std::move(net);
  return result;
}

TrainResult train_head(Network net, const DatasetManifest& train, const FinetuneConfig& cfg,
                       const PreprocessConfig& pre, const std::filesystem::path& base_dir) {
  if (train.samples.empty()) throw ConfigError("training manifest is empty");
  std::vector<std::vector<float>> features;
  std::vector<std::size_t> labels;
  features.reserve(train.samples.size());
  for (const Sample& s : train.samples) {
    const Tensor input = preprocess(decode_image(resolve_image_path(base_dir, s.image_path)), pre);
    features.push_back(backbone_features(net, input));
    labels.push_back(train.label_index(s.label));
  }
  return train_head_on_features(std::move(net), features, labels, cfg);
}

}  // namespace actrec
