// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "actrec/errors.hpp"
#include "actrec/network.hpp"

namespace actrec {
namespace {

constexpr std::string_view kDefaultArch = R"(# 23-layer ImageNet architecture; taps at fc16 and fc19.
input 3x227x227
1 conv out=96 k=11 s=4 p=0
2 relu
3 maxpool k=3 s=2
4 lrn n=5 k=2 alpha=0.0001 beta=0.75
5 conv out=256 k=5 s=1 p=2
6 relu
7 maxpool k=3 s=2
8 lrn n=5 k=2 alpha=0.0001 beta=0.75
9 conv out=384 k=3 s=1 p=1
10 relu
11 conv out=384 k=5 s=1 p=2
12 relu
13 conv out=256 k=3 s=1 p=1
14 relu
15 maxpool k=3 s=2
16 fc out=4096
17 relu
18 dropout rate=0.5
19 fc out=4096
20 relu
21 dropout rate=0.5
22 fc out=1000
23 softmax
taps 16,19
)";

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, int line, std::string_view what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(line, "invalid " + std::string(what) + " '" + std::string(s) + "'");
  }
  return value;
}

std::optional<LayerKind> kind_from_name(std::string_view name) {
  static const std::map<std::string_view, LayerKind> kinds = {
      {"conv", LayerKind::Conv},       {"relu", LayerKind::Relu},
      {"maxpool", LayerKind::MaxPool}, {"lrn", LayerKind::Lrn},
      {"fc", LayerKind::Fc},           {"dropout", LayerKind::Dropout},
      {"softmax", LayerKind::Softmax}};
  const auto it = kinds.find(name);
  if (it == kinds.end()) return std::nullopt;
  return it->second;
}

class KeyValues {
 public:
  KeyValues(std::span<const std::string_view> tokens, int line) : line_(line) {
    for (std::string_view tok : tokens) {
      const auto eq = tok.find('=');
      if (eq == std::string_view::npos || eq == 0) {
        throw ParseError(line, "expected key=value, got '" + std::string(tok) + "'");
      }
      const std::string key(tok.substr(0, eq));
      if (!values_.emplace(key, tok.substr(eq + 1)).second) {
        throw ParseError(line, "duplicate parameter '" + key + "'");
      }
    }
  }

  template <typename T>
  T required(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ParseError(line_, "missing parameter '" + key + "'");
    T v = parse_number<T>(it->second, line_, key);
    values_.erase(it);
    return v;
  }

  template <typename T>
  T optional(const std::string& key, T fallback) {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    T v = parse_number<T>(it->second, line_, key);
    values_.erase(it);
    return v;
  }

  void finish() const {
    if (!values_.empty()) {
      throw ParseError(line_, "unknown parameter '" + values_.begin()->first + "'");
    }
  }

 private:
  std::map<std::string, std::string_view> values_;
  int line_;
};

void require_positive(int v, const char* name, int line) {
  if (v <= 0) throw ParseError(line, std::string(name) + " must be positive");
}

LayerSpec parse_layer(std::span<const std::string_view> tokens, int line) {
  LayerSpec layer;
  layer.index = parse_number<int>(tokens[0], line, "layer index");
  if (tokens.size() < 2) throw ParseError(line, "missing layer kind");
  const auto kind = kind_from_name(tokens[1]);
  if (!kind) throw ParseError(line, "unknown layer kind '" + std::string(tokens[1]) + "'");
  layer.kind = *kind;
  KeyValues kv(tokens.subspan(2), line);
  switch (layer.kind) {
    case LayerKind::Conv: {
      ConvSpec c;
      c.out = kv.required<int>("out");
      c.kernel = kv.required<int>("k");
      c.stride = kv.optional<int>("s", 1);
      c.pad = kv.optional<int>("p", 0);
      require_positive(c.out, "out", line);
      require_positive(c.kernel, "k", line);
      require_positive(c.stride, "s", line);
      if (c.pad < 0) throw ParseError(line, "p must be non-negative");
      layer.config = c;
      break;
    }
    case LayerKind::MaxPool: {
      PoolSpec p;
      p.kernel = kv.required<int>("k");
      p.stride = kv.required<int>("s");
      require_positive(p.kernel, "k", line);
      require_positive(p.stride, "s", line);
      layer.config = p;
      break;
    }
    case LayerKind::Lrn: {
      LrnParams p;
      p.n = kv.optional<int>("n", p.n);
      p.k = kv.optional<double>("k", p.k);
      p.alpha = kv.optional<double>("alpha", p.alpha);
      p.beta = kv.optional<double>("beta", p.beta);
      if (p.n <= 0 || p.n % 2 == 0) throw ParseError(line, "n must be a positive odd integer");
      if (p.alpha < 0 || p.beta < 0) throw ParseError(line, "alpha and beta must be non-negative");
      layer.config = p;
      break;
    }
    case LayerKind::Fc: {
      FcSpec f;
      f.out = kv.required<int>("out");
      require_positive(f.out, "out", line);
      layer.config = f;
      break;
    }
    case LayerKind::Dropout: {
      DropoutSpec d;
      d.rate = kv.required<double>("rate");
      if (!(d.rate >= 0.0 && d.rate < 1.0)) throw ParseError(line, "rate must lie in [0, 1)");
      layer.config = d;
      break;
    }
    case LayerKind::Relu:
    case LayerKind::Softmax:
      break;
  }
  kv.finish();
  return layer;
}

Shape parse_dims(std::string_view s, int line) {
  std::vector<std::size_t> dims;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto x = s.find('x', start);
    const auto part = s.substr(start, x == std::string_view::npos ? s.npos : x - start);
    const long v = parse_number<long>(part, line, "dimension");
    if (v <= 0) throw ParseError(line, "dimensions must be positive");
    dims.push_back(static_cast<std::size_t>(v));
    if (x == std::string_view::npos) break;
    start = x + 1;
  }
  if (dims.size() != 3) throw ParseError(line, "input must be CxHxW");
  return Shape(std::move(dims));
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string layer_error(const LayerSpec& l, const std::string& what) {
  return "layer " + std::to_string(l.index) + " (" + std::string(to_string(l.kind)) +
         "): " + what;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Lrn: return "lrn";
    case LayerKind::Fc: return "fc";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

const LayerSpec& ArchSpec::layer(int index) const {
  if (index < 1 || index > layer_count()) {
    throw ConfigError("no layer " + std::to_string(index));
  }
  return layers[static_cast<std::size_t>(index - 1)];
}

LayerSpec& ArchSpec::layer(int index) {
  return const_cast<LayerSpec&>(std::as_const(*this).layer(index));
}

ArchSpec parse_arch(std::string_view text) {
  ArchSpec spec;
  bool have_input = false;
  std::vector<std::pair<int, int>> tap_lines;  // (layer, line)
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens[0] == "input") {
      if (tokens.size() != 2) throw ParseError(line_no, "expected 'input CxHxW'");
      if (have_input) throw ParseError(line_no, "duplicate input line");
      spec.input = parse_dims(tokens[1], line_no);
      have_input = true;
    } else if (tokens[0] == "taps") {
      if (tokens.size() != 2) throw ParseError(line_no, "expected 'taps i,j,...'");
      std::string_view list = tokens[1];
      std::size_t start = 0;
      while (start <= list.size()) {
        const auto comma = list.find(',', start);
        const auto part =
            list.substr(start, comma == std::string_view::npos ? list.npos : comma - start);
        tap_lines.emplace_back(parse_number<int>(part, line_no, "tap index"), line_no);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
    } else {
      LayerSpec layer = parse_layer(tokens, line_no);
      if (layer.index != spec.layer_count() + 1) {
        throw ParseError(line_no, "expected layer " + std::to_string(spec.layer_count() + 1) +
                                      ", got " + std::to_string(layer.index));
      }
      spec.layers.push_back(std::move(layer));
    }
  }
  if (!have_input) throw ParseError(line_no, "missing input line");
  if (spec.layers.empty()) throw ParseError(line_no, "no layers defined");
  for (const auto& [tap, line] : tap_lines) {
    if (tap < 1 || tap > spec.layer_count()) {
      throw ParseError(line, "tap " + std::to_string(tap) + " names no layer");
    }
    if (spec.layer(tap).kind != LayerKind::Fc) {
      throw ParseError(line, "tap " + std::to_string(tap) + " is a " +
                                 std::string(to_string(spec.layer(tap).kind)) +
                                 " layer; taps must name fc layers");
    }
    if (std::find(spec.taps.begin(), spec.taps.end(), tap) != spec.taps.end()) {
      throw ParseError(line, "duplicate tap " + std::to_string(tap));
    }
    spec.taps.push_back(tap);
  }
  std::sort(spec.taps.begin(), spec.taps.end());
  return spec;
}

ArchSpec load_arch(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open architecture file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_arch(ss.str());
}

std::string format_arch(const ArchSpec& spec) {
  std::ostringstream os;
  os << "input " << spec.input.str() << '\n';
  for (const LayerSpec& l : spec.layers) {
    os << l.index << ' ' << to_string(l.kind);
    switch (l.kind) {
      case LayerKind::Conv:
        os << " out=" << l.conv().out << " k=" << l.conv().kernel << " s=" << l.conv().stride
           << " p=" << l.conv().pad;
        break;
      case LayerKind::MaxPool:
        os << " k=" << l.pool().kernel << " s=" << l.pool().stride;
        break;
      case LayerKind::Lrn:
        os << " n=" << l.lrn().n << " k=" << format_double(l.lrn().k)
           << " alpha=" << format_double(l.lrn().alpha)
           << " beta=" << format_double(l.lrn().beta);
        break;
      case LayerKind::Fc:
        os << " out=" << l.fc().out;
        break;
      case LayerKind::Dropout:
        os << " rate=" << format_double(l.dropout().rate);
        break;
      case LayerKind::Relu:
      case LayerKind::Softmax:
        break;
    }
    os << '\n';
  }
  if (!spec.taps.empty()) {
    os << "taps ";
    for (std::size_t i = 0; i < spec.taps.size(); ++i) {
      if (i) os << ',';
      os << spec.taps[i];
    }
    os << '\n';
  }
  return os.str();
}

void save_arch(const ArchSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write architecture file " + path.string());
  out << format_arch(spec);
  if (!out) throw IoError("failed writing architecture file " + path.string());
}

std::string_view default_arch_text() { return kDefaultArch; }

ArchSpec default_arch() { return parse_arch(kDefaultArch); }

std::vector<Shape> infer_shapes(const ArchSpec& spec) {
  std::vector<Shape> shapes;
  shapes.reserve(spec.layers.size());
  Shape cur = spec.input;
  for (const LayerSpec& l : spec.layers) {
    try {
      switch (l.kind) {
        case LayerKind::Conv: {
          if (cur.rank() != 3) throw ShapeError("needs a CxHxW input, got " + cur.str());
          const auto& c = l.conv();
          cur = Shape{static_cast<std::size_t>(c.out),
                      window_output_size(cur[1], c.kernel, c.stride, c.pad),
                      window_output_size(cur[2], c.kernel, c.stride, c.pad)};
          break;
        }
        case LayerKind::MaxPool: {
          if (cur.rank() != 3) throw ShapeError("needs a CxHxW input, got " + cur.str());
          const auto& p = l.pool();
          cur = Shape{cur[0], window_output_size(cur[1], p.kernel, p.stride, 0),
                      window_output_size(cur[2], p.kernel, p.stride, 0)};
          break;
        }
        case LayerKind::Lrn:
          if (cur.rank() != 3) throw ShapeError("needs a CxHxW input, got " + cur.str());
          break;
        case LayerKind::Fc:
          cur = Shape{static_cast<std::size_t>(l.fc().out)};
          break;
        case LayerKind::Softmax:
          if (cur.rank() != 1) throw ShapeError("needs a vector input, got " + cur.str());
          break;
        case LayerKind::Relu:
        case LayerKind::Dropout:
          break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError(layer_error(l, e.what()));
    } catch (const ConfigError& e) {
      throw ShapeError(layer_error(l, e.what()));
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void validate_arch(const ArchSpec& spec) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].index != static_cast<int>(i) + 1) {
      throw ConfigError("layer numbering is not contiguous at position " + std::to_string(i + 1));
    }
  }
  for (int tap : spec.taps) {
    if (tap < 1 || tap > spec.layer_count() || spec.layer(tap).kind != LayerKind::Fc) {
      throw ConfigError("tap " + std::to_string(tap) + " does not name an fc layer");
    }
  }
  infer_shapes(spec);
}

}  // namespace actrec
