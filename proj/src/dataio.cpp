// SPDX-License-Identifier: Apache-2.0
#include "actrec/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "actrec/errors.hpp"

namespace actrec {

std::size_t DatasetManifest::label_index(std::string_view name) const {
  const auto it = std::lower_bound(classes.begin(), classes.end(), name);
  if (it == classes.end() || *it != name) {
    throw ConfigError("unknown class '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - classes.begin());
}

DatasetManifest make_manifest(std::vector<Sample> samples) {
  DatasetManifest m;
  std::set<std::string> paths;
  std::set<std::string> classes;
  for (const Sample& s : samples) {
    if (s.image_path.empty()) throw ConfigError("sample with an empty image path");
    if (s.label.empty()) throw ConfigError("sample " + s.image_path + " has an empty label");
    if (!paths.insert(s.image_path).second) {
      throw ConfigError("duplicate image path " + s.image_path);
    }
    classes.insert(s.label);
  }
  m.samples = std::move(samples);
  m.classes.assign(classes.begin(), classes.end());
  return m;
}

DatasetManifest parse_manifest(std::string_view text) {
  std::vector<Sample> samples;
  std::set<std::string> paths;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t1 == std::string_view::npos || t2 == std::string_view::npos) {
      throw ParseError(line_no, "expected path<TAB>label<TAB>video_id");
    }
    if (line.find('\t', t2 + 1) != std::string_view::npos) {
      throw ParseError(line_no, "too many fields");
    }
    Sample s{std::string(line.substr(0, t1)), std::string(line.substr(t1 + 1, t2 - t1 - 1)),
             std::string(line.substr(t2 + 1))};
    if (s.image_path.empty()) throw ParseError(line_no, "empty image path");
    if (s.label.empty()) throw ParseError(line_no, "empty label");
    if (!paths.insert(s.image_path).second) {
      throw ParseError(line_no, "duplicate image path " + s.image_path);
    }
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw ParseError(line_no, "manifest has no records");
  return make_manifest(std::move(samples));
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_manifest(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out;
  for (const Sample& s : manifest.samples) {
    out += s.image_path + '\t' + s.label + '\t' + s.video_id + '\n';
  }
  return out;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << format_manifest(manifest);
  if (!out) throw IoError("failed writing manifest " + path.string());
}

namespace {

class PnmHeader {
 public:
  explicit PnmHeader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  long next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      throw FormatError("malformed netpbm header");
    }
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > (1L << 30)) throw FormatError("netpbm header value too large");
    }
    return v;
  }

  void skip_single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("malformed netpbm header");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

RawImage decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' ||
      (bytes[1] != '2' && bytes[1] != '3' && bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("unsupported image format (expected P2, P3, P5 or P6)");
  }
  const char type = static_cast<char>(bytes[1]);
  const bool color = type == '3' || type == '6';
  const bool binary = type == '5' || type == '6';
  PnmHeader header(bytes);
  const long width = header.next_int();
  const long height = header.next_int();
  const long maxval = header.next_int();
  if (width <= 0 || height <= 0) throw FormatError("image has a zero dimension");
  if (maxval != 255) {
    throw FormatError("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  }
  RawImage img;
  img.width = static_cast<std::size_t>(width);
  img.height = static_cast<std::size_t>(height);
  img.rgb.resize(img.width * img.height * 3);
  const std::size_t channels = color ? 3 : 1;
  const std::size_t values = img.width * img.height * channels;
  std::vector<std::uint8_t> raw(values);
  if (binary) {
    header.skip_single_whitespace();
    const std::size_t start = header.pos();
    if (bytes.size() - start < values) throw TruncatedError("truncated netpbm payload");
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(start), values, raw.begin());
  } else {
    for (std::size_t i = 0; i < values; ++i) {
      long v;
      try {
        v = header.next_int();
      } catch (const FormatError&) {
        throw TruncatedError("truncated netpbm payload");
      }
      if (v > 255) throw FormatError("sample value exceeds maxval");
      raw[i] = static_cast<std::uint8_t>(v);
    }
  }
  if (color) {
    img.rgb = std::move(raw);
  } else {
    for (std::size_t i = 0; i < values; ++i) {
      img.rgb[3 * i] = img.rgb[3 * i + 1] = img.rgb[3 * i + 2] = raw[i];
    }
  }
  return img;
}

RawImage decode_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_pnm(bytes);
  } catch (const TruncatedError& e) {
    throw TruncatedError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_ppm(const RawImage& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

void save_ppm(const RawImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

namespace {

struct Tap {
  std::size_t lo, hi;
  float frac;
};

// Half-pixel-centered source coordinates, clamped to the image.
std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, static_cast<float>(src - static_cast<double>(lo))};
  }
  return taps;
}

}  // namespace

FloatImage resize_bilinear(const RawImage& img, std::size_t out_w, std::size_t out_h) {
  FloatImage out{out_w, out_h, std::vector<float>(out_w * out_h * 3)};
  const auto xs = bilinear_taps(img.width, out_w);
  const auto ys = bilinear_taps(img.height, out_h);
  for (std::size_t y = 0; y < out_h; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& tx = xs[x];
      for (int c = 0; c < 3; ++c) {
        // a + f*(b-a) form keeps constant regions exact.
        const float a = img.at(ty.lo, tx.lo, c);
        const float b = img.at(ty.lo, tx.hi, c);
        const float d = img.at(ty.hi, tx.lo, c);
        const float e = img.at(ty.hi, tx.hi, c);
        const float top = a + tx.frac * (b - a);
        const float bottom = d + tx.frac * (e - d);
        out.rgb[(y * out_w + x) * 3 + static_cast<std::size_t>(c)] = top + ty.frac * (bottom - top);
      }
    }
  }
  return out;
}

namespace {

struct CropGeometry {
  std::size_t resized_w, resized_h, off_x, off_y;
};

CropGeometry crop_geometry(const RawImage& img, const PreprocessConfig& cfg) {
  if (cfg.crop <= 0 || cfg.resize_to < cfg.crop) {
    throw ConfigError("preprocessing needs 0 < crop <= resize_to");
  }
  if (img.width == 0 || img.height == 0) throw ShapeError("image has a zero dimension");
  const auto target = static_cast<std::size_t>(cfg.resize_to);
  CropGeometry g{};
  if (img.height <= img.width) {
    g.resized_h = target;
    g.resized_w = static_cast<std::size_t>(std::llround(
        static_cast<double>(img.width) * static_cast<double>(target) / static_cast<double>(img.height)));
  } else {
    g.resized_w = target;
    g.resized_h = static_cast<std::size_t>(std::llround(
        static_cast<double>(img.height) * static_cast<double>(target) / static_cast<double>(img.width)));
  }
  const auto crop = static_cast<std::size_t>(cfg.crop);
  g.off_x = (g.resized_w - crop) / 2;
  g.off_y = (g.resized_h - crop) / 2;
  return g;
}

}  // namespace

Tensor preprocess(const RawImage& img, const PreprocessConfig& cfg) {
  const CropGeometry g = crop_geometry(img, cfg);
  const auto crop = static_cast<std::size_t>(cfg.crop);
  Tensor out(Shape{3, crop, crop});
  if (g.resized_w == img.width && g.resized_h == img.height) {
    for (int c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < crop; ++y)
        for (std::size_t x = 0; x < crop; ++x)
          out.at(c, y, x) = static_cast<float>(img.at(y + g.off_y, x + g.off_x, c)) - cfg.channel_means[c];
    return out;
  }
  const FloatImage resized = resize_bilinear(img, g.resized_w, g.resized_h);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < crop; ++y) {
      for (std::size_t x = 0; x < crop; ++x) {
        const float v = resized.rgb[((y + g.off_y) * resized.width + x + g.off_x) * 3 + c];
        out.at(static_cast<std::size_t>(c), y, x) = v - cfg.channel_means[c];
      }
    }
  }
  return out;
}

std::filesystem::path resolve_image_path(const std::filesystem::path& base_dir,
                                         const std::string& image_path) {
  const std::filesystem::path p(image_path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

std::array<float, 3> compute_means(const DatasetManifest& manifest, const PreprocessConfig& cfg,
                                   const std::filesystem::path& base_dir) {
  if (manifest.samples.empty()) throw ConfigError("cannot compute means of an empty manifest");
  PreprocessConfig raw = cfg;
  raw.channel_means = {0.0f, 0.0f, 0.0f};
  // Per-image sums are added in sorted order so the result does not depend on
  // sample order.
  std::array<std::vector<double>, 3> per_image;
  std::size_t pixels = 0;
  for (const Sample& s : manifest.samples) {
    const Tensor t = preprocess(decode_image(resolve_image_path(base_dir, s.image_path)), raw);
    const std::size_t plane = t.shape()[1] * t.shape()[2];
    for (std::size_t c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += t[c * plane + i];
      per_image[c].push_back(acc);
    }
    pixels += plane;
  }
  std::array<double, 3> sums{0.0, 0.0, 0.0};
  for (std::size_t c = 0; c < 3; ++c) {
    std::sort(per_image[c].begin(), per_image[c].end());
    for (double v : per_image[c]) sums[c] += v;
  }
  return {static_cast<float>(sums[0] / pixels), static_cast<float>(sums[1] / pixels),
          static_cast<float>(sums[2] / pixels)};
}

}  // namespace actrec
