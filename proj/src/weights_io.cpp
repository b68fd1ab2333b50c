// SPDX-License-Identifier: Apache-2.0
//
// Weight file layout (little-endian):
//   "CNNW" | u32 version | u32 parameterized layer count
//   per layer: u32 index | u8 kind (1 conv, 2 fc)
//              weights: u32 rank | u32 dims[rank] | f32 data
//              bias:    u32 rank | u32 dims[rank] | f32 data
#include <string>

#include "actrec/detail/binary_io.hpp"
#include "actrec/errors.hpp"
#include "actrec/network.hpp"

namespace actrec {
namespace {

constexpr std::string_view kMagic = "CNNW";
constexpr std::uint8_t kConvTag = 1;
constexpr std::uint8_t kFcTag = 2;

void write_array(detail::ByteWriter& w, const Shape& shape, std::span<const float> data) {
  w.u32(static_cast<std::uint32_t>(shape.rank()));
  for (std::size_t d : shape.dims()) w.u32(static_cast<std::uint32_t>(d));
  w.f32s(data);
}

std::vector<std::size_t> read_dims(detail::ByteReader& r) {
  const std::uint32_t rank = r.u32();
  if (rank == 0 || rank > 4) {
    throw FormatError(r.name() + ": invalid array rank " + std::to_string(rank));
  }
  std::vector<std::size_t> dims(rank);
  for (auto& d : dims) d = r.u32();
  return dims;
}

void read_into(detail::ByteReader& r, const Shape& expected, std::span<float> out,
               int layer, const char* what) {
  const auto dims = read_dims(r);
  if (dims != expected.dims()) {
    std::string got;
    for (std::size_t i = 0; i < dims.size(); ++i) got += (i ? "x" : "") + std::to_string(dims[i]);
    throw ShapeError("layer " + std::to_string(layer) + ": stored " + what + " shape " + got +
                     " does not match architecture " + expected.str());
  }
  r.f32s(out);
}

}  // namespace

void save_weights(const Network& net, const std::filesystem::path& path) {
  validate_network(net);
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kWeightsVersion);
  std::uint32_t count = 0;
  for (const auto& p : net.params) count += std::holds_alternative<std::monostate>(p) ? 0 : 1;
  w.u32(count);
  for (const LayerSpec& l : net.spec.layers) {
    if (l.kind == LayerKind::Conv) {
      const ConvParams& p = net.conv(l.index);
      w.u32(static_cast<std::uint32_t>(l.index));
      w.u8(kConvTag);
      write_array(w, p.weights.shape(), p.weights.data());
      write_array(w, Shape{p.bias.size()}, p.bias);
    } else if (l.kind == LayerKind::Fc) {
      const FcParams& p = net.fc(l.index);
      w.u32(static_cast<std::uint32_t>(l.index));
      w.u8(kFcTag);
      write_array(w, p.weights.shape(), p.weights.data());
      write_array(w, Shape{p.bias.size()}, p.bias);
    }
  }
  w.write_to(path);
}

Network load_weights(const ArchSpec& spec, const std::filesystem::path& path) {
  Network net = zero_network(spec);
  auto r = detail::ByteReader::from_file(path);
  if (r.remaining() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
    throw MagicError(path.string() + ": not a weight file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kWeightsVersion) {
    throw VersionError(path.string() + ": unsupported weight file version " +
                       std::to_string(version));
  }
  std::uint32_t expected_count = 0;
  for (const auto& p : net.params) expected_count += std::holds_alternative<std::monostate>(p) ? 0 : 1;
  const std::uint32_t count = r.u32();
  if (count != expected_count) {
    throw ShapeError(path.string() + ": file holds " + std::to_string(count) +
                     " parameterized layers, architecture has " + std::to_string(expected_count));
  }
  for (std::uint32_t n = 0; n < count; ++n) {
    const int index = static_cast<int>(r.u32());
    const std::uint8_t tag = r.u8();
    if (index < 1 || index > spec.layer_count()) {
      throw ShapeError(path.string() + ": layer " + std::to_string(index) + " is not in the architecture");
    }
    const LayerKind kind = spec.layer(index).kind;
    if (tag == kConvTag && kind == LayerKind::Conv) {
      ConvParams& p = net.conv(index);
      read_into(r, p.weights.shape(), p.weights.data(), index, "weight");
      read_into(r, Shape{p.bias.size()}, p.bias, index, "bias");
    } else if (tag == kFcTag && kind == LayerKind::Fc) {
      FcParams& p = net.fc(index);
      read_into(r, p.weights.shape(), p.weights.data(), index, "weight");
      read_into(r, Shape{p.bias.size()}, p.bias, index, "bias");
    } else {
      throw ShapeError("layer " + std::to_string(index) + ": stored kind tag " +
                       std::to_string(tag) + " does not match architecture kind " +
                       std::string(to_string(kind)));
    }
  }
  if (!r.at_end()) {
    throw FormatError(path.string() + ": trailing bytes after the last layer");
  }
  return net;
}

}  // namespace actrec
