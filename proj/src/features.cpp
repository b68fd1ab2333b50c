// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "actrec/classifiers.hpp"
#include "actrec/detail/binary_io.hpp"
#include "actrec/errors.hpp"

namespace actrec {

void FeatureSet::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].features.size() != dim) {
      throw ConfigError("record " + std::to_string(i) + " has " +
                        std::to_string(records[i].features.size()) + " features, expected " +
                        std::to_string(dim));
    }
    if (records[i].label >= classes.size()) {
      throw ConfigError("record " + std::to_string(i) + " has label index " +
                        std::to_string(records[i].label) + " outside " +
                        std::to_string(classes.size()) + " classes");
    }
  }
}

void save_features(const FeatureSet& set, const std::filesystem::path& path) {
  set.validate();
  detail::ByteWriter w;
  w.bytes("FEAT");
  w.u32(kFeatureFileVersion);
  w.u32(static_cast<std::uint32_t>(set.records.size()));
  w.u32(static_cast<std::uint32_t>(set.dim));
  w.u32(static_cast<std::uint32_t>(set.classes.size()));
  for (const auto& c : set.classes) w.str(c);
  for (const auto& r : set.records) {
    w.u32(static_cast<std::uint32_t>(r.label));
    w.str(r.video_id);
    w.f32s(r.features);
  }
  w.write_to(path);
}

FeatureSet load_features(const std::filesystem::path& path) {
  auto r = detail::ByteReader::from_file(path);
  if (r.remaining() < 4 || r.bytes(4) != "FEAT") {
    throw MagicError(path.string() + ": not a feature file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kFeatureFileVersion) {
    throw VersionError(path.string() + ": unsupported feature file version " +
                       std::to_string(version));
  }
  FeatureSet set;
  const std::uint32_t count = r.u32();
  set.dim = r.u32();
  const std::uint32_t class_count = r.u32();
  for (std::uint32_t i = 0; i < class_count; ++i) set.classes.push_back(r.str());
  // Cap the reservation by what the file could possibly hold.
  set.records.reserve(std::min<std::size_t>(count, r.remaining() / 8 + 1));
  for (std::uint32_t i = 0; i < count; ++i) {
    FeatureRecord rec;
    rec.label = r.u32();
    rec.video_id = r.str();
    if (r.remaining() < set.dim * 4) {
      throw TruncatedError(path.string() + ": truncated in record " + std::to_string(i));
    }
    rec.features.resize(set.dim);
    r.f32s(rec.features);
    set.records.push_back(std::move(rec));
  }
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after the last record");
  set.validate();
  return set;
}

}  // namespace actrec
