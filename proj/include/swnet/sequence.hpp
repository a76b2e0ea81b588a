#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "swnet/common.hpp"
#include "swnet/geometry.hpp"

namespace swnet {

struct DropletSpec {
  double amplitude = 0.1;   // I (m)
  double sharpness = 700.0; // C (1/m^2)
  Vec2 center{0.5, 0.5};
};

struct Provenance {
  std::optional<DomainSpec> domain;
  std::optional<DropletSpec> droplet;
  std::uint64_t seed = 0;
};

/// Time series of height fields on a fixed geometry.
struct WaveSequence {
  GeometryField geometry;
  std::vector<Frame> frames;
  double frame_interval = 0.03;
  bool normalized = false;
  Provenance provenance;

  std::size_t rows() const { return geometry.rows(); }
  std::size_t cols() const { return geometry.cols(); }
  std::size_t length() const { return frames.size(); }
  /// Throws kShape when a frame disagrees with the geometry grid.
  void validate() const;
};

/// Writes the little-endian "WSQ1" sequence file.
///   magic "WSQ1" | u32 H | u32 W | u32 T | f32 frame_interval | u8 normalized
///   | u8 edge bits | 2 reserved | H*W f32 mask | T * H*W f32 frames
void write_sequence(const std::filesystem::path& path, const WaveSequence& seq);
std::vector<std::uint8_t> encode_sequence(const WaveSequence& seq);

/// Reads a sequence file. The file carries no physical extent; it is set from
/// `extent` when given and otherwise defaults to 1 m along the longer side.
WaveSequence read_sequence(const std::filesystem::path& path,
                           std::optional<Vec2> extent = std::nullopt);
WaveSequence decode_sequence(const std::vector<std::uint8_t>& bytes,
                             std::optional<Vec2> extent = std::nullopt);

}  // namespace swnet
