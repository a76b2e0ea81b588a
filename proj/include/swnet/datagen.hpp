#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "swnet/common.hpp"
#include "swnet/geometry.hpp"
#include "swnet/sequence.hpp"
#include "swnet/swe.hpp"

namespace swnet {

// ---------------------------------------------------------------------------
// Normalization: h~ = (h - mean) / (max - mean), with mean 1.0 m and max 1.1 m.

struct NormalizationSpec {
  double reference_mean = 1.0;
  double reference_max = 1.1;
  void validate() const;
};

Frame normalize(const Frame& frame, const NormalizationSpec& spec = {});
Frame denormalize(const Frame& frame, const NormalizationSpec& spec = {});
/// No-op for sequences already in normalized units.
WaveSequence normalize(const WaveSequence& seq, const NormalizationSpec& spec = {});
WaveSequence denormalize(const WaveSequence& seq, const NormalizationSpec& spec = {});

// ---------------------------------------------------------------------------
// Augmentation

enum class Dihedral : std::uint8_t { kIdentity = 0, kRot90, kRot180, kRot270, kFlipH, kFlipV };

/// Exact permutation of square grids; rotations are counter-clockwise.
WaveSequence apply_dihedral(const WaveSequence& seq, Dihedral transform);
/// Uniform draw over the six dihedral transforms.
WaveSequence augment_closed(const WaveSequence& seq, Rng& rng);

/// Rotate by `angle_deg` about the source centre, crop a `crop`-metre square
/// window centred at `center`, and resample it to out_size x out_size.
/// Frames use bilinear interpolation; the mask is interpolated and
/// re-binarized at 0.5. Points outside the source read as solid.
struct ViewTransform {
  double angle_deg = 0.0;
  Vec2 center{0.5, 0.5};
  double crop = 1.0;
  std::size_t out_size = 128;
};
WaveSequence resample_view(const WaveSequence& seq, const ViewTransform& view);

/// Rotation by k * 15 deg (k uniform in 0..23) and a 1 m crop centred
/// uniformly within +-0.1 m of the source centre, resampled to out_size.
WaveSequence augment_open(const WaveSequence& seq, Rng& rng, double crop_extent = 1.0,
                          std::size_t out_size = 128);
/// Rotation by k * 15 deg about the centre with no crop.
WaveSequence augment_rotate(const WaveSequence& seq, Rng& rng, std::size_t out_size = 128);

enum class AugmentClass : std::uint8_t {
  kDihedral,    // A, C, D
  kRotateCrop,  // B, E
  kRotateOnly,  // F, G
};

/// Augmentation, crop to the 1 m network window, resample and normalize.
WaveSequence training_view(const WaveSequence& seq, AugmentClass augment, Rng& rng,
                           std::size_t out_size);
/// Deterministic central 1 m window, resampled and normalized.
WaveSequence network_view(const WaveSequence& seq, std::size_t out_size);

// ---------------------------------------------------------------------------
// Datasets

struct DatasetInfo {
  char id;
  const char* name;
  const char* purpose;
  Category category;
  std::size_t reference_count;
  AugmentClass augment;
};

/// Rows A-G; throws kInvalidArgument for any other id.
const DatasetInfo& dataset_info(char id);
bool is_dataset_id(char id);

struct GenerateOptions {
  char dataset = 'A';
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  double resolution = 128.0;  // cells per metre
  SimConfig sim;              // cell_size is taken from the rasterized geometry
  int threads = 1;
  int max_retries = 5;
};

struct SequenceRecord {
  std::string file;
  std::uint64_t seed = 0;
  DomainSpec domain;
  DropletSpec droplet;
  int retries = 0;
};

struct DatasetManifest {
  int format_version = 1;
  char dataset_id = 'A';
  std::string name;
  std::string purpose;
  Category category = Category::kBox;
  double resolution = 128.0;
  double frame_interval = 0.03;
  std::size_t frames_per_sequence = 100;
  std::uint64_t master_seed = 0;
  std::vector<SequenceRecord> sequences;

  std::size_t sequence_count() const { return sequences.size(); }
};

inline constexpr const char* kManifestFile = "manifest.json";

DatasetManifest generate_dataset(const GenerateOptions& options);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);
void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& dir);

/// Loads every sequence of a dataset directory with extent and provenance set.
std::vector<WaveSequence> load_dataset(const std::filesystem::path& dir,
                                       DatasetManifest* manifest = nullptr);

/// Reads a sequence file, taking extent and provenance from a manifest in
/// the same directory when one lists it.
WaveSequence load_sequence(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training windows

struct TrainingWindow {
  Frame geometry;              // mask as 0/1 floats
  std::vector<Frame> inputs;   // normalized
  std::vector<Frame> targets;  // normalized
  std::vector<std::size_t> indices;
};

/// Largest valid origin s with s + stride * (4 + window_steps) < length.
std::size_t max_window_origin(std::size_t length, std::size_t window_steps, std::size_t stride);
std::vector<std::size_t> window_indices(std::size_t origin, std::size_t count, std::size_t stride);
WaveSequence select_frames(const WaveSequence& seq, std::span<const std::size_t> indices,
                           double frame_interval);
Frame mask_frame(const GeometryField& geometry);

/// Five input frames and `window_steps` targets spaced `stride` snapshots
/// apart from a uniformly drawn origin.
TrainingWindow make_training_window(const WaveSequence& seq, Rng& rng,
                                    std::size_t window_steps = 5, std::size_t stride = 4);

}  // namespace swnet
