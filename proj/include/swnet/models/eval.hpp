#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "swnet/geometry.hpp"
#include "swnet/nn/model.hpp"
#include "swnet/sequence.hpp"

namespace swnet::models {

struct FrameError {
  double l1 = 0.0;    // mean absolute error over fluid cells
  double rmse = 0.0;
};

/// Errors over cells where the geometry is fluid. Throws kGeometry when
/// there are none and kShape on mismatched grids.
FrameError fluid_error(const Frame& pred, const Frame& truth, const GeometryField& geometry);

struct ErrorCurve {
  std::vector<double> l1;
  std::vector<double> rmse;
};

struct Timing {
  double solver_seconds_per_sim_second = 0.0;
  double network_seconds_per_sim_second = 0.0;
  double ratio = 0.0;  // solver over network
};

struct EvalReport {
  std::size_t steps = 0;
  double frame_interval = 0.0;
  ErrorCurve network;
  std::optional<ErrorCurve> persistence;  // last truth frame before the predictions, held
  std::optional<ErrorCurve> linear;       // linear interpolation between every 4th truth frame
  std::optional<Timing> timing;

  /// Curve lengths equal `steps` and every number is finite.
  void validate() const;
};

/// Compares `pred` with the last pred.length() frames of `truth`, in
/// normalized units. Extra leading truth frames supply the persistence
/// baseline; a 0.03 s prediction of 4k + 1 frames also gets the linear one.
/// Throws kInvalidArgument on a cadence mismatch and kShape on grid mismatch.
EvalReport evaluate(const WaveSequence& pred, const WaveSequence& truth);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

/// Binary PGM: normalized [-1, 1] maps linearly to [0, max], solid cells are 0.
std::vector<std::uint8_t> encode_pgm(const Frame& frame, const Grid<std::uint8_t>& mask,
                                     bool sixteen_bit = false);
/// One "frame_00000.pgm" per frame; returns the written paths.
std::vector<std::filesystem::path> render_sequence(const WaveSequence& seq,
                                                   const std::filesystem::path& dir,
                                                   bool sixteen_bit = false);

/// Seed frames are the first five source frames at the 0.12 s stride, so the
/// source cadence must divide 0.12 s. Frames are normalized when they are
/// not already; the grid must suit the model.
struct RolloutRequest {
  std::size_t steps = 1;
  const nn::Model<float>* interp = nullptr;  // refine the predictions to 0.03 s
  bool double_precision = false;
};

struct RolloutRun {
  WaveSequence prediction;
  /// Source frames at the prediction cadence from the last seed frame up to
  /// the last predicted time; empty when the source is too short or too coarse.
  std::optional<WaveSequence> truth;
};

RolloutRun run_rollout(const nn::Model<float>& unet, const WaveSequence& source,
                       const RolloutRequest& request);

struct BenchOptions {
  Category category = Category::kBox;
  double sim_seconds = 1.2;
  std::size_t grid = 128;  // cells along the longer side, shared by solver and network
  std::uint64_t seed = 0;
  bool double_precision = false;  // run the network in f64
};

struct BenchResult {
  double sim_seconds = 0.0;
  std::size_t network_steps = 0;
  double solver_seconds = 0.0;
  double network_seconds = 0.0;
  Timing timing;
};

/// Wall-clock time of the solver and of a network rollout over the same
/// simulated span on the same grid. The rollout is seeded from the first
/// five solver snapshots and only the rollout itself is timed.
BenchResult bench(const nn::Model<float>& model, const BenchOptions& options);

}  // namespace swnet::models
