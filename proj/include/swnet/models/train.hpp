#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "swnet/datagen.hpp"
#include "swnet/models/interp.hpp"
#include "swnet/models/unet.hpp"
#include "swnet/nn/optim.hpp"

namespace swnet::models {

/// Raw (physical-unit) sequences with the augmentation their dataset calls for.
struct TrainingSet {
  std::vector<WaveSequence> sequences;
  std::vector<AugmentClass> augment;

  std::size_t size() const { return sequences.size(); }
  bool empty() const { return sequences.empty(); }
  void add(WaveSequence seq, AugmentClass a);
  /// Appends every sequence of a generated dataset directory.
  void add_dataset(const std::filesystem::path& dir);
  /// Moves every `every`-th sequence (starting at `offset`) into a new set.
  TrainingSet split_off(std::size_t every, std::size_t offset = 0);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double validation_loss = 0.0;  // NaN when no validation set is given
};

/// Plain-text table, one row per epoch: epoch, lr, train loss, validation loss.
std::string format_history(const std::vector<EpochRecord>& history);

struct UNetTrainConfig {
  UNetConfig model;
  std::size_t epochs = 500;
  std::size_t batch_size = 16;
  std::size_t windows_per_sequence = 1;  // training windows per sequence per epoch
  std::size_t rollout_steps = 5;         // unrolled predictions per window
  std::size_t stride = 4;                // snapshots between network steps
  std::size_t resolution = 128;          // cells across the 1 m network window
  double base_lr = 1e-4;
  double lambda = 0.05;
  std::size_t validation_windows = 4;    // per validation sequence
  std::uint64_t seed = 0;

  void validate() const;
};

struct InterpTrainConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 16;
  std::size_t windows_per_sequence = 1;
  std::size_t resolution = 128;
  std::size_t patch = 0;       // square training crop; 0 trains on whole frames
  double noise_sigma = 1e-3;   // normalized units, added to fluid cells of the knots
  double base_lr = 1e-4;
  std::size_t validation_windows = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Everything needed to continue training bit-exactly: the model, the Adam
/// moments and the history. Epoch k draws its data from mix_seed(seed, k).
struct TrainSession {
  nn::Model<float> model;
  nn::AdamState adam;
  std::vector<EpochRecord> history;
  std::uint64_t seed = 0;

  std::size_t epochs_done() const { return history.size(); }
};

using EpochCallback = std::function<void(const TrainSession&)>;

TrainSession start_unet_session(const UNetTrainConfig& config);
TrainSession start_interp_session(const InterpTrainConfig& config);

/// BPTT over `rollout_steps` predictions fed back into the window, summing
/// the gradient loss of every step; one Adam update per batch. Runs epochs
/// from session.epochs_done() up to config.epochs.
void train_unet(TrainSession& session, const TrainingSet& train, const TrainingSet& validation,
                const UNetTrainConfig& config, const EpochCallback& on_epoch = {});

/// Noisy 0.12 s knots in, the 17 frames at 0.03 s out, MSE over all of them.
void train_interp3d(TrainSession& session, const TrainingSet& train,
                    const TrainingSet& validation, const InterpTrainConfig& config,
                    const EpochCallback& on_epoch = {});

struct UNetSample {
  Frame geometry;
  std::vector<Frame> inputs;   // 5 frames
  std::vector<Frame> targets;  // rollout_steps frames
};

struct InterpSample {
  Frame geometry;
  std::vector<Frame> knots;    // 5 frames, noise added
  std::vector<Frame> targets;  // 17 frames
};

/// One normalized window; `augmented` false takes the deterministic central view.
UNetSample draw_unet_sample(const WaveSequence& seq, AugmentClass augment, bool augmented,
                            Rng& rng, const UNetTrainConfig& config);
InterpSample draw_interp_sample(const WaveSequence& seq, AugmentClass augment, bool augmented,
                                Rng& rng, const InterpTrainConfig& config);

/// Mean per-step loss of the unrolled batch; differentiable when grad mode is on.
nn::Tensor<float> unet_batch_loss(const nn::Model<float>& model,
                                  std::span<const UNetSample> batch, const nn::LossConfig& loss);
nn::Tensor<float> interp_batch_loss(const nn::Model<float>& model,
                                    std::span<const InterpSample> batch);

/// Resume sidecar "<checkpoint>.state": Adam moments, step count and history.
std::filesystem::path state_path(const std::filesystem::path& checkpoint);
void save_session(const std::filesystem::path& checkpoint, const TrainSession& session);
TrainSession load_session(const std::filesystem::path& checkpoint);

}  // namespace swnet::models
