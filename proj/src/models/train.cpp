#include "swnet/models/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace swnet::models {

namespace {

constexpr std::uint64_t kValidationStream = 0x76616c6964ULL;

// Fisher-Yates on our own generator so the order is identical across standard libraries.
void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

nn::Tensor<float> stack(std::span<const Frame* const> frames) {
  const std::size_t h = frames[0]->rows(), w = frames[0]->cols(), plane = h * w;
  nn::Tensor<float> t({frames.size(), 1, h, w});
  for (std::size_t b = 0; b < frames.size(); ++b) {
    if (!frames[b]->same_shape(*frames[0])) {
      throw Error(ErrorCode::kShape, "batch frames differ in shape");
    }
    std::copy_n(frames[b]->storage().begin(), plane,
                t.data().begin() + static_cast<std::ptrdiff_t>(b * plane));
  }
  return t;
}

template <typename Sample, typename Member>
nn::Tensor<float> stack_member(std::span<const Sample> batch, Member pick) {
  std::vector<const Frame*> frames;
  frames.reserve(batch.size());
  for (const Sample& s : batch) frames.push_back(&pick(s));
  return stack(frames);
}

Frame crop(const Frame& f, std::size_t r0, std::size_t c0, std::size_t n) {
  Frame out(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) out(r, c) = f(r0 + r, c0 + c);
  return out;
}

void check_finite(double loss, const char* who, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    throw Error(ErrorCode::kNonFinite, std::string(who) + ": non-finite loss at epoch " +
                                           std::to_string(epoch) + ", batch " +
                                           std::to_string(batch));
  }
}

// Runs the shared epoch loop. `draw` builds the sample for one (sequence,
// rng) pair and `batch_loss` evaluates a batch.
template <typename Sample, typename Draw, typename Loss>
void run_epochs(TrainSession& session, const TrainingSet& train, const TrainingSet& validation,
                std::size_t epochs, std::size_t batch_size, std::size_t windows_per_sequence,
                std::size_t validation_windows, double base_lr, const char* who, Draw draw,
                Loss batch_loss, const EpochCallback& on_epoch) {
  if (session.epochs_done() >= epochs) return;
  if (train.empty()) throw Error(ErrorCode::kInvalidArgument, std::string(who) + ": no data");

  std::vector<Sample> val;
  {
    Rng vrng(mix_seed(session.seed, kValidationStream));
    for (std::size_t i = 0; i < validation.size(); ++i)
      for (std::size_t k = 0; k < validation_windows; ++k)
        val.push_back(draw(validation.sequences[i], validation.augment[i], false, vrng));
  }

  session.model.set_requires_grad(true);
  std::vector<nn::NamedParameter> params = nn::named_parameters(session.model);

  for (std::size_t epoch = session.epochs_done(); epoch < epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(session.seed, epoch + 1);
    Rng erng(epoch_seed);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < train.size(); ++i)
      for (std::size_t k = 0; k < windows_per_sequence; ++k) order.push_back(i);
    shuffle(order, erng);

    const double lr = nn::lr_schedule(static_cast<int>(epoch), base_lr);
    session.adam.config.learning_rate = lr;
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      std::vector<Sample> batch;
      batch.reserve(end - start);
      for (std::size_t j = start; j < end; ++j) {
        Rng srng(mix_seed(epoch_seed, j + 1));
        batch.push_back(draw(train.sequences[order[j]], train.augment[order[j]], true, srng));
      }
      session.model.zero_grad();
      const nn::Tensor<float> loss = batch_loss(std::span<const Sample>(batch));
      const double value = loss.item();
      check_finite(value, who, epoch + 1, batches + 1);
      loss.backward();
      nn::adam_step(params, session.adam);
      total += value;
      ++batches;
    }

    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!val.empty()) {
      nn::NoGradGuard guard;
      double acc = 0.0;
      std::size_t n = 0;
      for (std::size_t start = 0; start < val.size(); start += batch_size) {
        const std::size_t end = std::min(val.size(), start + batch_size);
        const std::span<const Sample> chunk(val.data() + start, end - start);
        acc += batch_loss(chunk).item() * static_cast<double>(chunk.size());
        n += chunk.size();
      }
      val_loss = acc / static_cast<double>(n);
    }
    session.model.zero_grad();
    session.history.push_back({epoch + 1, lr, total / static_cast<double>(batches), val_loss});
    if (on_epoch) on_epoch(session);
  }
}

// Little-endian byte helpers for the sidecar.
template <typename V>
void put(std::vector<std::uint8_t>& out, V value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(V));
}

template <typename V>
V take(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(V) > in.size()) throw Error(ErrorCode::kFormat, "training state truncated");
  V value;
  std::memcpy(&value, in.data() + pos, sizeof(V));
  pos += sizeof(V);
  return value;
}

constexpr char kStateMagic[4] = {'W', 'T', 'S', '1'};

}  // namespace

// ---------------------------------------------------------------------------

void TrainingSet::add(WaveSequence seq, AugmentClass a) {
  seq.validate();
  sequences.push_back(std::move(seq));
  augment.push_back(a);
}

void TrainingSet::add_dataset(const std::filesystem::path& dir) {
  DatasetManifest manifest;
  std::vector<WaveSequence> seqs = load_dataset(dir, &manifest);
  const AugmentClass a = dataset_info(manifest.dataset_id).augment;
  for (WaveSequence& s : seqs) add(std::move(s), a);
}

TrainingSet TrainingSet::split_off(std::size_t every, std::size_t offset) {
  if (every == 0) throw Error(ErrorCode::kInvalidArgument, "split_off: every must be positive");
  TrainingSet taken, kept;
  for (std::size_t i = 0; i < size(); ++i) {
    TrainingSet& dst = (i % every == offset) ? taken : kept;
    dst.sequences.push_back(std::move(sequences[i]));
    dst.augment.push_back(augment[i]);
  }
  *this = std::move(kept);
  return taken;
}

std::string format_history(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "# epoch lr train_loss validation_loss\n";
  os << std::setprecision(9);
  for (const EpochRecord& r : history) {
    os << r.epoch << ' ' << r.learning_rate << ' ' << r.train_loss << ' ';
    if (std::isnan(r.validation_loss)) {
      os << "nan";
    } else {
      os << r.validation_loss;
    }
    os << '\n';
  }
  return os.str();
}

void UNetTrainConfig::validate() const {
  model.validate();
  if (batch_size == 0 || windows_per_sequence == 0 || rollout_steps == 0 || stride == 0) {
    throw Error(ErrorCode::kInvalidArgument, "train_unet: counts must be positive");
  }
  if (resolution == 0 || resolution % 4 != 0) {
    throw Error(ErrorCode::kInvalidArgument, "train_unet: resolution must be a multiple of 4");
  }
  if (!(base_lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "train_unet: lr must be > 0");
  nn::LossConfig{lambda, 1.0}.validate();
}

void InterpTrainConfig::validate() const {
  if (batch_size == 0 || windows_per_sequence == 0 || resolution == 0) {
    throw Error(ErrorCode::kInvalidArgument, "train_interp3d: counts must be positive");
  }
  if (patch > resolution) {
    throw Error(ErrorCode::kInvalidArgument, "train_interp3d: patch exceeds the resolution");
  }
  if (!(noise_sigma >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train_interp3d: noise sigma must be >= 0");
  }
  if (!(base_lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "train_interp3d: lr must be > 0");
}

TrainSession start_unet_session(const UNetTrainConfig& config) {
  config.validate();
  Rng rng(config.seed);
  return {build_unet(config.model, rng), {}, {}, config.seed};
}

TrainSession start_interp_session(const InterpTrainConfig& config) {
  config.validate();
  Rng rng(config.seed);
  return {build_interp3d({}, rng), {}, {}, config.seed};
}

UNetSample draw_unet_sample(const WaveSequence& seq, AugmentClass augment, bool augmented,
                            Rng& rng, const UNetTrainConfig& config) {
  const std::size_t steps = config.rollout_steps;
  const std::size_t last = max_window_origin(seq.length(), steps, config.stride);
  const auto idx = window_indices(rng.index(last + 1), kHistoryFrames + steps, config.stride);
  const WaveSequence sub = select_frames(seq, idx, seq.frame_interval * config.stride);
  const WaveSequence view = augmented ? training_view(sub, augment, rng, config.resolution)
                                      : network_view(sub, config.resolution);
  UNetSample s;
  s.geometry = mask_frame(view.geometry);
  s.inputs.assign(view.frames.begin(), view.frames.begin() + kHistoryFrames);
  s.targets.assign(view.frames.begin() + kHistoryFrames, view.frames.end());
  return s;
}

InterpSample draw_interp_sample(const WaveSequence& seq, AugmentClass augment, bool augmented,
                                Rng& rng, const InterpTrainConfig& config) {
  const std::size_t span = interp_output_length(kHistoryFrames);
  if (seq.length() < span) {
    throw Error(ErrorCode::kShape, "train_interp3d: sequence shorter than 17 frames");
  }
  const std::size_t origin = rng.index(seq.length() - span + 1);
  std::vector<std::size_t> idx(span);
  for (std::size_t k = 0; k < span; ++k) idx[k] = origin + k;
  const WaveSequence sub = select_frames(seq, idx, seq.frame_interval);
  const WaveSequence view = augmented ? training_view(sub, augment, rng, config.resolution)
                                      : network_view(sub, config.resolution);
  InterpSample s;
  s.geometry = mask_frame(view.geometry);
  s.targets = view.frames;
  if (augmented && config.patch > 0 && config.patch < config.resolution) {
    const std::size_t r0 = rng.index(config.resolution - config.patch + 1);
    const std::size_t c0 = rng.index(config.resolution - config.patch + 1);
    s.geometry = crop(s.geometry, r0, c0, config.patch);
    for (Frame& f : s.targets) f = crop(f, r0, c0, config.patch);
  }
  for (std::size_t k = 0; k < kHistoryFrames; ++k) {
    Frame knot = s.targets[k * kInterpFactor];
    if (config.noise_sigma > 0.0) {
      for (std::size_t i = 0; i < knot.size(); ++i) {
        const double n = rng.normal();
        if (s.geometry[i] < 0.5f) knot[i] += static_cast<float>(config.noise_sigma * n);
      }
    }
    s.knots.push_back(std::move(knot));
  }
  return s;
}

nn::Tensor<float> unet_batch_loss(const nn::Model<float>& model,
                                  std::span<const UNetSample> batch, const nn::LossConfig& loss) {
  const nn::Tensor<float> geometry =
      stack_member(batch, [](const UNetSample& s) -> const Frame& { return s.geometry; });
  std::vector<nn::Tensor<float>> window;
  for (std::size_t k = 0; k < kHistoryFrames; ++k) {
    window.push_back(
        stack_member(batch, [k](const UNetSample& s) -> const Frame& { return s.inputs[k]; }));
  }
  const std::size_t steps = batch.front().targets.size();
  nn::Tensor<float> total;
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<nn::Tensor<float>> parts{geometry};
    parts.insert(parts.end(), window.begin(), window.end());
    const nn::Tensor<float> pred =
        nn::masked_fill(model.forward(nn::concat_channels(parts)), geometry, 0.0f);
    const nn::Tensor<float> target =
        stack_member(batch, [s](const UNetSample& x) -> const Frame& { return x.targets[s]; });
    const nn::Tensor<float> l = nn::gradient_loss(pred, target, loss);
    total = total.defined() ? nn::add(total, l) : l;
    window.erase(window.begin());
    window.push_back(pred);
  }
  return nn::scale(total, 1.0f / static_cast<float>(steps));
}

nn::Tensor<float> interp_batch_loss(const nn::Model<float>& model,
                                    std::span<const InterpSample> batch) {
  const std::size_t t_in = batch.front().knots.size();
  const std::size_t t_out = batch.front().targets.size();
  const std::size_t h = batch.front().geometry.rows(), w = batch.front().geometry.cols();
  const std::size_t plane = h * w;
  nn::Tensor<float> x({batch.size(), 1, t_in, h, w});
  nn::Tensor<float> y({batch.size(), 1, t_out, h, w});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t t = 0; t < t_in; ++t) {
      std::copy_n(batch[b].knots[t].storage().begin(), plane,
                  x.data().begin() + static_cast<std::ptrdiff_t>((b * t_in + t) * plane));
    }
    for (std::size_t t = 0; t < t_out; ++t) {
      std::copy_n(batch[b].targets[t].storage().begin(), plane,
                  y.data().begin() + static_cast<std::ptrdiff_t>((b * t_out + t) * plane));
    }
  }
  return nn::mse(model.forward(x), y);
}

void train_unet(TrainSession& session, const TrainingSet& train, const TrainingSet& validation,
                const UNetTrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const nn::LossConfig loss{config.lambda, 1.0 / static_cast<double>(config.resolution)};
  run_epochs<UNetSample>(
      session, train, validation, config.epochs, config.batch_size, config.windows_per_sequence,
      config.validation_windows, config.base_lr, "train_unet",
      [&](const WaveSequence& seq, AugmentClass a, bool aug, Rng& rng) {
        return draw_unet_sample(seq, a, aug, rng, config);
      },
      [&](std::span<const UNetSample> batch) {
        return unet_batch_loss(session.model, batch, loss);
      },
      on_epoch);
}

void train_interp3d(TrainSession& session, const TrainingSet& train,
                    const TrainingSet& validation, const InterpTrainConfig& config,
                    const EpochCallback& on_epoch) {
  config.validate();
  run_epochs<InterpSample>(
      session, train, validation, config.epochs, config.batch_size, config.windows_per_sequence,
      config.validation_windows, config.base_lr, "train_interp3d",
      [&](const WaveSequence& seq, AugmentClass a, bool aug, Rng& rng) {
        return draw_interp_sample(seq, a, aug, rng, config);
      },
      [&](std::span<const InterpSample> batch) { return interp_batch_loss(session.model, batch); },
      on_epoch);
}

// ---------------------------------------------------------------------------
// Sidecar: "WTS1" | u32 version | u64 seed | u64 adam step | u32 tensors
//          | per tensor u64 n, f32 m[n], f32 v[n] | u32 rows
//          | per row u32 epoch, f64 lr, f64 train, f64 validation

std::filesystem::path state_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  p += ".state";
  return p;
}

void save_session(const std::filesystem::path& checkpoint, const TrainSession& session) {
  nn::save_checkpoint(checkpoint, session.model);
  std::vector<std::uint8_t> out(kStateMagic, kStateMagic + 4);
  put<std::uint32_t>(out, 1);
  put<std::uint64_t>(out, session.seed);
  put<std::uint64_t>(out, session.adam.step);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(session.adam.m.size()));
  for (std::size_t k = 0; k < session.adam.m.size(); ++k) {
    put<std::uint64_t>(out, session.adam.m[k].size());
    for (float v : session.adam.m[k]) put(out, v);
    for (float v : session.adam.v[k]) put(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(session.history.size()));
  for (const EpochRecord& r : session.history) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.epoch));
    put(out, r.learning_rate);
    put(out, r.train_loss);
    put(out, r.validation_loss);
  }
  std::ofstream f(state_path(checkpoint), std::ios::binary);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + state_path(checkpoint).string());
}

TrainSession load_session(const std::filesystem::path& checkpoint) {
  TrainSession s;
  s.model = nn::load_checkpoint(checkpoint);
  const auto path = state_path(checkpoint);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::vector<std::uint8_t> in((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
  if (in.size() < 4 || std::memcmp(in.data(), kStateMagic, 4) != 0) {
    throw Error(ErrorCode::kFormat, path.string() + " is not a training state file");
  }
  std::size_t pos = 4;
  if (take<std::uint32_t>(in, pos) != 1) {
    throw Error(ErrorCode::kFormat, "unsupported training state version");
  }
  s.seed = take<std::uint64_t>(in, pos);
  s.adam.step = take<std::uint64_t>(in, pos);
  const auto tensors = take<std::uint32_t>(in, pos);
  const auto& params = s.model.parameters();
  if (tensors != 0 && tensors != params.size()) {
    throw Error(ErrorCode::kFormat, "training state does not match the checkpoint");
  }
  for (std::uint32_t k = 0; k < tensors; ++k) {
    const auto n = take<std::uint64_t>(in, pos);
    if (n != params[k].numel()) {
      throw Error(ErrorCode::kFormat, "training state moment size mismatch");
    }
    std::vector<float> m(n), v(n);
    for (auto& x : m) x = take<float>(in, pos);
    for (auto& x : v) x = take<float>(in, pos);
    s.adam.m.push_back(std::move(m));
    s.adam.v.push_back(std::move(v));
  }
  const auto rows = take<std::uint32_t>(in, pos);
  for (std::uint32_t r = 0; r < rows; ++r) {
    EpochRecord e;
    e.epoch = take<std::uint32_t>(in, pos);
    e.learning_rate = take<double>(in, pos);
    e.train_loss = take<double>(in, pos);
    e.validation_loss = take<double>(in, pos);
    s.history.push_back(e);
  }
  if (pos != in.size()) throw Error(ErrorCode::kFormat, "trailing bytes in training state");
  return s;
}

}  // namespace swnet::models
