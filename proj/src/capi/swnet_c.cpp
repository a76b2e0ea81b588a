#include "swnet.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <new>
#include <string>

#include "swnet/datagen.hpp"
#include "swnet/models/eval.hpp"
#include "swnet/models/train.hpp"

struct swnet_sequence {
  swnet::WaveSequence seq;
};

struct swnet_model {
  swnet::nn::Model<float> model;
};

namespace {

namespace fs = std::filesystem;
using swnet::Error;
using swnet::ErrorCode;

thread_local std::string g_last_error;

swnet_status fail(swnet_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
swnet_status guarded(F&& body) {
  try {
    body();
    return SWNET_OK;
  } catch (const Error& e) {
    return fail(static_cast<swnet_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SWNET_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SWNET_INTERNAL, e.what());
  } catch (...) {
    return fail(SWNET_INTERNAL, "unknown exception");
  }
}

void require(bool ok, const char* message) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, message);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void check_family(const swnet::nn::Model<float>& m, swnet::nn::ModelFamily want, const char* what) {
  if (m.spec().family != want) {
    throw Error(ErrorCode::kInvalidArgument, std::string("model is not a ") + what + " checkpoint");
  }
}

swnet::models::TrainingSet load_sets(const char* const* dirs, std::size_t count) {
  swnet::models::TrainingSet set;
  for (std::size_t i = 0; i < count; ++i) {
    require(dirs[i] != nullptr, "null dataset directory");
    set.add_dataset(dirs[i]);
  }
  return set;
}

void write_history(const char* path, const swnet::models::TrainSession& s) {
  if (!path) return;
  std::ofstream f(path, std::ios::binary);
  f << swnet::models::format_history(s.history);
  if (!f) throw Error(ErrorCode::kIo, std::string("cannot write loss history ") + path);
}

void report_epoch(const swnet_train_options* o, const swnet::models::TrainSession& s) {
  if (!o->on_epoch) return;
  const auto& r = s.history.back();
  const swnet_epoch e{r.epoch, r.learning_rate, r.train_loss, r.validation_loss};
  o->on_epoch(&e, o->user);
}

void init_train(swnet_train_options* o) {
  std::memset(o, 0, sizeof *o);
}

swnet_status train(const swnet_train_options* o, bool unet) {
  return guarded([&] {
    require(o != nullptr, "null options");
    require(o->checkpoint != nullptr, "checkpoint path is required");
    require(o->data_dir_count > 0 && o->data_dirs != nullptr, "at least one dataset is required");
    const swnet::models::TrainingSet train = load_sets(o->data_dirs, o->data_dir_count);
    const swnet::models::TrainingSet validation =
        o->validation_dirs ? load_sets(o->validation_dirs, o->validation_dir_count)
                           : swnet::models::TrainingSet{};
    const fs::path ck(o->checkpoint);
    const auto family = unet ? swnet::nn::ModelFamily::kUNet : swnet::nn::ModelFamily::kInterp3d;

    swnet::models::UNetTrainConfig uc;
    swnet::models::InterpTrainConfig ic;
    if (unet) {
      uc.model.width = o->width;
      uc.epochs = o->epochs;
      uc.batch_size = o->batch_size;
      uc.windows_per_sequence = o->windows_per_sequence;
      uc.validation_windows = o->validation_windows;
      uc.resolution = o->resolution;
      uc.base_lr = o->learning_rate;
      uc.seed = o->seed;
      uc.validate();
    } else {
      ic.epochs = o->epochs;
      ic.batch_size = o->batch_size;
      ic.windows_per_sequence = o->windows_per_sequence;
      ic.validation_windows = o->validation_windows;
      ic.resolution = o->resolution;
      ic.patch = o->patch;
      ic.noise_sigma = o->noise_sigma;
      ic.base_lr = o->learning_rate;
      ic.seed = o->seed;
      ic.validate();
    }

    swnet::models::TrainSession session;
    if (o->resume && fs::exists(ck) && fs::exists(swnet::models::state_path(ck))) {
      session = swnet::models::load_session(ck);
      check_family(session.model, family, unet ? "U-Net" : "3D-CNN");
      if (session.epochs_done() > o->epochs) {
        throw Error(ErrorCode::kInvalidArgument,
                    "checkpoint already has " + std::to_string(session.epochs_done()) +
                        " epochs, more than the requested " + std::to_string(o->epochs));
      }
      // The stored seed wins so the continuation matches an uninterrupted run.
      uc.seed = ic.seed = session.seed;
    } else {
      session = unet ? swnet::models::start_unet_session(uc)
                     : swnet::models::start_interp_session(ic);
    }
    // Checkpoint first so an interrupted run can always resume.
    swnet::models::save_session(ck, session);
    write_history(o->history, session);

    const auto on_epoch = [&](const swnet::models::TrainSession& s) {
      swnet::models::save_session(ck, s);
      write_history(o->history, s);
      report_epoch(o, s);
    };
    if (unet) {
      swnet::models::train_unet(session, train, validation, uc, on_epoch);
    } else {
      swnet::models::train_interp3d(session, train, validation, ic, on_epoch);
    }
  });
}

swnet_sequence* wrap(swnet::WaveSequence seq) { return new swnet_sequence{std::move(seq)}; }

}  // namespace

extern "C" {

const char* swnet_version(void) { return "1.0.0"; }

const char* swnet_status_name(swnet_status status) {
  switch (status) {
    case SWNET_OK: return "ok";
    case SWNET_INTERNAL: return "internal";
    default:
      if (status >= SWNET_INVALID_ARGUMENT && status <= SWNET_GEOMETRY) {
        return swnet::to_string(static_cast<ErrorCode>(status));
      }
      return "unknown";
  }
}

const char* swnet_last_error(void) { return g_last_error.c_str(); }

void swnet_free_string(char* text) { std::free(text); }

void swnet_generate_options_init(swnet_generate_options* o) {
  if (!o) return;
  const swnet::GenerateOptions d;
  o->dataset = d.dataset;
  o->count = 0;
  o->seed = 0;
  o->out_dir = nullptr;
  o->resolution = d.resolution;
  o->threads = d.threads;
}

int swnet_is_dataset_id(char id) { return swnet::is_dataset_id(id) ? 1 : 0; }

swnet_status swnet_generate(const swnet_generate_options* o, char** manifest_json) {
  if (manifest_json) *manifest_json = nullptr;
  return guarded([&] {
    require(o != nullptr, "null options");
    require(o->out_dir != nullptr, "output directory is required");
    require(swnet::is_dataset_id(o->dataset), "dataset id must be one of A-G");
    swnet::GenerateOptions g;
    g.dataset = o->dataset;
    g.count = o->count;
    g.seed = o->seed;
    g.out_dir = o->out_dir;
    g.resolution = o->resolution;
    g.threads = o->threads;
    const auto manifest = swnet::generate_dataset(g);
    if (manifest_json) *manifest_json = dup_string(swnet::manifest_to_json(manifest));
  });
}

swnet_status swnet_sequence_load(const char* path, const double* extent, swnet_sequence** out) {
  if (out) *out = nullptr;
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    swnet::WaveSequence seq;
    if (extent) {
      require(extent[0] > 0.0 && extent[1] > 0.0, "extent must be positive");
      seq = swnet::read_sequence(path, swnet::Vec2{extent[0], extent[1]});
    } else {
      seq = swnet::load_sequence(path);
    }
    *out = wrap(std::move(seq));
  });
}

swnet_status swnet_sequence_save(const swnet_sequence* seq, const char* path) {
  return guarded([&] {
    require(seq != nullptr && path != nullptr, "null argument");
    swnet::write_sequence(path, seq->seq);
  });
}

void swnet_sequence_free(swnet_sequence* seq) { delete seq; }

swnet_status swnet_sequence_info_get(const swnet_sequence* seq, swnet_sequence_info* info) {
  return guarded([&] {
    require(seq != nullptr && info != nullptr, "null argument");
    const auto& s = seq->seq;
    *info = {s.rows(), s.cols(), s.length(), s.frame_interval, s.normalized ? 1 : 0,
             s.geometry.extent.x, s.geometry.extent.y};
  });
}

swnet_status swnet_sequence_frame(const swnet_sequence* seq, size_t t, float* out, size_t count) {
  return guarded([&] {
    require(seq != nullptr && out != nullptr, "null argument");
    const auto& s = seq->seq;
    if (t >= s.length()) throw Error(ErrorCode::kInvalidArgument, "frame index out of range");
    if (count != s.rows() * s.cols()) throw Error(ErrorCode::kShape, "buffer size mismatch");
    std::copy(s.frames[t].storage().begin(), s.frames[t].storage().end(), out);
  });
}

swnet_status swnet_sequence_mask(const swnet_sequence* seq, uint8_t* out, size_t count) {
  return guarded([&] {
    require(seq != nullptr && out != nullptr, "null argument");
    const auto& m = seq->seq.geometry.mask;
    if (count != m.size()) throw Error(ErrorCode::kShape, "buffer size mismatch");
    std::copy(m.storage().begin(), m.storage().end(), out);
  });
}

swnet_status swnet_sequence_view(const swnet_sequence* seq, size_t grid, swnet_sequence** out) {
  if (out) *out = nullptr;
  return guarded([&] {
    require(seq != nullptr && out != nullptr, "null argument");
    require(grid > 0, "grid must be positive");
    *out = wrap(swnet::network_view(seq->seq, grid));
  });
}

swnet_status swnet_model_load(const char* path, swnet_model** out) {
  if (out) *out = nullptr;
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    *out = new swnet_model{swnet::nn::load_checkpoint(path)};
  });
}

swnet_status swnet_model_save(const swnet_model* model, const char* path) {
  return guarded([&] {
    require(model != nullptr && path != nullptr, "null argument");
    swnet::nn::save_checkpoint(path, model->model);
  });
}

void swnet_model_free(swnet_model* model) { delete model; }

swnet_status swnet_model_info_get(const swnet_model* model, swnet_model_info* info) {
  return guarded([&] {
    require(model != nullptr && info != nullptr, "null argument");
    const auto& spec = model->model.spec();
    *info = {static_cast<swnet_model_family>(spec.family), model->model.parameter_count(),
             spec.input_channels()};
  });
}

void swnet_train_unet_options_init(swnet_train_options* o) {
  if (!o) return;
  init_train(o);
  const swnet::models::UNetTrainConfig d;
  o->epochs = d.epochs;
  o->batch_size = d.batch_size;
  o->windows_per_sequence = d.windows_per_sequence;
  o->validation_windows = d.validation_windows;
  o->resolution = d.resolution;
  o->width = d.model.width;
  o->learning_rate = d.base_lr;
}

void swnet_train_interp_options_init(swnet_train_options* o) {
  if (!o) return;
  init_train(o);
  const swnet::models::InterpTrainConfig d;
  o->epochs = d.epochs;
  o->batch_size = d.batch_size;
  o->windows_per_sequence = d.windows_per_sequence;
  o->validation_windows = d.validation_windows;
  o->resolution = d.resolution;
  o->patch = d.patch;
  o->noise_sigma = d.noise_sigma;
  o->learning_rate = d.base_lr;
}

swnet_status swnet_train_unet(const swnet_train_options* o) { return train(o, true); }
swnet_status swnet_train_interp(const swnet_train_options* o) { return train(o, false); }

void swnet_rollout_options_init(swnet_rollout_options* o) {
  if (!o) return;
  o->steps = 1;
  o->grid = 0;
  o->precision = SWNET_F32;
  o->interp = nullptr;
}

swnet_status swnet_rollout(const swnet_model* unet, const swnet_sequence* source,
                           const swnet_rollout_options* o, swnet_sequence** prediction,
                           swnet_sequence** truth) {
  if (prediction) *prediction = nullptr;
  if (truth) *truth = nullptr;
  return guarded([&] {
    require(unet != nullptr && source != nullptr && o != nullptr && prediction != nullptr,
            "null argument");
    check_family(unet->model, swnet::nn::ModelFamily::kUNet, "U-Net");
    if (o->interp) check_family(o->interp->model, swnet::nn::ModelFamily::kInterp3d, "3D-CNN");
    swnet::models::RolloutRequest req;
    req.steps = o->steps;
    req.interp = o->interp ? &o->interp->model : nullptr;
    req.double_precision = o->precision == SWNET_F64;
    auto run = swnet::models::run_rollout(
        unet->model, o->grid ? swnet::network_view(source->seq, o->grid) : source->seq, req);
    swnet_sequence* p = wrap(std::move(run.prediction));
    if (truth && run.truth) {
      try {
        *truth = wrap(std::move(*run.truth));
      } catch (...) {
        delete p;
        throw;
      }
    }
    *prediction = p;
  });
}

swnet_status swnet_evaluate(const swnet_sequence* prediction, const swnet_sequence* truth,
                            char** report_json) {
  if (report_json) *report_json = nullptr;
  return guarded([&] {
    require(prediction != nullptr && truth != nullptr && report_json != nullptr,
            "null argument");
    const auto report = swnet::models::evaluate(prediction->seq, truth->seq);
    *report_json = dup_string(swnet::models::report_to_json(report));
  });
}

swnet_status swnet_render(const swnet_sequence* seq, const char* dir, int sixteen_bit,
                          size_t* written) {
  if (written) *written = 0;
  return guarded([&] {
    require(seq != nullptr && dir != nullptr, "null argument");
    const auto paths = swnet::models::render_sequence(seq->seq, dir, sixteen_bit != 0);
    if (written) *written = paths.size();
  });
}

void swnet_bench_options_init(swnet_bench_options* o) {
  if (!o) return;
  const swnet::models::BenchOptions d;
  o->category = "Box";
  o->sim_seconds = d.sim_seconds;
  o->grid = d.grid;
  o->seed = d.seed;
  o->precision = SWNET_F32;
}

swnet_status swnet_bench(const swnet_model* unet, const swnet_bench_options* o,
                         swnet_bench_result* result) {
  return guarded([&] {
    require(unet != nullptr && o != nullptr && result != nullptr, "null argument");
    require(o->category != nullptr, "category is required");
    check_family(unet->model, swnet::nn::ModelFamily::kUNet, "U-Net");
    const auto category = swnet::parse_category(o->category);
    if (!category) {
      throw Error(ErrorCode::kInvalidArgument, std::string("unknown category ") + o->category);
    }
    swnet::models::BenchOptions b;
    b.category = *category;
    b.sim_seconds = o->sim_seconds;
    b.grid = o->grid;
    b.seed = o->seed;
    b.double_precision = o->precision == SWNET_F64;
    const auto r = swnet::models::bench(unet->model, b);
    *result = {r.sim_seconds,
               r.network_steps,
               r.solver_seconds,
               r.network_seconds,
               r.timing.solver_seconds_per_sim_second,
               r.timing.network_seconds_per_sim_second,
               r.timing.ratio};
  });
}

}  // extern "C"
