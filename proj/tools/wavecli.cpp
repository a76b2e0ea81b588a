// wavecli: data generation, training, rollout, evaluation, rendering and
// benchmarking on top of the C API. Exit codes: 0 ok, 1 runtime, 2 usage.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "swnet.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// JSON config: top-level scalars and arrays set global flags, an object keyed
// by a subcommand name sets that subcommand's flags.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    throw CLI::ConfigError("writing JSON config is not supported");
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  }

  static void collect(const nlohmann::json& j, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        collect(value, p, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string precision = "f32";
  swnet_precision mode() const { return precision == "f64" ? SWNET_F64 : SWNET_F32; }
};

// Runtime failure carrying the C API status text.
struct Failure {
  std::string message;
};

void check(swnet_status s, const std::string& what) {
  if (s != SWNET_OK) {
    throw Failure{what + ": " + swnet_status_name(s) + ": " + swnet_last_error()};
  }
}

struct SequenceDeleter {
  void operator()(swnet_sequence* s) const { swnet_sequence_free(s); }
};
struct ModelDeleter {
  void operator()(swnet_model* m) const { swnet_model_free(m); }
};
struct StringDeleter {
  void operator()(char* s) const { swnet_free_string(s); }
};
using SequencePtr = std::unique_ptr<swnet_sequence, SequenceDeleter>;
using ModelPtr = std::unique_ptr<swnet_model, ModelDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

SequencePtr load_sequence(const std::string& path, const std::vector<double>& extent) {
  swnet_sequence* s = nullptr;
  check(swnet_sequence_load(path.c_str(), extent.empty() ? nullptr : extent.data(), &s),
        "reading " + path);
  return SequencePtr(s);
}

ModelPtr load_model(const std::string& path) {
  swnet_model* m = nullptr;
  check(swnet_model_load(path.c_str(), &m), "reading " + path);
  return ModelPtr(m);
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string dataset;
  std::size_t count = 0;
  std::string out;
  double resolution = 128.0;
};

void run_generate(const GenerateArgs& a, const Globals& g) {
  swnet_generate_options o;
  swnet_generate_options_init(&o);
  o.dataset = a.dataset.at(0);
  o.count = a.count;
  o.seed = g.seed;
  o.out_dir = a.out.c_str();
  o.resolution = a.resolution;
  o.threads = g.threads;
  char* text = nullptr;
  check(swnet_generate(&o, &text), "generate");
  const StringPtr owned(text);
  const auto m = nlohmann::json::parse(text);
  std::printf("dataset %s (%s, %s): %zu sequences x %zu frames at %.3f s, %.0f cells/m -> %s\n",
              m.at("dataset_id").get<std::string>().c_str(),
              m.at("name").get<std::string>().c_str(),
              m.at("category").get<std::string>().c_str(), m.at("sequences").size(),
              m.at("frames_per_sequence").get<std::size_t>(),
              m.at("frame_interval").get<double>(), m.at("resolution").get<double>(),
              a.out.c_str());
}

struct TrainArgs {
  std::vector<std::string> data;
  std::vector<std::string> validation;
  std::size_t epochs = 0;
  std::size_t width = 0;
  std::size_t batch = 0;
  std::size_t windows = 0;
  std::size_t validation_windows = 0;
  std::size_t resolution = 0;
  std::size_t patch = 0;
  double noise = 0.0;
  double lr = 0.0;
  std::string out;
  std::string history;
  bool resume = false;
};

void print_epoch(const swnet_epoch* e, void*) {
  std::printf("epoch %zu lr %.3g train %.6e", e->epoch, e->learning_rate, e->train_loss);
  if (!std::isnan(e->validation_loss)) std::printf(" validation %.6e", e->validation_loss);
  std::printf("\n");
  std::fflush(stdout);
}

void run_train(const TrainArgs& a, const Globals& g, bool unet) {
  swnet_train_options o;
  if (unet) {
    swnet_train_unet_options_init(&o);
  } else {
    swnet_train_interp_options_init(&o);
  }
  std::vector<const char*> data, val;
  for (const auto& d : a.data) data.push_back(d.c_str());
  for (const auto& d : a.validation) val.push_back(d.c_str());
  o.data_dirs = data.data();
  o.data_dir_count = data.size();
  o.validation_dirs = val.empty() ? nullptr : val.data();
  o.validation_dir_count = val.size();
  o.epochs = a.epochs;
  o.batch_size = a.batch;
  o.windows_per_sequence = a.windows;
  o.validation_windows = a.validation_windows;
  o.resolution = a.resolution;
  o.width = a.width;
  o.patch = a.patch;
  o.noise_sigma = a.noise;
  o.learning_rate = a.lr;
  o.seed = g.seed;
  o.checkpoint = a.out.c_str();
  const std::string history = a.history.empty() ? a.out + ".loss.txt" : a.history;
  o.history = history.c_str();
  o.resume = a.resume ? 1 : 0;
  o.on_epoch = print_epoch;
  check(unet ? swnet_train_unet(&o) : swnet_train_interp(&o), unet ? "train-unet" : "train-interp");
  std::printf("checkpoint %s, loss history %s\n", a.out.c_str(), history.c_str());
}

struct RolloutArgs {
  std::string model;
  std::string interp;
  std::string sequence;
  std::size_t steps = 1;
  std::size_t grid = 0;
  std::vector<double> extent;
  std::string out;
  std::string truth_out;
};

void run_rollout(const RolloutArgs& a, const Globals& g) {
  const ModelPtr unet = load_model(a.model);
  const ModelPtr interp = a.interp.empty() ? nullptr : load_model(a.interp);
  const SequencePtr source = load_sequence(a.sequence, a.extent);
  swnet_rollout_options o;
  swnet_rollout_options_init(&o);
  o.steps = a.steps;
  o.grid = a.grid;
  o.precision = g.mode();
  o.interp = interp.get();
  swnet_sequence* p = nullptr;
  swnet_sequence* t = nullptr;
  check(swnet_rollout(unet.get(), source.get(), &o, &p, a.truth_out.empty() ? nullptr : &t),
        "rollout");
  const SequencePtr pred(p), truth(t);
  check(swnet_sequence_save(pred.get(), a.out.c_str()), "writing " + a.out);
  swnet_sequence_info info;
  check(swnet_sequence_info_get(pred.get(), &info), "rollout");
  std::printf("%zu frames at %.2f s (%zux%zu) -> %s\n", info.length, info.frame_interval,
              info.rows, info.cols, a.out.c_str());
  if (!a.truth_out.empty()) {
    if (!truth) throw Failure{"rollout: the source sequence does not cover the predicted span"};
    check(swnet_sequence_save(truth.get(), a.truth_out.c_str()), "writing " + a.truth_out);
    std::printf("truth -> %s\n", a.truth_out.c_str());
  }
}

struct EvaluateArgs {
  std::string pred;
  std::string truth;
  std::string report;
  std::vector<double> extent;
};

double mean_of(const nlohmann::json& curve) {
  const auto v = curve.get<std::vector<double>>();
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void run_evaluate(const EvaluateArgs& a) {
  const SequencePtr pred = load_sequence(a.pred, a.extent);
  const SequencePtr truth = load_sequence(a.truth, a.extent);
  char* text = nullptr;
  check(swnet_evaluate(pred.get(), truth.get(), &text), "evaluate");
  const StringPtr owned(text);
  if (!a.report.empty()) {
    std::ofstream f(a.report, std::ios::binary);
    f << text << '\n';
    if (!f) throw Failure{"cannot write " + a.report};
  }
  const auto r = nlohmann::json::parse(text);
  std::printf("%zu steps, mean L1 network %.6e", r.at("steps").get<std::size_t>(),
              mean_of(r.at("network").at("l1")));
  if (!r.at("persistence").is_null()) {
    std::printf(", persistence %.6e", mean_of(r.at("persistence").at("l1")));
  }
  if (!r.at("linear").is_null()) std::printf(", linear %.6e", mean_of(r.at("linear").at("l1")));
  std::printf("\n");
}

struct RenderArgs {
  std::string sequence;
  std::string out;
  std::string format = "pgm";
  bool sixteen_bit = false;
  std::vector<double> extent;
};

void run_render(const RenderArgs& a) {
  const SequencePtr seq = load_sequence(a.sequence, a.extent);
  std::size_t written = 0;
  check(swnet_render(seq.get(), a.out.c_str(), a.sixteen_bit ? 1 : 0, &written), "render");
  std::printf("%zu images -> %s\n", written, a.out.c_str());
}

struct BenchArgs {
  std::string model;
  std::string geometry = "Box";
  double sim_seconds = 1.2;
  std::size_t grid = 128;
};

void run_bench(const BenchArgs& a, const Globals& g) {
  const ModelPtr unet = load_model(a.model);
  swnet_bench_options o;
  swnet_bench_options_init(&o);
  o.category = a.geometry.c_str();
  o.sim_seconds = a.sim_seconds;
  o.grid = a.grid;
  o.seed = g.seed;
  o.precision = g.mode();
  swnet_bench_result r;
  check(swnet_bench(unet.get(), &o, &r), "bench");
  std::printf("%s %zux%zu, %.2f s simulated (%zu network steps)\n", a.geometry.c_str(), a.grid,
              a.grid, r.sim_seconds, r.network_steps);
  std::printf("solver  %.4f s per simulated second\n", r.solver_seconds_per_sim_second);
  std::printf("network %.4f s per simulated second\n", r.network_seconds_per_sim_second);
  std::printf("ratio %.2f\n", r.ratio);
}

void add_extent(CLI::App* c, std::vector<double>& extent) {
  c->add_option("--extent", extent, "Physical extent X Y in metres when no manifest gives it")
      ->expected(2)
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Shallow-water wave simulation and neural surrogate toolkit", "wavecli");
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file supplying any flag; the command line overrides it");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for data generation")
      ->check(CLI::Range(1, 256))
      ->capture_default_str();
  app.add_option("--precision", g.precision, "Inference precision")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Simulate a dataset (A-G)");
  generate->add_option("--dataset", gen.dataset, "Dataset id")
      ->required()
      ->check(CLI::IsMember({"A", "B", "C", "D", "E", "F", "G"}));
  generate->add_option("--count", gen.count, "Number of sequences")
      ->required()
      ->check(CLI::PositiveNumber);
  generate->add_option("--out", gen.out, "Output directory")->required();
  generate->add_option("--resolution", gen.resolution, "Cells per metre")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  TrainArgs tu, ti;
  const auto add_train = [](CLI::App* c, TrainArgs& a, bool unet) {
    swnet_train_options d;
    if (unet) {
      swnet_train_unet_options_init(&d);
    } else {
      swnet_train_interp_options_init(&d);
    }
    a.epochs = d.epochs;
    a.width = d.width;
    a.batch = d.batch_size;
    a.windows = d.windows_per_sequence;
    a.validation_windows = d.validation_windows;
    a.resolution = d.resolution;
    a.patch = d.patch;
    a.noise = d.noise_sigma;
    a.lr = d.learning_rate;
    c->add_option("--data", a.data, "Training dataset directory (repeatable)")->required();
    c->add_option("--validation", a.validation, "Validation dataset directory (repeatable)");
    c->add_option("--epochs", a.epochs, "Total epochs")->capture_default_str();
    c->add_option("--batch", a.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--windows", a.windows, "Training windows per sequence per epoch")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c->add_option("--validation-windows", a.validation_windows, "Windows per validation sequence")
        ->capture_default_str();
    c->add_option("--resolution", a.resolution, "Cells across the 1 m network window")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c->add_option("--lr", a.lr, "Base learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    if (unet) {
      c->add_option("--width", a.width, "Channels of the first U-Net stage")
          ->check(CLI::PositiveNumber)
          ->capture_default_str();
    } else {
      c->add_option("--patch", a.patch, "Square training crop, 0 for whole frames")
          ->capture_default_str();
      c->add_option("--noise", a.noise, "Knot noise standard deviation (normalized)")
          ->check(CLI::NonNegativeNumber)
          ->capture_default_str();
    }
    c->add_option("--out", a.out, "Checkpoint path")->required();
    c->add_option("--history", a.history, "Loss-history file (default: <out>.loss.txt)");
    c->add_flag("--resume", a.resume, "Continue from --out and its .state sidecar");
  };
  auto* train_unet = app.add_subcommand("train-unet", "Train the 0.12 s U-Net");
  add_train(train_unet, tu, true);
  auto* train_interp = app.add_subcommand("train-interp", "Train the 3D-CNN interpolator");
  add_train(train_interp, ti, false);

  RolloutArgs ro;
  auto* rollout = app.add_subcommand("rollout", "Autoregressive prediction from 5 seed frames");
  rollout->add_option("--model", ro.model, "U-Net checkpoint")->required();
  rollout->add_option("--sequence", ro.sequence, "Source sequence file")->required();
  rollout->add_option("--steps", ro.steps, "Network steps")->required()->check(CLI::PositiveNumber);
  rollout->add_option("--out", ro.out, "Predicted sequence file")->required();
  rollout->add_option("--interp", ro.interp, "3D-CNN checkpoint refining the output to 0.03 s");
  rollout->add_option("--grid", ro.grid, "Resample the central 1 m window to this grid first");
  rollout->add_option("--truth-out", ro.truth_out, "Write the matching source frames here");
  add_extent(rollout, ro.extent);

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Per-step error curves over fluid cells");
  evaluate->add_option("--pred", ev.pred, "Predicted sequence")->required();
  evaluate->add_option("--truth", ev.truth, "Ground-truth sequence")->required();
  evaluate->add_option("--report", ev.report, "JSON report path");
  add_extent(evaluate, ev.extent);

  RenderArgs rd;
  auto* render = app.add_subcommand("render", "One grayscale image per frame");
  render->add_option("--sequence", rd.sequence, "Sequence file")->required();
  render->add_option("--out", rd.out, "Output directory")->required();
  render->add_option("--format", rd.format, "Image format")
      ->check(CLI::IsMember({"pgm"}))
      ->capture_default_str();
  render->add_flag("--16bit", rd.sixteen_bit, "16-bit samples");
  add_extent(render, rd.extent);

  BenchArgs bn;
  auto* bench = app.add_subcommand("bench", "Solver vs network wall clock");
  bench->add_option("--model", bn.model, "U-Net checkpoint")->required();
  bench->add_option("--geometry", bn.geometry, "Geometry category")
      ->check(CLI::IsMember({"Box", "Corner", "DoubleCorner", "ConvexCircle", "ConcaveCircle",
                             "SplineBlob", "EllipseArcs"}))
      ->capture_default_str();
  bench->add_option("--sim-seconds", bn.sim_seconds, "Simulated time")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench->add_option("--grid", bn.grid, "Cells along the longer side")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*generate) run_generate(gen, g);
    if (*train_unet) run_train(tu, g, true);
    if (*train_interp) run_train(ti, g, false);
    if (*rollout) run_rollout(ro, g);
    if (*evaluate) run_evaluate(ev);
    if (*render) run_render(rd);
    if (*bench) run_bench(bn, g);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
