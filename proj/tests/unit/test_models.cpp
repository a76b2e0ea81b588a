#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "swnet/models/eval.hpp"
#include "swnet/models/train.hpp"

using namespace swnet;
using namespace swnet::models;
namespace fs = std::filesystem;

namespace {

GeometryField open_field(std::size_t n) {
  GeometryField g;
  g.mask = Grid<std::uint8_t>(n, n, 0);
  g.extent = {1.0, 1.0};
  return g;
}

Frame filled(std::size_t n, float v) { return Frame(n, n, v); }

std::vector<Frame> ramp_frames(std::size_t count, std::size_t n) {
  std::vector<Frame> f;
  for (std::size_t k = 0; k < count; ++k) f.push_back(filled(n, 0.1f * static_cast<float>(k)));
  return f;
}

// 1x1 conv from six channels that copies channel 5 (the newest frame).
nn::Model<float> copy_last_frame_model(float bias = 0.0f) {
  nn::ModelSpec spec;
  spec.layers = {nn::LayerSpec::conv2d(6, 1, 1, 0, nn::Activation::kNone)};
  nn::Model<float> m(spec);
  m.parameters()[0].data()[5] = 1.0f;
  m.parameters()[1].data()[0] = bias;
  return m;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("swnet_models_" + name);
  fs::remove_all(p);
  return p;
}

// Tiny generated datasets shared by the training tests.
const TrainingSet& tiny_set() {
  static const TrainingSet set = [] {
    TrainingSet s;
    for (char id : {'A', 'B'}) {
      GenerateOptions o;
      o.dataset = id;
      o.count = 2;
      o.seed = 40 + static_cast<std::uint64_t>(id);
      o.resolution = 16;
      o.out_dir = scratch(std::string("tiny_") + id);
      generate_dataset(o);
      s.add_dataset(o.out_dir);
    }
    return s;
  }();
  return set;
}

}  // namespace

TEST_CASE("u-net parameter count matches an independent enumeration") {
  for (std::size_t w : {4u, 16u, 32u, 64u}) {
    UNetConfig c;
    c.width = w;
    const nn::ModelSpec spec = unet_spec(c);
    std::size_t enumerated = 0;
    for (const auto& l : spec.layers) {
      if (!l.has_parameters()) continue;
      const std::size_t k = l.kernel[1] * l.kernel[2];
      enumerated += k * l.in_channels * l.out_channels + l.out_channels;
    }
    CHECK(spec.parameter_count() == enumerated);
    CHECK(enumerated == 454 * w * w + 78 * w + 1);
  }
  CHECK(unet_spec(UNetConfig::full_scale()).parameter_count() == 1864577);

  const nn::ModelSpec spec = unet_spec({});
  std::size_t pools = 0, concats = 0, tconvs = 0;
  for (const auto& l : spec.layers) {
    pools += l.kind == nn::LayerKind::kMaxPool2d;
    concats += l.kind == nn::LayerKind::kConcatSkip;
    if (l.kind == nn::LayerKind::kTConv2d) {
      ++tconvs;
      CHECK(l.kernel[1] == 2);
      CHECK(l.stride[1] == 2);
    }
  }
  CHECK(pools == 2);
  CHECK(concats == 2);
  CHECK(tconvs == 2);
  CHECK(spec.input_channels() == 6);
  CHECK(spec.output_channels() == 1);
  UNetConfig bad;
  bad.width = 0;
  CHECK_THROWS_AS(unet_spec(bad), Error);
}

TEST_CASE("u-net forward shapes, determinism and errors") {
  Rng rng(1);
  UNetConfig c;
  c.width = 8;
  nn::Model<float> m = build_unet(c, rng);
  for (auto& p : m.parameters()) {
    for (float& v : p.data()) v = static_cast<float>(rng.uniform(-0.3, 0.3));
  }
  for (std::size_t n : {32u, 64u, 128u}) {
    const Frame g(n, n, 0.0f);
    std::vector<Frame> frames;
    for (int k = 0; k < 5; ++k) {
      Frame f(n, n);
      for (float& v : f.storage()) v = static_cast<float>(rng.uniform(-1, 1));
      frames.push_back(f);
    }
    const Frame a = unet_forward(m, g, frames);
    CHECK(a.rows() == n);
    CHECK(a.cols() == n);
    bool finite = true;
    for (float v : a.storage()) finite = finite && std::isfinite(v);
    CHECK(finite);
    CHECK(unet_forward(m, g, frames) == a);
    if (n == 32) {
      std::vector<Frame> swapped = frames;
      std::swap(swapped[0], swapped[4]);
      CHECK_FALSE(unet_forward(m, g, swapped) == a);
    }
  }
  const auto five = ramp_frames(5, 30);
  CHECK_THROWS_AS(unet_forward(m, Frame(30, 30), five), Error);
  const auto four = ramp_frames(4, 32);
  CHECK_THROWS_AS(unet_forward(m, Frame(32, 32), four), Error);
  auto mixed = ramp_frames(5, 32);
  mixed[2] = Frame(16, 16);
  CHECK_THROWS_AS(unet_forward(m, Frame(32, 32), mixed), Error);

  // Fresh models start from still water.
  Rng r2(2);
  const nn::Model<float> fresh = build_unet(c, r2);
  const Frame still = unet_forward(fresh, Frame(32, 32), ramp_frames(5, 32));
  for (float v : still.storage()) CHECK(v == 0.0f);
}

TEST_CASE("residual variant adds the newest frame and survives checkpoints") {
  UNetConfig c;
  c.width = 4;
  c.residual = true;
  Rng rng(3);
  nn::Model<float> m = build_unet(c, rng);
  CHECK(m.spec().residual_channel == std::optional<std::size_t>(5));
  const auto frames = ramp_frames(5, 16);
  const Frame out = unet_forward(m, Frame(16, 16), frames);
  CHECK(out == frames[4]);
  for (auto& p : m.parameters()) {
    for (float& v : p.data()) v = static_cast<float>(rng.uniform(-0.2, 0.2));
  }
  const nn::Model<float> back = nn::decode_checkpoint(nn::encode_checkpoint(m));
  CHECK(back.spec() == m.spec());
  CHECK(unet_forward(back, Frame(16, 16), frames) == unet_forward(m, Frame(16, 16), frames));
  c.residual = false;
  Rng r2(3);
  CHECK_FALSE(build_unet(c, r2).spec().residual_channel.has_value());
}

TEST_CASE("rollout loop discipline") {
  const GeometryField g = open_field(8);
  const auto seed = ramp_frames(5, 8);
  const nn::Model<float> stub = copy_last_frame_model();
  const WaveSequence out = rollout(stub, g, seed, 6);
  CHECK(out.length() == 6);
  CHECK(out.frame_interval == doctest::Approx(0.12));
  CHECK(out.normalized);
  for (const Frame& f : out.frames) CHECK(f == seed[4]);

  const nn::Model<float> shifted = copy_last_frame_model(0.25f);
  const WaveSequence one = rollout(shifted, g, seed, 1);
  CHECK(one.frames[0] == unet_forward(shifted, mask_frame(g), seed));

  RolloutState st(mask_frame(g), seed);
  for (int k = 0; k < 3; ++k) st.push(filled(8, 9.0f + k));
  CHECK(st.step == 3);
  CHECK(st.window[0] == seed[3]);
  CHECK(st.window[1] == seed[4]);
  CHECK(st.window[4] == filled(8, 11.0f));
  for (int k = 0; k < 4; ++k) st.push(filled(8, 12.0f + k));
  for (std::size_t i = 0; i < 5; ++i) CHECK(st.window[i] == filled(8, 11.0f + i));
  CHECK_THROWS_AS(RolloutState(mask_frame(g), ramp_frames(4, 8)), Error);

  // Solid cells are forced back to the still-water value each step.
  GeometryField walled = g;
  walled.mask(0, 0) = 1;
  walled.mask(3, 4) = 1;
  const WaveSequence masked = rollout(shifted, walled, seed, 3);
  for (const Frame& f : masked.frames) {
    CHECK(f(0, 0) == 0.0f);
    CHECK(f(3, 4) == 0.0f);
    CHECK(f(1, 1) > 0.0f);
  }
  CHECK(masked.frames[2](1, 1) == doctest::Approx(0.4 + 0.75));

  nn::Model<float> broken = copy_last_frame_model(NAN);
  try {
    rollout(broken, g, seed, 3);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
  CHECK_THROWS_AS(rollout(stub, g, seed, 0), Error);
}

TEST_CASE("interpolator layer table and temporal shape rule") {
  const auto rows = InterpConfig::reference_layers();
  REQUIRE(rows.size() == 9);
  struct Row {
    bool transposed;
    std::size_t out;
    std::array<std::size_t, 3> k, s, p;
  };
  const Row table[9] = {
      {false, 32, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}}, {false, 32, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
      {true, 32, {2, 3, 3}, {2, 1, 1}, {0, 1, 1}},  {false, 64, {2, 3, 3}, {1, 1, 1}, {0, 1, 1}},
      {false, 64, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}}, {true, 64, {2, 3, 3}, {2, 1, 1}, {0, 1, 1}},
      {false, 64, {2, 3, 3}, {1, 1, 1}, {0, 1, 1}}, {false, 32, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
      {false, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}},
  };
  for (std::size_t i = 0; i < 9; ++i) {
    CAPTURE(i);
    CHECK(rows[i].is_3d());
    CHECK(rows[i].is_transposed() == table[i].transposed);
    CHECK(rows[i].out_channels == table[i].out);
    CHECK(rows[i].kernel == table[i].k);
    CHECK(rows[i].stride == table[i].s);
    CHECK(rows[i].padding == table[i].p);
    CHECK(rows[i].activation == (i < 8 ? nn::Activation::kSelu : nn::Activation::kNone));
  }
  CHECK(rows[0].in_channels == 1);

  Rng rng(5);
  nn::Model<float> m = build_interp3d({}, rng);
  for (auto& p : m.parameters()) {
    for (float& v : p.data()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
  }
  CHECK(interpolate(m, ramp_frames(5, 6)).size() == 17);
  const auto nine = interpolate(m, ramp_frames(3, 5));
  CHECK(nine.size() == 9);
  CHECK(nine[0].rows() == 5);
  CHECK(nine[0].cols() == 5);
  CHECK(interp_output_length(5) == 17);
  CHECK(interp_output_length(3) == 9);
  CHECK_THROWS_AS(interpolate(m, ramp_frames(2, 6)), Error);

  InterpConfig altered;
  altered.layers[4].out_channels = 48;
  altered.layers[5].in_channels = 48;
  CHECK_THROWS_AS(altered.validate(), Error);
  InterpConfig two_channel;
  two_channel.input_channels = 2;
  CHECK_THROWS_AS(two_channel.validate(), Error);
}

TEST_CASE("linear interpolation baseline") {
  const std::vector<Frame> constant(5, filled(4, 0.3f));
  for (const Frame& f : linear_interp_baseline(constant)) CHECK(f == filled(4, 0.3f));

  const std::vector<Frame> step{filled(3, 0.0f), filled(3, 1.0f)};
  const auto out = linear_interp_baseline(step);
  REQUIRE(out.size() == 5);
  CHECK(out[1][0] == 0.25f);
  CHECK(out[2][0] == 0.5f);
  CHECK(out[3][0] == 0.75f);

  const auto knots = ramp_frames(5, 4);
  const auto full = linear_interp_baseline(knots);
  REQUIRE(full.size() == 17);
  for (std::size_t k = 0; k < 5; ++k) CHECK(full[4 * k] == knots[k]);
}

TEST_CASE("training samples honour cadence and normalization") {
  const TrainingSet& set = tiny_set();
  InterpTrainConfig ic;
  ic.resolution = 16;
  ic.noise_sigma = 0.0;
  Rng rng(6);
  const InterpSample s = draw_interp_sample(set.sequences[0], set.augment[0], true, rng, ic);
  REQUIRE(s.targets.size() == 17);
  REQUIRE(s.knots.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) CHECK(s.knots[k] == s.targets[4 * k]);

  ic.noise_sigma = 1e-3;
  ic.patch = 8;
  const InterpSample noisy = draw_interp_sample(set.sequences[1], set.augment[1], true, rng, ic);
  CHECK(noisy.geometry.rows() == 8);
  double sq = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t i = 0; i < noisy.knots[k].size(); ++i) {
      const double d = noisy.knots[k][i] - noisy.targets[4 * k][i];
      if (noisy.geometry[i] > 0.5f) {
        CHECK(d == 0.0);
      } else {
        sq += d * d;
        ++n;
      }
    }
  CHECK(std::sqrt(sq / n) == doctest::Approx(1e-3).epsilon(0.25));

  UNetTrainConfig uc;
  uc.resolution = 16;
  const UNetSample u = draw_unet_sample(set.sequences[2], set.augment[2], false, rng, uc);
  CHECK(u.inputs.size() == 5);
  CHECK(u.targets.size() == 5);
  CHECK(u.geometry.rows() == 16);
}

TEST_CASE("zero epochs leave the initial model untouched") {
  const TrainingSet& set = tiny_set();
  UNetTrainConfig uc;
  uc.resolution = 16;
  uc.model.width = 4;
  uc.epochs = 0;
  uc.seed = 9;
  TrainSession s = start_unet_session(uc);
  const auto before = nn::encode_checkpoint(s.model);
  train_unet(s, set, {}, uc);
  CHECK(nn::encode_checkpoint(s.model) == before);
  CHECK(s.history.empty());

  InterpTrainConfig ic;
  ic.resolution = 16;
  ic.epochs = 0;
  TrainSession is = start_interp_session(ic);
  const auto ibefore = nn::encode_checkpoint(is.model);
  train_interp3d(is, set, {}, ic);
  CHECK(nn::encode_checkpoint(is.model) == ibefore);
}

TEST_CASE("training is deterministic and resumes bit-exactly") {
  TrainingSet train = tiny_set();
  const TrainingSet val = train.split_off(4, 3);
  CHECK(train.size() == 3);
  CHECK(val.size() == 1);

  UNetTrainConfig uc;
  uc.resolution = 16;
  uc.model.width = 4;
  uc.epochs = 3;
  uc.batch_size = 2;
  uc.windows_per_sequence = 2;
  uc.base_lr = 1e-3;
  uc.validation_windows = 1;
  uc.seed = 17;

  TrainSession straight = start_unet_session(uc);
  std::size_t calls = 0;
  train_unet(straight, train, val, uc, [&](const TrainSession&) { ++calls; });
  CHECK(calls == 3);
  REQUIRE(straight.history.size() == 3);
  for (const auto& r : straight.history) {
    CHECK(std::isfinite(r.train_loss));
    CHECK(std::isfinite(r.validation_loss));
    CHECK(r.learning_rate == 1e-3);
  }
  const std::string table = format_history(straight.history);
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);

  const fs::path dir = scratch("resume");
  fs::create_directories(dir);
  UNetTrainConfig first = uc;
  first.epochs = 1;
  TrainSession part = start_unet_session(first);
  train_unet(part, train, val, first);
  save_session(dir / "unet.wnn", part);
  TrainSession resumed = load_session(dir / "unet.wnn");
  CHECK(resumed.seed == 17);
  CHECK(resumed.epochs_done() == 1);
  train_unet(resumed, train, val, uc);
  CHECK(nn::encode_checkpoint(resumed.model) == nn::encode_checkpoint(straight.model));
  CHECK(resumed.history.back().train_loss == straight.history.back().train_loss);

  TrainSession again = start_unet_session(uc);
  train_unet(again, train, val, uc);
  CHECK(nn::encode_checkpoint(again.model) == nn::encode_checkpoint(straight.model));

  std::ofstream(state_path(dir / "unet.wnn"), std::ios::app) << 'x';
  CHECK_THROWS_AS(load_session(dir / "unet.wnn"), Error);
  fs::remove_all(dir);

  InterpTrainConfig ic;
  ic.resolution = 16;
  ic.patch = 8;
  ic.epochs = 1;
  ic.batch_size = 2;
  ic.validation_windows = 1;
  TrainSession is = start_interp_session(ic);
  train_interp3d(is, train, val, ic);
  CHECK(is.history.size() == 1);
  CHECK(std::isfinite(is.history[0].train_loss));
}

TEST_CASE("evaluation metrics over fluid cells") {
  GeometryField g = open_field(4);
  g.mask(0, 0) = 1;
  WaveSequence truth;
  truth.geometry = g;
  truth.frame_interval = 0.12;
  truth.normalized = true;
  for (int k = 0; k < 6; ++k) truth.frames.push_back(filled(4, 0.1f * k));
  truth.frames[5](0, 0) = 0.0f;

  WaveSequence pred = truth;
  EvalReport same = evaluate(pred, truth);
  CHECK(same.steps == 6);
  for (double v : same.network.l1) CHECK(v == 0.0);
  CHECK_FALSE(same.persistence.has_value());

  for (Frame& f : pred.frames) {
    for (float& v : f.storage()) v += 0.01f;
    f(0, 0) = 50.0f;  // solid cells never count
  }
  const EvalReport off = evaluate(pred, truth);
  for (double v : off.network.l1) CHECK(v == doctest::Approx(0.01).epsilon(1e-4));
  for (double v : off.network.rmse) CHECK(v == doctest::Approx(0.01).epsilon(1e-4));

  WaveSequence tail = truth;
  tail.frames.erase(tail.frames.begin(), tail.frames.begin() + 2);
  const EvalReport later = evaluate(tail, truth);
  REQUIRE(later.persistence.has_value());
  CHECK(later.persistence->l1[0] == doctest::Approx(0.1));
  CHECK(later.persistence->l1[3] == doctest::Approx(0.4));

  WaveSequence slow = pred;
  slow.frame_interval = 0.03;
  CHECK_THROWS_AS(evaluate(slow, truth), Error);
  WaveSequence longer = truth;
  longer.frames.push_back(truth.frames[0]);
  CHECK_THROWS_AS(evaluate(longer, truth), Error);

  WaveSequence fine = truth;
  fine.frame_interval = 0.03;
  fine.frames.clear();
  for (int k = 0; k < 9; ++k) fine.frames.push_back(filled(4, 0.05f * k * k));
  const EvalReport interp = evaluate(fine, fine);
  REQUIRE(interp.linear.has_value());
  CHECK(interp.linear->l1[0] == 0.0);
  CHECK(interp.linear->l1[4] == 0.0);
  CHECK(interp.linear->l1[2] > 0.0);

  const EvalReport back = report_from_json(report_to_json(later));
  CHECK(back.network.l1 == later.network.l1);
  CHECK(back.persistence->rmse == later.persistence->rmse);
  CHECK_FALSE(back.timing.has_value());
  CHECK_THROWS_AS(report_from_json("{\"steps\": 2}"), Error);
}

TEST_CASE("pgm rendering") {
  Grid<std::uint8_t> mask(2, 3, 0);
  mask(1, 2) = 1;
  Frame f(2, 3, 0.0f);
  f(1, 2) = 0.9f;
  const auto bytes = encode_pgm(f, mask);
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 6);
  CHECK(std::string(bytes.begin(), bytes.begin() + header.size()) == header);
  for (std::size_t i = 0; i < 5; ++i) CHECK(bytes[header.size() + i] == 128);
  CHECK(bytes.back() == 0);

  Frame extremes(1, 2);
  extremes[0] = -1.0f;
  extremes[1] = 3.0f;
  const auto e = encode_pgm(extremes, Grid<std::uint8_t>(1, 2, 0));
  CHECK(e[e.size() - 2] == 0);
  CHECK(e.back() == 255);

  const auto wide = encode_pgm(f, mask, true);
  CHECK(std::string(wide.begin(), wide.begin() + 13) == "P5\n3 2\n65535\n");
  CHECK(wide.size() == 13 + 12);

  WaveSequence seq;
  seq.geometry = open_field(4);
  seq.normalized = true;
  seq.frames = ramp_frames(3, 4);
  const fs::path dir = scratch("render");
  const auto paths = render_sequence(seq, dir);
  CHECK(paths.size() == 3);
  for (const auto& p : paths) CHECK(fs::exists(p));
  fs::remove_all(dir);
}

TEST_CASE("benchmark reports both timings") {
  UNetConfig c;
  c.width = 4;
  Rng rng(8);
  const nn::Model<float> m = build_unet(c, rng);
  BenchOptions o;
  o.grid = 32;
  o.sim_seconds = 0.3;
  const BenchResult r = bench(m, o);
  CHECK(r.network_steps == 3);
  CHECK(r.sim_seconds == doctest::Approx(0.36));
  CHECK(r.solver_seconds > 0.0);
  CHECK(r.network_seconds > 0.0);
  CHECK(r.timing.ratio == doctest::Approx(r.solver_seconds / r.network_seconds));
  o.sim_seconds = 0.0;
  CHECK_THROWS_AS(bench(m, o), Error);
}
