#include "swnet/models/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "swnet/datagen.hpp"
#include "swnet/models/interp.hpp"
#include "swnet/models/unet.hpp"
#include "swnet/swe.hpp"

namespace swnet::models {

using nlohmann::json;

namespace {

void push(ErrorCurve& curve, const FrameError& e) {
  curve.l1.push_back(e.l1);
  curve.rmse.push_back(e.rmse);
}

bool same_cadence(double a, double b) { return std::abs(a - b) <= 1e-6 * std::max(a, b); }

// n when `coarse` is n times `fine`, otherwise 0.
std::size_t cadence_ratio(double coarse, double fine) {
  if (!(fine > 0.0)) return 0;
  const double r = std::round(coarse / fine);
  return r >= 1.0 && same_cadence(r * fine, coarse) ? static_cast<std::size_t>(r) : 0;
}

json curve_json(const ErrorCurve& c) { return {{"l1", c.l1}, {"rmse", c.rmse}}; }

ErrorCurve curve_from(const json& j) {
  return {j.at("l1").get<std::vector<double>>(), j.at("rmse").get<std::vector<double>>()};
}

void check_curve(const ErrorCurve& c, std::size_t steps, const char* name) {
  if (c.l1.size() != steps || c.rmse.size() != steps) {
    throw Error(ErrorCode::kShape, std::string("report: ") + name + " curve length mismatch");
  }
  for (const auto* v : {&c.l1, &c.rmse}) {
    for (double x : *v) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::kNonFinite, std::string("report: non-finite ") + name + " value");
      }
    }
  }
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

FrameError fluid_error(const Frame& pred, const Frame& truth, const GeometryField& geometry) {
  if (!pred.same_shape(truth) || !pred.same_shape(geometry.mask)) {
    throw Error(ErrorCode::kShape, "fluid_error: grids differ");
  }
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (geometry.mask[i]) continue;
    const double d = static_cast<double>(pred[i]) - truth[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::kGeometry, "fluid_error: no fluid cells");
  return {abs_sum / static_cast<double>(n), std::sqrt(sq_sum / static_cast<double>(n))};
}

void EvalReport::validate() const {
  check_curve(network, steps, "network");
  if (persistence) check_curve(*persistence, steps, "persistence");
  if (linear) check_curve(*linear, steps, "linear");
  if (timing) {
    for (double x : {timing->solver_seconds_per_sim_second,
                     timing->network_seconds_per_sim_second, timing->ratio}) {
      if (!std::isfinite(x)) throw Error(ErrorCode::kNonFinite, "report: non-finite timing");
    }
  }
}

EvalReport evaluate(const WaveSequence& pred_in, const WaveSequence& truth_in) {
  if (!same_cadence(pred_in.frame_interval, truth_in.frame_interval)) {
    throw Error(ErrorCode::kInvalidArgument,
                "evaluate: cadence mismatch (" + std::to_string(pred_in.frame_interval) +
                    " s vs " + std::to_string(truth_in.frame_interval) + " s)");
  }
  if (pred_in.geometry.mask != truth_in.geometry.mask) {
    throw Error(ErrorCode::kShape, "evaluate: prediction and truth geometries differ");
  }
  if (pred_in.length() == 0 || truth_in.length() < pred_in.length()) {
    throw Error(ErrorCode::kShape, "evaluate: truth must cover every predicted frame");
  }
  const WaveSequence pred = normalize(pred_in);
  const WaveSequence truth = normalize(truth_in);
  const std::size_t offset = truth.length() - pred.length();
  const GeometryField& g = truth.geometry;

  EvalReport r;
  r.steps = pred.length();
  r.frame_interval = pred.frame_interval;
  for (std::size_t k = 0; k < r.steps; ++k) {
    push(r.network, fluid_error(pred.frames[k], truth.frames[offset + k], g));
  }
  if (offset > 0) {
    ErrorCurve c;
    for (std::size_t k = 0; k < r.steps; ++k) {
      push(c, fluid_error(truth.frames[offset - 1], truth.frames[offset + k], g));
    }
    r.persistence = std::move(c);
  }
  if (same_cadence(pred.frame_interval, kFineInterval) && r.steps >= kInterpFactor + 1 &&
      (r.steps - 1) % kInterpFactor == 0) {
    std::vector<Frame> knots;
    for (std::size_t k = 0; k < r.steps; k += kInterpFactor) knots.push_back(truth.frames[offset + k]);
    const std::vector<Frame> lin = linear_interp_baseline(knots);
    ErrorCurve c;
    for (std::size_t k = 0; k < r.steps; ++k) push(c, fluid_error(lin[k], truth.frames[offset + k], g));
    r.linear = std::move(c);
  }
  r.validate();
  return r;
}

std::string report_to_json(const EvalReport& r) {
  r.validate();
  json j;
  j["steps"] = r.steps;
  j["frame_interval"] = r.frame_interval;
  j["network"] = curve_json(r.network);
  j["persistence"] = r.persistence ? curve_json(*r.persistence) : json(nullptr);
  j["linear"] = r.linear ? curve_json(*r.linear) : json(nullptr);
  if (r.timing) {
    j["timing"] = {{"solver_seconds_per_sim_second", r.timing->solver_seconds_per_sim_second},
                   {"network_seconds_per_sim_second", r.timing->network_seconds_per_sim_second},
                   {"ratio", r.timing->ratio}};
  } else {
    j["timing"] = nullptr;
  }
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.steps = j.at("steps").get<std::size_t>();
    r.frame_interval = j.at("frame_interval").get<double>();
    r.network = curve_from(j.at("network"));
    if (!j.at("persistence").is_null()) r.persistence = curve_from(j.at("persistence"));
    if (!j.at("linear").is_null()) r.linear = curve_from(j.at("linear"));
    if (!j.at("timing").is_null()) {
      const json& t = j.at("timing");
      r.timing = Timing{t.at("solver_seconds_per_sim_second").get<double>(),
                        t.at("network_seconds_per_sim_second").get<double>(),
                        t.at("ratio").get<double>()};
    }
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("report: ") + e.what());
  }
}

RolloutRun run_rollout(const nn::Model<float>& unet, const WaveSequence& source_in,
                       const RolloutRequest& request) {
  if (request.steps == 0) throw Error(ErrorCode::kInvalidArgument, "rollout: steps must be >= 1");
  if (request.interp && request.steps < 3) {
    throw Error(ErrorCode::kInvalidArgument, "rollout: interpolation needs at least 3 steps");
  }
  source_in.validate();
  const std::size_t stride = cadence_ratio(kStepInterval, source_in.frame_interval);
  if (stride == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "rollout: source cadence " + std::to_string(source_in.frame_interval) +
                    " s does not divide 0.12 s");
  }
  const std::size_t last_seed = (kHistoryFrames - 1) * stride;
  if (source_in.length() <= last_seed) {
    throw Error(ErrorCode::kShape, "rollout: need 5 seed frames at 0.12 s, source has " +
                                       std::to_string(source_in.length()) + " frames");
  }
  const WaveSequence source = normalize(source_in);
  std::vector<Frame> seed;
  for (std::size_t k = 0; k < kHistoryFrames; ++k) seed.push_back(source.frames[k * stride]);

  RolloutRun run;
  run.prediction = request.double_precision
                       ? rollout(unet.cast<double>(), source.geometry, seed, request.steps)
                       : rollout(unet, source.geometry, seed, request.steps);
  run.prediction.provenance = source.provenance;
  if (request.interp) {
    std::vector<Frame> fine = request.double_precision
                                  ? interpolate(request.interp->cast<double>(), run.prediction.frames)
                                  : interpolate(*request.interp, run.prediction.frames);
    const Frame m = mask_frame(source.geometry);
    for (Frame& f : fine) {
      if (!f.same_shape(m)) throw Error(ErrorCode::kShape, "rollout: interpolator changed the grid");
      mask_solid(f, m);
    }
    run.prediction.frames = std::move(fine);
    run.prediction.frame_interval = kFineInterval;
  }

  const std::size_t out_stride = cadence_ratio(run.prediction.frame_interval, source.frame_interval);
  const std::size_t last = last_seed + request.steps * stride;
  if (out_stride > 0 && last < source.length()) {
    WaveSequence truth;
    truth.geometry = source.geometry;
    truth.frame_interval = run.prediction.frame_interval;
    truth.normalized = true;
    truth.provenance = source.provenance;
    for (std::size_t i = last_seed; i <= last; i += out_stride) truth.frames.push_back(source.frames[i]);
    run.truth = std::move(truth);
  }
  return run;
}

std::vector<std::uint8_t> encode_pgm(const Frame& frame, const Grid<std::uint8_t>& mask,
                                     bool sixteen_bit) {
  if (!frame.same_shape(mask)) throw Error(ErrorCode::kShape, "pgm: frame and mask differ");
  const unsigned maxval = sixteen_bit ? 65535u : 255u;
  char header[64];
  const int n = std::snprintf(header, sizeof header, "P5\n%zu %zu\n%u\n", frame.cols(),
                              frame.rows(), maxval);
  std::vector<std::uint8_t> out(header, header + n);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    unsigned v = 0;
    if (!mask[i]) {
      const double t = std::clamp((static_cast<double>(frame[i]) + 1.0) * 0.5, 0.0, 1.0);
      v = static_cast<unsigned>(std::lround(t * maxval));
    }
    if (sixteen_bit) out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return out;
}

std::vector<std::filesystem::path> render_sequence(const WaveSequence& seq,
                                                   const std::filesystem::path& dir,
                                                   bool sixteen_bit) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "render: cannot create " + dir.string());
  const WaveSequence norm = normalize(seq);
  std::vector<std::filesystem::path> paths;
  for (std::size_t t = 0; t < norm.length(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.pgm", t);
    const auto path = dir / name;
    const auto bytes = encode_pgm(norm.frames[t], norm.geometry.mask, sixteen_bit);
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(ErrorCode::kIo, "render: cannot write " + path.string());
    paths.push_back(path);
  }
  return paths;
}

BenchResult bench(const nn::Model<float>& model, const BenchOptions& options) {
  if (!(options.sim_seconds > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "bench: simulated time must be positive");
  }
  if (options.grid == 0 || options.grid % 4 != 0) {
    throw Error(ErrorCode::kInvalidArgument, "bench: grid must be a positive multiple of 4");
  }
  Rng rng(options.seed);
  const DomainSpec domain = sample_domain(options.category, rng);
  const double longer = std::max(domain.extent.x, domain.extent.y);
  const GeometryField geometry =
      rasterize(domain, static_cast<double>(options.grid) / longer);
  const DropletSpec droplet = sample_droplet(rng, geometry);

  BenchResult r;
  r.network_steps = static_cast<std::size_t>(std::ceil(options.sim_seconds / kStepInterval - 1e-9));
  r.sim_seconds = static_cast<double>(r.network_steps) * kStepInterval;

  SimConfig cfg = config_for(geometry);
  cfg.snapshot_interval = kStepInterval;
  cfg.snapshot_count = static_cast<int>(std::max<std::size_t>(r.network_steps, kHistoryFrames)) + 1;
  const SimState initial = init_droplet(geometry, droplet, cfg);
  // Time only the span that the rollout covers.
  SimConfig timed = cfg;
  timed.snapshot_count = static_cast<int>(r.network_steps) + 1;
  auto t0 = Clock::now();
  run_simulation(geometry, initial, timed);
  r.solver_seconds = seconds_since(t0);

  const WaveSequence reference = normalize(run_simulation(geometry, initial, cfg));
  const std::vector<Frame> seed(reference.frames.begin(), reference.frames.begin() + kHistoryFrames);
  if (options.double_precision) {
    const nn::Model<double> m64 = model.cast<double>();
    t0 = Clock::now();
    rollout(m64, geometry, seed, r.network_steps);
  } else {
    t0 = Clock::now();
    rollout(model, geometry, seed, r.network_steps);
  }
  r.network_seconds = seconds_since(t0);

  r.timing.solver_seconds_per_sim_second = r.solver_seconds / r.sim_seconds;
  r.timing.network_seconds_per_sim_second = r.network_seconds / r.sim_seconds;
  r.timing.ratio = r.solver_seconds / std::max(r.network_seconds, 1e-12);
  return r;
}

}  // namespace swnet::models
