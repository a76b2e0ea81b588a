#include "swnet/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace swnet {
namespace {

using nlohmann::json;

constexpr std::array<DatasetInfo, 7> kDatasets = {{
    {'A', "Box_Single_Drop", "training", Category::kBox, 500, AugmentClass::kDihedral},
    {'B', "Corner_Single_Drop", "training", Category::kCorner, 500, AugmentClass::kRotateCrop},
    {'C', "Steps_Single_Drop", "testing", Category::kDoubleCorner, 200, AugmentClass::kDihedral},
    {'D', "Convex_Single_Drop", "testing", Category::kConvexCircle, 250, AugmentClass::kDihedral},
    {'E', "Concave_Single_Drop", "testing", Category::kConcaveCircle, 500,
     AugmentClass::kRotateCrop},
    {'F', "Spline_Single_Drop", "testing", Category::kSplineBlob, 200, AugmentClass::kRotateOnly},
    {'G', "Ellipse_Single_Drop", "testing", Category::kEllipseArcs, 200,
     AugmentClass::kRotateOnly},
}};

EdgeConditions permute_edges(const EdgeConditions& e, Dihedral t) {
  EdgeConditions out = e;
  const auto& o = e.edge;
  switch (t) {
    case Dihedral::kIdentity: break;
    case Dihedral::kRot90:
      out.edge = {o[kNorth], o[kSouth], o[kWest], o[kEast]};
      break;
    case Dihedral::kRot180:
      out.edge = {o[kEast], o[kWest], o[kNorth], o[kSouth]};
      break;
    case Dihedral::kRot270:
      out.edge = {o[kSouth], o[kNorth], o[kEast], o[kWest]};
      break;
    case Dihedral::kFlipH:
      out.edge = {o[kEast], o[kWest], o[kSouth], o[kNorth]};
      break;
    case Dihedral::kFlipV:
      out.edge = {o[kWest], o[kEast], o[kNorth], o[kSouth]};
      break;
  }
  return out;
}

template <typename T>
Grid<T> permute_grid(const Grid<T>& in, Dihedral t) {
  const std::size_t n = in.rows();
  Grid<T> out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      switch (t) {
        case Dihedral::kIdentity: out(i, j) = in(i, j); break;
        case Dihedral::kRot90: out(i, j) = in(n - 1 - j, i); break;
        case Dihedral::kRot180: out(i, j) = in(n - 1 - i, n - 1 - j); break;
        case Dihedral::kRot270: out(i, j) = in(j, n - 1 - i); break;
        case Dihedral::kFlipH: out(i, j) = in(i, n - 1 - j); break;
        case Dihedral::kFlipV: out(i, j) = in(n - 1 - i, j); break;
      }
    }
  }
  return out;
}

// Bilinear sample at fractional cell coordinates; cells are clamped at the
// border. Returns false when (x, y) lies outside the physical extent.
template <typename Getter>
bool bilinear(std::size_t rows, std::size_t cols, double fx, double fy, Getter get,
              double& value) {
  if (fx < -0.5 || fy < -0.5 || fx > cols - 0.5 || fy > rows - 0.5) return false;
  fx = std::clamp(fx, 0.0, static_cast<double>(cols - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(rows - 1));
  const auto c0 = static_cast<std::size_t>(std::floor(fx));
  const auto r0 = static_cast<std::size_t>(std::floor(fy));
  const std::size_t c1 = std::min(c0 + 1, cols - 1);
  const std::size_t r1 = std::min(r0 + 1, rows - 1);
  const double tx = fx - static_cast<double>(c0);
  const double ty = fy - static_cast<double>(r0);
  value = (1 - ty) * ((1 - tx) * get(r0, c0) + tx * get(r0, c1)) +
          ty * ((1 - tx) * get(r1, c0) + tx * get(r1, c1));
  return true;
}

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }
Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json domain_json(const DomainSpec& d) {
  json j;
  j["category"] = to_string(d.category);
  j["extent"] = vec_json(d.extent);
  json p = json::object();
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, CornerShape>) {
          p["vertex"] = vec_json(s.vertex);
          p["quadrant"] = s.quadrant;
        } else if constexpr (std::is_same_v<S, DoubleCornerShape>) {
          p["center"] = vec_json(s.center);
          p["offset_x"] = s.offset_x;
          p["offset_y"] = s.offset_y;
          p["quadrant"] = s.quadrant;
        } else if constexpr (std::is_same_v<S, ConvexCircleShape>) {
          p["center"] = vec_json(s.center);
          p["radius"] = s.radius;
        } else if constexpr (std::is_same_v<S, ConcaveCircleShape>) {
          p["center"] = vec_json(s.center);
          p["radius"] = s.radius;
          p["wall_angle"] = s.wall_angle;
        } else if constexpr (std::is_same_v<S, SplineBlobShape>) {
          json c = json::array();
          for (const Vec2& v : s.control) c.push_back(vec_json(v));
          p["control"] = c;
        } else if constexpr (std::is_same_v<S, EllipseArcsShape>) {
          p["corner"] = s.corner;
          p["convex_axes"] = vec_json(s.convex_axes);
          p["concave_axes"] = vec_json(s.concave_axes);
        }
      },
      d.shape);
  j["parameters"] = p;
  return j;
}

DomainSpec domain_from(const json& j) {
  DomainSpec d;
  const auto cat = parse_category(j.at("category").get<std::string>());
  if (!cat) throw Error(ErrorCode::kFormat, "manifest: unknown category");
  d.category = *cat;
  d.extent = vec_from(j.at("extent"));
  const json& p = j.at("parameters");
  switch (d.category) {
    case Category::kBox: d.shape = BoxShape{}; break;
    case Category::kCorner:
      d.shape = CornerShape{vec_from(p.at("vertex")), p.at("quadrant").get<int>()};
      break;
    case Category::kDoubleCorner:
      d.shape = DoubleCornerShape{vec_from(p.at("center")), p.at("offset_x").get<double>(),
                                  p.at("offset_y").get<double>(), p.at("quadrant").get<int>()};
      break;
    case Category::kConvexCircle:
      d.shape = ConvexCircleShape{vec_from(p.at("center")), p.at("radius").get<double>()};
      break;
    case Category::kConcaveCircle:
      d.shape = ConcaveCircleShape{vec_from(p.at("center")), p.at("radius").get<double>(),
                                   p.at("wall_angle").get<double>()};
      break;
    case Category::kSplineBlob: {
      std::array<Vec2, 4> control;
      for (std::size_t k = 0; k < 4; ++k) control[k] = vec_from(p.at("control").at(k));
      d.shape = make_spline_blob(control);
      break;
    }
    case Category::kEllipseArcs:
      d.shape = EllipseArcsShape{p.at("corner").get<int>(), vec_from(p.at("convex_axes")),
                                 vec_from(p.at("concave_axes"))};
      break;
  }
  return d;
}

std::string sequence_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%05zu.wsq", index);
  return buf;
}

// Generates one sequence; retries with derived seeds on simulation failure.
SequenceRecord generate_one(const GenerateOptions& opt, const DatasetInfo& info,
                            std::size_t index, WaveSequence& out) {
  const std::uint64_t base_seed =
      mix_seed(opt.seed ^ (static_cast<std::uint64_t>(info.id) << 56), index);
  for (int attempt = 0;; ++attempt) {
    const std::uint64_t seed = attempt == 0 ? base_seed : mix_seed(base_seed, attempt);
    try {
      Rng rng(seed);
      SequenceRecord rec;
      rec.seed = seed;
      rec.retries = attempt;
      rec.file = sequence_file_name(index);
      rec.domain = sample_domain(info.category, rng);
      const GeometryField geometry = rasterize(rec.domain, opt.resolution);
      rec.droplet = sample_droplet(rng, geometry);
      SimConfig cfg = opt.sim;
      cfg.cell_size = geometry.cell_size();
      const SimState initial = init_droplet(geometry, rec.droplet, cfg);
      out = run_simulation(geometry, initial, cfg);
      out.provenance = {rec.domain, rec.droplet, seed};
      return rec;
    } catch (const Error& e) {
      const bool recoverable = e.code() == ErrorCode::kPositivity ||
                               e.code() == ErrorCode::kInstability ||
                               e.code() == ErrorCode::kGeometry;
      if (!recoverable || attempt >= opt.max_retries) throw;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

void NormalizationSpec::validate() const {
  if (!(reference_max > reference_mean)) {
    throw Error(ErrorCode::kInvalidArgument, "normalization max must exceed mean");
  }
}

Frame normalize(const Frame& frame, const NormalizationSpec& spec) {
  spec.validate();
  const double scale = spec.reference_max - spec.reference_mean;
  Frame out(frame.rows(), frame.cols());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    out[i] = static_cast<float>((static_cast<double>(frame[i]) - spec.reference_mean) / scale);
  }
  return out;
}

Frame denormalize(const Frame& frame, const NormalizationSpec& spec) {
  spec.validate();
  const double scale = spec.reference_max - spec.reference_mean;
  Frame out(frame.rows(), frame.cols());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(frame[i]) * scale + spec.reference_mean);
  }
  return out;
}

WaveSequence normalize(const WaveSequence& seq, const NormalizationSpec& spec) {
  if (seq.normalized) return seq;
  WaveSequence out = seq;
  for (Frame& f : out.frames) f = normalize(f, spec);
  out.normalized = true;
  return out;
}

WaveSequence denormalize(const WaveSequence& seq, const NormalizationSpec& spec) {
  if (!seq.normalized) return seq;
  WaveSequence out = seq;
  for (Frame& f : out.frames) f = denormalize(f, spec);
  out.normalized = false;
  return out;
}

WaveSequence apply_dihedral(const WaveSequence& seq, Dihedral transform) {
  if (seq.rows() != seq.cols()) {
    throw Error(ErrorCode::kShape, "dihedral augmentation needs a square grid, got " +
                                       std::to_string(seq.rows()) + "x" +
                                       std::to_string(seq.cols()));
  }
  WaveSequence out;
  out.frame_interval = seq.frame_interval;
  out.normalized = seq.normalized;
  out.provenance = seq.provenance;
  out.geometry.extent = seq.geometry.extent;
  out.geometry.edges = permute_edges(seq.geometry.edges, transform);
  out.geometry.mask = permute_grid(seq.geometry.mask, transform);
  out.frames.reserve(seq.frames.size());
  for (const Frame& f : seq.frames) out.frames.push_back(permute_grid(f, transform));
  return out;
}

WaveSequence augment_closed(const WaveSequence& seq, Rng& rng) {
  return apply_dihedral(seq, static_cast<Dihedral>(rng.index(6)));
}

WaveSequence resample_view(const WaveSequence& seq, const ViewTransform& view) {
  seq.validate();
  if (view.out_size == 0 || !(view.crop > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "resample_view: empty output window");
  }
  const Vec2 extent = seq.geometry.extent;
  const double half = 0.5 * view.crop;
  const double tol = 1e-9;
  if (view.center.x - half < -tol || view.center.y - half < -tol ||
      view.center.x + half > extent.x + tol || view.center.y + half > extent.y + tol) {
    throw Error(ErrorCode::kDomainViolation, "crop window exceeds the source extent");
  }

  const std::size_t rows = seq.rows();
  const std::size_t cols = seq.cols();
  const double dx = extent.x / static_cast<double>(cols);
  const double dy = extent.y / static_cast<double>(rows);
  const Vec2 source_center{0.5 * extent.x, 0.5 * extent.y};
  const double theta = view.angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const float outside = seq.normalized ? 0.0f : 1.0f;
  const std::size_t n = view.out_size;

  // Source sampling coordinates per output cell; negative fx marks "outside".
  std::vector<double> fx(n * n);
  std::vector<double> fy(n * n);
  std::vector<std::uint8_t> inside(n * n, 0);
  WaveSequence out;
  out.frame_interval = seq.frame_interval;
  out.normalized = seq.normalized;
  out.provenance = seq.provenance;
  out.geometry.extent = {view.crop, view.crop};
  out.geometry.mask = Grid<std::uint8_t>(n, n, 1);
  const auto quarter_turns = static_cast<long>(std::lround(view.angle_deg / 90.0));
  const auto d = static_cast<Dihedral>(((quarter_turns % 4) + 4) % 4);
  out.geometry.edges = permute_edges(seq.geometry.edges, d);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double lx = (static_cast<double>(j) + 0.5) / n * view.crop - half;
      const double ly = (static_cast<double>(i) + 0.5) / n * view.crop - half;
      // Rotated field F'(q) = F(S + R(-theta)(q - S)) evaluated at q = C + l.
      const double qx = view.center.x + lx - source_center.x;
      const double qy = view.center.y + ly - source_center.y;
      const double sx = source_center.x + cs * qx + sn * qy;
      const double sy = source_center.y - sn * qx + cs * qy;
      const std::size_t k = i * n + j;
      fx[k] = sx / dx - 0.5;
      fy[k] = sy / dy - 0.5;
      double m = 1.0;
      if (bilinear(rows, cols, fx[k], fy[k],
                   [&](std::size_t r, std::size_t c) { return double(seq.geometry.mask(r, c)); },
                   m)) {
        inside[k] = 1;
      }
      out.geometry.mask[k] = m >= 0.5 ? 1 : 0;
    }
  }
  if (out.geometry.fluid_count() == 0) {
    throw Error(ErrorCode::kGeometry, "resample_view: window contains no fluid");
  }

  out.frames.reserve(seq.frames.size());
  for (const Frame& f : seq.frames) {
    Frame g(n, n, outside);
    for (std::size_t k = 0; k < n * n; ++k) {
      if (!inside[k] || out.geometry.mask[k]) continue;
      double v = outside;
      bilinear(rows, cols, fx[k], fy[k], [&](std::size_t r, std::size_t c) { return double(f(r, c)); },
               v);
      g[k] = static_cast<float>(v);
    }
    out.frames.push_back(std::move(g));
  }
  return out;
}

WaveSequence augment_open(const WaveSequence& seq, Rng& rng, double crop_extent,
                          std::size_t out_size) {
  ViewTransform view;
  view.angle_deg = 15.0 * static_cast<double>(rng.index(24));
  const Vec2 c{0.5 * seq.geometry.extent.x, 0.5 * seq.geometry.extent.y};
  view.center = {c.x + rng.uniform(-0.1, 0.1), c.y + rng.uniform(-0.1, 0.1)};
  view.crop = crop_extent;
  view.out_size = out_size;
  return resample_view(seq, view);
}

WaveSequence augment_rotate(const WaveSequence& seq, Rng& rng, std::size_t out_size) {
  ViewTransform view;
  view.angle_deg = 15.0 * static_cast<double>(rng.index(24));
  view.center = {0.5 * seq.geometry.extent.x, 0.5 * seq.geometry.extent.y};
  view.crop = std::min(seq.geometry.extent.x, seq.geometry.extent.y);
  view.out_size = out_size;
  return resample_view(seq, view);
}

WaveSequence network_view(const WaveSequence& seq, std::size_t out_size) {
  ViewTransform view;
  view.center = {0.5 * seq.geometry.extent.x, 0.5 * seq.geometry.extent.y};
  view.crop = std::min({1.0, seq.geometry.extent.x, seq.geometry.extent.y});
  view.out_size = out_size;
  return normalize(resample_view(seq, view));
}

WaveSequence training_view(const WaveSequence& seq, AugmentClass augment, Rng& rng,
                           std::size_t out_size) {
  switch (augment) {
    case AugmentClass::kDihedral:
      return network_view(augment_closed(seq, rng), out_size);
    case AugmentClass::kRotateCrop:
      return normalize(augment_open(seq, rng, 1.0, out_size));
    case AugmentClass::kRotateOnly:
      return normalize(augment_rotate(seq, rng, out_size));
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown augmentation class");
}

// ---------------------------------------------------------------------------

const DatasetInfo& dataset_info(char id) {
  for (const DatasetInfo& d : kDatasets) {
    if (d.id == id) return d;
  }
  throw Error(ErrorCode::kInvalidArgument, std::string("unknown dataset id '") + id + "'");
}

bool is_dataset_id(char id) { return id >= 'A' && id <= 'G'; }

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["format_version"] = m.format_version;
  j["dataset_id"] = std::string(1, m.dataset_id);
  j["name"] = m.name;
  j["purpose"] = m.purpose;
  j["category"] = to_string(m.category);
  j["resolution"] = m.resolution;
  j["frame_interval"] = m.frame_interval;
  j["frames_per_sequence"] = m.frames_per_sequence;
  j["master_seed"] = m.master_seed;
  j["sequence_count"] = m.sequences.size();
  json seqs = json::array();
  for (const SequenceRecord& r : m.sequences) {
    seqs.push_back({{"file", r.file},
                    {"seed", r.seed},
                    {"retries", r.retries},
                    {"domain", domain_json(r.domain)},
                    {"droplet",
                     {{"amplitude", r.droplet.amplitude},
                      {"sharpness", r.droplet.sharpness},
                      {"center", vec_json(r.droplet.center)}}}});
  }
  j["sequences"] = seqs;
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    DatasetManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1) {
      throw Error(ErrorCode::kFormat, "unsupported manifest version");
    }
    m.dataset_id = j.at("dataset_id").get<std::string>().at(0);
    m.name = j.at("name").get<std::string>();
    m.purpose = j.at("purpose").get<std::string>();
    const auto cat = parse_category(j.at("category").get<std::string>());
    if (!cat) throw Error(ErrorCode::kFormat, "manifest: unknown category");
    m.category = *cat;
    m.resolution = j.at("resolution").get<double>();
    m.frame_interval = j.at("frame_interval").get<double>();
    m.frames_per_sequence = j.at("frames_per_sequence").get<std::size_t>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    for (const json& s : j.at("sequences")) {
      SequenceRecord r;
      r.file = s.at("file").get<std::string>();
      r.seed = s.at("seed").get<std::uint64_t>();
      r.retries = s.value("retries", 0);
      r.domain = domain_from(s.at("domain"));
      const json& d = s.at("droplet");
      r.droplet = {d.at("amplitude").get<double>(), d.at("sharpness").get<double>(),
                   vec_from(d.at("center"))};
      m.sequences.push_back(std::move(r));
    }
    if (j.at("sequence_count").get<std::size_t>() != m.sequences.size()) {
      throw Error(ErrorCode::kFormat, "manifest sequence_count disagrees with its entries");
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed manifest: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest) {
  const auto path = dir / kManifestFile;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write manifest: " + path.string());
  out << manifest_to_json(manifest);
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestFile;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read manifest: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return manifest_from_json(buf.str());
}

DatasetManifest generate_dataset(const GenerateOptions& options) {
  const DatasetInfo& info = dataset_info(options.dataset);
  options.sim.validate();
  if (!(options.resolution > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "resolution must be positive");
  }
  std::error_code ec;
  std::filesystem::create_directories(options.out_dir, ec);
  if (ec || !std::filesystem::is_directory(options.out_dir)) {
    throw Error(ErrorCode::kIo, "cannot create output directory: " + options.out_dir.string());
  }

  DatasetManifest manifest;
  manifest.dataset_id = info.id;
  manifest.name = info.name;
  manifest.purpose = info.purpose;
  manifest.category = info.category;
  manifest.resolution = options.resolution;
  manifest.frame_interval = options.sim.snapshot_interval;
  manifest.frames_per_sequence = static_cast<std::size_t>(options.sim.snapshot_count);
  manifest.master_seed = options.seed;
  manifest.sequences.resize(options.count);

  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= options.count) return;
      {
        std::lock_guard lock(failure_mutex);
        if (failure) return;
      }
      try {
        WaveSequence seq;
        manifest.sequences[i] = generate_one(options, info, i, seq);
        write_sequence(options.out_dir / manifest.sequences[i].file, seq);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(options.count)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  write_manifest(options.out_dir, manifest);
  return manifest;
}

std::vector<WaveSequence> load_dataset(const std::filesystem::path& dir,
                                       DatasetManifest* manifest_out) {
  DatasetManifest manifest = read_manifest(dir);
  std::vector<WaveSequence> out;
  out.reserve(manifest.sequences.size());
  for (const SequenceRecord& rec : manifest.sequences) {
    WaveSequence seq = read_sequence(dir / rec.file, rec.domain.extent);
    seq.provenance = {rec.domain, rec.droplet, rec.seed};
    out.push_back(std::move(seq));
  }
  if (manifest_out) *manifest_out = std::move(manifest);
  return out;
}

WaveSequence load_sequence(const std::filesystem::path& path) {
  const auto dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  if (std::filesystem::exists(dir / kManifestFile)) {
    const DatasetManifest manifest = read_manifest(dir);
    const std::string name = path.filename().string();
    for (const SequenceRecord& rec : manifest.sequences) {
      if (rec.file != name) continue;
      WaveSequence seq = read_sequence(path, rec.domain.extent);
      seq.provenance = {rec.domain, rec.droplet, rec.seed};
      return seq;
    }
  }
  return read_sequence(path);
}

// ---------------------------------------------------------------------------

std::size_t max_window_origin(std::size_t length, std::size_t window_steps, std::size_t stride) {
  if (stride == 0 || window_steps == 0) {
    throw Error(ErrorCode::kInvalidArgument, "window stride and steps must be positive");
  }
  const std::size_t span = stride * (4 + window_steps);
  if (length <= span) {
    throw Error(ErrorCode::kShape, "sequence of " + std::to_string(length) +
                                       " frames is too short for a window spanning " +
                                       std::to_string(span + 1) + " frames");
  }
  return length - 1 - span;
}

std::vector<std::size_t> window_indices(std::size_t origin, std::size_t count, std::size_t stride) {
  std::vector<std::size_t> idx(count);
  for (std::size_t k = 0; k < count; ++k) idx[k] = origin + k * stride;
  return idx;
}

WaveSequence select_frames(const WaveSequence& seq, std::span<const std::size_t> indices,
                           double frame_interval) {
  WaveSequence out;
  out.geometry = seq.geometry;
  out.frame_interval = frame_interval;
  out.normalized = seq.normalized;
  out.provenance = seq.provenance;
  out.frames.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= seq.frames.size()) throw Error(ErrorCode::kShape, "frame index out of range");
    out.frames.push_back(seq.frames[i]);
  }
  return out;
}

Frame mask_frame(const GeometryField& geometry) {
  Frame f(geometry.rows(), geometry.cols());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = geometry.mask[i] ? 1.0f : 0.0f;
  return f;
}

TrainingWindow make_training_window(const WaveSequence& seq, Rng& rng, std::size_t window_steps,
                                    std::size_t stride) {
  const std::size_t last = max_window_origin(seq.length(), window_steps, stride);
  const std::size_t origin = rng.index(last + 1);
  TrainingWindow w;
  w.indices = window_indices(origin, 5 + window_steps, stride);
  const WaveSequence norm = normalize(select_frames(seq, w.indices, seq.frame_interval * stride));
  w.geometry = mask_frame(seq.geometry);
  w.inputs.assign(norm.frames.begin(), norm.frames.begin() + 5);
  w.targets.assign(norm.frames.begin() + 5, norm.frames.end());
  return w;
}

}  // namespace swnet
