#include "swnet/swe.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace swnet {
namespace {

constexpr std::size_t kMaxDropletDraws = 100000;

// Cell state in face-normal coordinates: depth, normal and tangential momentum.
struct LineCell {
  double h = 0.0;
  double hn = 0.0;
  double ht = 0.0;
};

enum class Bound { kWall, kOpen };

LineCell mirror(const LineCell& u) { return {u.h, -u.hn, u.ht}; }

double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

LineCell hll(const LineCell& l, const LineCell& r, double g) {
  const double ul = l.hn / l.h;
  const double ur = r.hn / r.h;
  const double cl = std::sqrt(g * l.h);
  const double cr = std::sqrt(g * r.h);
  const double sl = std::min(ul - cl, ur - cr);
  const double sr = std::max(ul + cl, ur + cr);
  const LineCell fl{l.hn, l.hn * ul + 0.5 * g * l.h * l.h, l.ht * ul};
  const LineCell fr{r.hn, r.hn * ur + 0.5 * g * r.h * r.h, r.ht * ur};
  if (sl >= 0.0) return fl;
  if (sr <= 0.0) return fr;
  const double inv = 1.0 / (sr - sl);
  return {(sr * fl.h - sl * fr.h + sl * sr * (r.h - l.h)) * inv,
          (sr * fl.hn - sl * fr.hn + sl * sr * (r.hn - l.hn)) * inv,
          (sr * fl.ht - sl * fr.ht + sl * sr * (r.ht - l.ht)) * inv};
}

struct LineWork {
  std::vector<LineCell> cells;
  std::vector<std::uint8_t> solid;
  std::vector<LineCell> slope;
  std::vector<LineCell> flux;
  std::vector<LineCell> du;
};

// Fills work.du with -dF/dn for each fluid cell of one grid line.
void line_residual(LineWork& w, Bound lo, Bound hi, bool muscl, double g, double inv_dx) {
  const std::size_t n = w.cells.size();
  const auto& u = w.cells;
  const auto& solid = w.solid;
  w.slope.assign(n, LineCell{});
  w.flux.assign(n + 1, LineCell{});
  w.du.assign(n, LineCell{});

  if (muscl) {
    for (std::size_t k = 0; k < n; ++k) {
      if (solid[k]) continue;
      LineCell left;
      if (k > 0 && !solid[k - 1]) {
        left = u[k - 1];
      } else {
        left = (k == 0 && lo == Bound::kOpen) ? u[k] : mirror(u[k]);
      }
      LineCell right;
      if (k + 1 < n && !solid[k + 1]) {
        right = u[k + 1];
      } else {
        right = (k + 1 == n && hi == Bound::kOpen) ? u[k] : mirror(u[k]);
      }
      w.slope[k] = {minmod(u[k].h - left.h, right.h - u[k].h),
                    minmod(u[k].hn - left.hn, right.hn - u[k].hn),
                    minmod(u[k].ht - left.ht, right.ht - u[k].ht)};
    }
  }

  for (std::size_t k = 0; k <= n; ++k) {
    const bool fluid_left = k > 0 && !solid[k - 1];
    const bool fluid_right = k < n && !solid[k];
    if (!fluid_left && !fluid_right) continue;
    LineCell ul;
    LineCell ur;
    if (fluid_left) {
      const LineCell& c = u[k - 1];
      const LineCell& s = w.slope[k - 1];
      ul = {c.h + 0.5 * s.h, c.hn + 0.5 * s.hn, c.ht + 0.5 * s.ht};
    }
    if (fluid_right) {
      const LineCell& c = u[k];
      const LineCell& s = w.slope[k];
      ur = {c.h - 0.5 * s.h, c.hn - 0.5 * s.hn, c.ht - 0.5 * s.ht};
    }
    if (!fluid_left) ul = (k == 0 && lo == Bound::kOpen) ? ur : mirror(ur);
    if (!fluid_right) ur = (k == n && hi == Bound::kOpen) ? ul : mirror(ul);
    w.flux[k] = hll(ul, ur, g);
  }

  for (std::size_t k = 0; k < n; ++k) {
    if (solid[k]) continue;
    w.du[k] = {-(w.flux[k + 1].h - w.flux[k].h) * inv_dx,
               -(w.flux[k + 1].hn - w.flux[k].hn) * inv_dx,
               -(w.flux[k + 1].ht - w.flux[k].ht) * inv_dx};
  }
}

Bound bound_of(const GeometryField& g, Edge e) {
  return g.edges.edge[e] == EdgeCondition::kOpen ? Bound::kOpen : Bound::kWall;
}

// Spatial residual L(U) over the whole grid.
void residual(const SimState& s, const GeometryField& geom, const SimConfig& cfg,
              SimState& out) {
  const std::size_t rows = s.h.rows();
  const std::size_t cols = s.h.cols();
  const bool muscl = cfg.reconstruction == Reconstruction::kMuscl;
  const double inv_dx = 1.0 / cfg.cell_size;
  out.h = Grid<double>(rows, cols, 0.0);
  out.hu = Grid<double>(rows, cols, 0.0);
  out.hv = Grid<double>(rows, cols, 0.0);

  thread_local LineWork w;
  // x-direction sweeps along rows.
  w.cells.resize(cols);
  w.solid.resize(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    w.cells.resize(cols);
    w.solid.resize(cols);
    for (std::size_t c = 0; c < cols; ++c) {
      w.cells[c] = {s.h(r, c), s.hu(r, c), s.hv(r, c)};
      w.solid[c] = geom.mask(r, c);
    }
    line_residual(w, bound_of(geom, kWest), bound_of(geom, kEast), muscl, cfg.gravity, inv_dx);
    for (std::size_t c = 0; c < cols; ++c) {
      out.h(r, c) += w.du[c].h;
      out.hu(r, c) += w.du[c].hn;
      out.hv(r, c) += w.du[c].ht;
    }
  }
  // y-direction sweeps along columns; normal momentum is hv.
  for (std::size_t c = 0; c < cols; ++c) {
    w.cells.resize(rows);
    w.solid.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      w.cells[r] = {s.h(r, c), s.hv(r, c), s.hu(r, c)};
      w.solid[r] = geom.mask(r, c);
    }
    line_residual(w, bound_of(geom, kSouth), bound_of(geom, kNorth), muscl, cfg.gravity, inv_dx);
    for (std::size_t r = 0; r < rows; ++r) {
      out.h(r, c) += w.du[r].h;
      out.hv(r, c) += w.du[r].hn;
      out.hu(r, c) += w.du[r].ht;
    }
  }
}

void check_state(const SimState& s, const GeometryField& geom) {
  for (std::size_t i = 0; i < s.h.size(); ++i) {
    if (geom.mask[i]) continue;
    const double h = s.h[i];
    if (!std::isfinite(h) || !std::isfinite(s.hu[i]) || !std::isfinite(s.hv[i])) {
      throw Error(ErrorCode::kInstability, "non-finite state at cell " + std::to_string(i));
    }
    if (h <= 0.0) {
      throw Error(ErrorCode::kPositivity, "non-positive depth at cell " + std::to_string(i));
    }
  }
}

void check_shapes(const SimState& s, const GeometryField& geom) {
  if (!s.h.same_shape(geom.mask) || !s.hu.same_shape(geom.mask) || !s.hv.same_shape(geom.mask)) {
    throw Error(ErrorCode::kShape, "state grid does not match geometry grid");
  }
}

// a + scale * b over fluid cells.
SimState axpy(const SimState& a, double scale, const SimState& b, const GeometryField& geom) {
  SimState out = a;
  for (std::size_t i = 0; i < a.h.size(); ++i) {
    if (geom.mask[i]) continue;
    out.h[i] += scale * b.h[i];
    out.hu[i] += scale * b.hu[i];
    out.hv[i] += scale * b.hv[i];
  }
  return out;
}

}  // namespace

void SimConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (!(gravity > 0)) fail("gravity must be positive");
  if (!(cell_size > 0)) fail("cell_size must be positive");
  if (!(cfl_number > 0 && cfl_number <= 1)) fail("cfl_number must lie in (0, 1]");
  if (!(snapshot_interval > 0)) fail("snapshot_interval must be positive");
  if (snapshot_count < 1) fail("snapshot_count must be at least 1");
  if (!(base_depth > 0)) fail("base_depth must be positive");
}

SimConfig config_for(const GeometryField& geometry) {
  SimConfig cfg;
  cfg.cell_size = geometry.cell_size();
  return cfg;
}

FluxPair physical_flux(const Conserved& u, double gravity) {
  if (!(u.h > 0)) throw Error(ErrorCode::kPositivity, "physical_flux: depth must be positive");
  const double p = 0.5 * gravity * u.h * u.h;
  const double uv = u.hu * u.hv / u.h;
  return {{u.hu, u.hu * u.hu / u.h + p, uv}, {u.hv, uv, u.hv * u.hv / u.h + p}};
}

Conserved numerical_flux(const Conserved& left, const Conserved& right, Axis normal,
                         double gravity) {
  for (double v : {left.h, left.hu, left.hv, right.h, right.hu, right.hv, gravity}) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNumeric, "numerical_flux: non-finite input");
  }
  if (!(left.h > 0) || !(right.h > 0)) {
    throw Error(ErrorCode::kPositivity, "numerical_flux: depths must be positive");
  }
  if (normal == Axis::kX) {
    const LineCell f = hll({left.h, left.hu, left.hv}, {right.h, right.hu, right.hv}, gravity);
    return {f.h, f.hn, f.ht};
  }
  const LineCell f = hll({left.h, left.hv, left.hu}, {right.h, right.hv, right.hu}, gravity);
  return {f.h, f.ht, f.hn};
}

SimState init_droplet(const GeometryField& geometry, const DropletSpec& spec,
                      const SimConfig& config) {
  config.validate();
  if (!(spec.amplitude > 0) || !(spec.sharpness > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "droplet amplitude and sharpness must be positive");
  }
  const auto cell = geometry.cell_at(spec.center);
  if (!cell || geometry.solid(cell->first, cell->second)) {
    throw Error(ErrorCode::kDomainViolation, "droplet centre lies outside the fluid domain");
  }
  SimState s;
  s.h = Grid<double>(geometry.rows(), geometry.cols(), config.base_depth);
  s.hu = Grid<double>(geometry.rows(), geometry.cols(), 0.0);
  s.hv = Grid<double>(geometry.rows(), geometry.cols(), 0.0);
  add_droplet(s, geometry, spec);
  return s;
}

void add_droplet(SimState& state, const GeometryField& geometry, const DropletSpec& spec) {
  const double dx = geometry.extent.x / static_cast<double>(geometry.cols());
  const double dy = geometry.extent.y / static_cast<double>(geometry.rows());
  for (std::size_t r = 0; r < geometry.rows(); ++r) {
    const double y = (static_cast<double>(r) + 0.5) * dy - spec.center.y;
    for (std::size_t c = 0; c < geometry.cols(); ++c) {
      if (geometry.solid(r, c)) continue;
      const double x = (static_cast<double>(c) + 0.5) * dx - spec.center.x;
      state.h(r, c) += spec.amplitude * std::exp(-spec.sharpness * (x * x + y * y));
    }
  }
}

DropletSpec sample_droplet(Rng& rng, const GeometryField& geometry) {
  if (geometry.fluid_count() == 0) {
    throw Error(ErrorCode::kGeometry, "sample_droplet: geometry has no fluid cells");
  }
  DropletSpec spec;
  spec.amplitude = 0.1;
  spec.sharpness = rng.uniform(400.0, 1000.0);
  for (std::size_t attempt = 0; attempt < kMaxDropletDraws; ++attempt) {
    const Vec2 p{rng.uniform(0.0, geometry.extent.x), rng.uniform(0.0, geometry.extent.y)};
    const auto cell = geometry.cell_at(p);
    if (cell && !geometry.solid(cell->first, cell->second)) {
      spec.center = p;
      return spec;
    }
  }
  throw Error(ErrorCode::kGeometry, "sample_droplet: rejection sampling failed");
}

double max_wavespeed(const SimState& state, const GeometryField& geometry, double gravity) {
  double speed = 0.0;
  for (std::size_t i = 0; i < state.h.size(); ++i) {
    if (geometry.mask[i]) continue;
    const double h = state.h[i];
    const double c = std::sqrt(gravity * h);
    const double s = std::abs(state.hu[i] / h) + std::abs(state.hv[i] / h) + 2.0 * c;
    if (!std::isfinite(s)) return s;
    speed = std::max(speed, s);
  }
  return speed;
}

double stable_dt(const SimState& state, const GeometryField& geometry, const SimConfig& config) {
  const double speed = max_wavespeed(state, geometry, config.gravity);
  if (!std::isfinite(speed)) {
    throw Error(ErrorCode::kInstability, "maximum wave speed is not finite");
  }
  if (!(speed > 0)) throw Error(ErrorCode::kInstability, "maximum wave speed is zero");
  return config.cfl_number * config.cell_size / speed;
}

SimState step(const SimState& state, const GeometryField& geometry, const SimConfig& config) {
  check_shapes(state, geometry);
  return step(state, geometry, config, stable_dt(state, geometry, config));
}

SimState step(const SimState& state, const GeometryField& geometry, const SimConfig& config,
              double dt) {
  check_shapes(state, geometry);
  if (!(dt > 0) || !std::isfinite(dt)) {
    throw Error(ErrorCode::kInvalidArgument, "step: dt must be positive and finite");
  }
  SimState rate;
  residual(state, geometry, config, rate);
  SimState next = axpy(state, dt, rate, geometry);
  if (config.integrator == Integrator::kSspRk2) {
    check_state(next, geometry);
    residual(next, geometry, config, rate);
    SimState stage = axpy(next, dt, rate, geometry);
    for (std::size_t i = 0; i < next.h.size(); ++i) {
      if (geometry.mask[i]) continue;
      next.h[i] = 0.5 * (state.h[i] + stage.h[i]);
      next.hu[i] = 0.5 * (state.hu[i] + stage.hu[i]);
      next.hv[i] = 0.5 * (state.hv[i] + stage.hv[i]);
    }
  }
  check_state(next, geometry);
  next.time = state.time + dt;
  return next;
}

WaveSequence run_simulation(const GeometryField& geometry, const SimState& initial,
                            const SimConfig& config,
                            const std::function<void(const SimState&)>& on_snapshot) {
  config.validate();
  check_shapes(initial, geometry);
  check_state(initial, geometry);

  auto snapshot = [&](const SimState& s) {
    Frame f(geometry.rows(), geometry.cols());
    for (std::size_t i = 0; i < f.size(); ++i) {
      f[i] = static_cast<float>(geometry.mask[i] ? config.base_depth : s.h[i]);
    }
    return f;
  };

  WaveSequence seq;
  seq.geometry = geometry;
  seq.frame_interval = config.snapshot_interval;
  seq.normalized = false;
  seq.frames.reserve(static_cast<std::size_t>(config.snapshot_count));
  seq.frames.push_back(snapshot(initial));
  if (on_snapshot) on_snapshot(initial);

  SimState state = initial;
  const double t0 = initial.time;
  try {
    for (int k = 1; k < config.snapshot_count; ++k) {
      const double target = t0 + k * config.snapshot_interval;
      while (state.time < target) {
        double dt = stable_dt(state, geometry, config);
        const bool last = state.time + dt >= target - 1e-12 * config.snapshot_interval;
        if (last) dt = target - state.time;
        state = step(state, geometry, config, dt);
        if (last) state.time = target;
      }
      seq.frames.push_back(snapshot(state));
      if (on_snapshot) on_snapshot(state);
    }
  } catch (const Error& e) {
    std::ostringstream msg;
    msg << "simulation failed at t = " << state.time << " s: " << e.what();
    throw Error(e.code(), msg.str());
  }
  return seq;
}

double total_mass(const SimState& state, const GeometryField& geometry) {
  const double area = (geometry.extent.x / static_cast<double>(geometry.cols())) *
                      (geometry.extent.y / static_cast<double>(geometry.rows()));
  double sum = 0.0;
  for (std::size_t i = 0; i < state.h.size(); ++i) {
    if (!geometry.mask[i]) sum += state.h[i];
  }
  return sum * area;
}

}  // namespace swnet
