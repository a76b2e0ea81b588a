#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "swnet/swe.hpp"

using namespace swnet;

namespace {

constexpr double kG = 9.80665;

GeometryField box(std::size_t n, double extent = 1.0,
                  EdgeCondition edge = EdgeCondition::kWall) {
  GeometryField g;
  g.mask = Grid<std::uint8_t>(n, n, 0);
  g.extent = {extent, extent};
  g.edges = EdgeConditions::all(edge);
  return g;
}

// Exact 1-D dam-break star state by bisection on the depth function.
double exact_star_velocity(double hl, double ul, double hr, double ur) {
  auto f = [](double h, double hk) {
    if (h > hk) return (h - hk) * std::sqrt(0.5 * kG * (h + hk) / (h * hk));
    return 2.0 * (std::sqrt(kG * h) - std::sqrt(kG * hk));
  };
  double lo = 1e-6;
  double hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid, hl) + f(mid, hr) + ur - ul > 0) hi = mid; else lo = mid;
  }
  const double hs = 0.5 * (lo + hi);
  return 0.5 * (ul + ur) + 0.5 * (f(hs, hr) - f(hs, hl));
}

}  // namespace

TEST_CASE("physical flux at rest and in motion") {
  const FluxPair rest = physical_flux({1.0, 0.0, 0.0}, kG);
  CHECK(rest.x.h == 0.0);
  CHECK(rest.x.hu == doctest::Approx(4.903325).epsilon(1e-12));
  CHECK(rest.x.hv == 0.0);
  CHECK(rest.y.hv == doctest::Approx(4.903325).epsilon(1e-12));

  const FluxPair moving = physical_flux({2.0, 2.0, 0.0}, kG);
  CHECK(moving.x.h == 2.0);
  CHECK(moving.x.hu == doctest::Approx(21.6133).epsilon(1e-12));
  CHECK(moving.x.hv == 0.0);

  CHECK_THROWS_AS(physical_flux({0.0, 0.0, 0.0}, kG), Error);
}

TEST_CASE("HLL flux consistency and symmetry") {
  const Conserved u{1.3, 0.4, -0.2};
  for (Axis a : {Axis::kX, Axis::kY}) {
    const Conserved f = numerical_flux(u, u, a, kG);
    const FluxPair p = physical_flux(u, kG);
    const Conserved& ref = a == Axis::kX ? p.x : p.y;
    CHECK(f.h == doctest::Approx(ref.h).epsilon(1e-14));
    CHECK(f.hu == doctest::Approx(ref.hu).epsilon(1e-14));
    CHECK(f.hv == doctest::Approx(ref.hv).epsilon(1e-14));
  }
  const Conserved rest{1.0, 0.0, 0.0};
  CHECK(numerical_flux(rest, rest, Axis::kX, kG).h == 0.0);

  const Conserved l{1.2, 0.5, 0.1};
  const Conserved r{1.2, -0.5, 0.1};
  CHECK(std::abs(numerical_flux(l, r, Axis::kX, kG).h) < 1e-14);
}

TEST_CASE("dam break sends mass toward the shallow side") {
  const double ustar = exact_star_velocity(1.1, 0.0, 1.0, 0.0);
  CHECK(ustar > 0.0);
  for (Axis a : {Axis::kX, Axis::kY}) {
    const Conserved f = numerical_flux({1.1, 0, 0}, {1.0, 0, 0}, a, kG);
    CHECK(f.h > 0.0);
    CHECK((f.h > 0) == (ustar > 0));
  }
  CHECK_THROWS_AS(numerical_flux({NAN, 0, 0}, {1, 0, 0}, Axis::kX, kG), Error);
  CHECK_THROWS_AS(numerical_flux({-1, 0, 0}, {1, 0, 0}, Axis::kX, kG), Error);
}

TEST_CASE("droplet initial condition") {
  const GeometryField g = box(100);
  SimConfig cfg = config_for(g);
  DropletSpec spec{0.1, 400.0, {0.505, 0.505}};
  const SimState s = init_droplet(g, spec, cfg);
  CHECK(s.h(50, 50) == doctest::Approx(1.1).epsilon(1e-12));
  // (0.605, 0.505) is the centre of cell (50, 60): distance 0.1 m.
  CHECK(s.h(50, 60) == doctest::Approx(1.0 + 0.1 * std::exp(-4.0)).epsilon(1e-12));
  CHECK(s.h(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.time == 0.0);
  for (double v : s.hu.values()) CHECK(v == 0.0);

  GeometryField blocked = g;
  blocked.mask(50, 50) = 1;
  CHECK_THROWS_AS(init_droplet(blocked, spec, cfg), Error);
  try {
    init_droplet(blocked, spec, cfg);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDomainViolation);
  }
}

TEST_CASE("droplet sampling statistics") {
  const GeometryField g = box(64);
  Rng a(11);
  Rng b(11);
  const DropletSpec s1 = sample_droplet(a, g);
  const DropletSpec s2 = sample_droplet(b, g);
  CHECK(s1.center == s2.center);
  CHECK(s1.sharpness == s2.sharpness);

  double sum = 0.0;
  double lo = 1e9;
  double hi = -1e9;
  for (int i = 0; i < 10000; ++i) {
    const DropletSpec s = sample_droplet(a, g);
    CHECK(s.amplitude == 0.1);
    sum += s.sharpness;
    lo = std::min(lo, s.sharpness);
    hi = std::max(hi, s.sharpness);
    const auto cell = g.cell_at(s.center);
    REQUIRE(cell);
    CHECK_FALSE(g.solid(cell->first, cell->second));
  }
  CHECK(lo > 400.0);
  CHECK(hi < 1000.0);
  CHECK(sum / 10000 == doctest::Approx(700.0).epsilon(10.0 / 700.0));

  GeometryField solid = g;
  solid.mask = Grid<std::uint8_t>(64, 64, 1);
  CHECK_THROWS_AS(sample_droplet(a, solid), Error);
}

TEST_CASE("rest state stays flat") {
  const GeometryField g = box(24);
  SimConfig cfg = config_for(g);
  for (auto recon : {Reconstruction::kFirstOrder, Reconstruction::kMuscl}) {
    cfg.reconstruction = recon;
    SimState s{Grid<double>(24, 24, 1.0), Grid<double>(24, 24, 0.0), Grid<double>(24, 24, 0.0), 0};
    for (int k = 0; k < 1000; ++k) s = step(s, g, cfg);
    double dev = 0.0;
    for (std::size_t i = 0; i < s.h.size(); ++i) {
      dev = std::max({dev, std::abs(s.h[i] - 1.0), std::abs(s.hu[i]), std::abs(s.hv[i])});
    }
    CHECK(dev < 1e-13);
  }
}

TEST_CASE("closed box conserves mass") {
  GeometryField g = box(48);
  // An internal obstacle exercises solid-cell walls as well.
  for (std::size_t r = 10; r < 20; ++r) {
    for (std::size_t c = 30; c < 36; ++c) g.mask(r, c) = 1;
  }
  for (auto integ : {Integrator::kForwardEuler, Integrator::kSspRk2}) {
    for (auto recon : {Reconstruction::kFirstOrder, Reconstruction::kMuscl}) {
      SimConfig cfg = config_for(g);
      cfg.integrator = integ;
      cfg.reconstruction = recon;
      cfg.snapshot_count = 20;
      const SimState ic = init_droplet(g, {0.1, 500.0, {0.3, 0.6}}, cfg);
      const double m0 = total_mass(ic, g);
      double worst = 0.0;
      run_simulation(g, ic, cfg, [&](const SimState& s) {
        worst = std::max(worst, std::abs(total_mass(s, g) - m0) / m0);
      });
      CHECK(worst < 1e-10);
    }
  }
}

TEST_CASE("snapshot timing and degenerate runs") {
  const GeometryField g = box(16);
  SimConfig cfg = config_for(g);
  const SimState ic = init_droplet(g, {0.1, 500.0, {0.5, 0.5}}, cfg);

  cfg.snapshot_count = 1;
  WaveSequence one = run_simulation(g, ic, cfg);
  REQUIRE(one.length() == 1);
  for (std::size_t i = 0; i < ic.h.size(); ++i) CHECK(one.frames[0][i] == float(ic.h[i]));

  cfg.snapshot_count = 100;
  std::vector<double> times;
  const WaveSequence seq = run_simulation(g, ic, cfg, [&](const SimState& s) {
    times.push_back(s.time);
  });
  CHECK(seq.length() == 100);
  CHECK(seq.frame_interval == 0.03);
  REQUIRE(times.size() == 100);
  for (std::size_t k = 0; k < times.size(); ++k) {
    CHECK(times[k] == doctest::Approx(0.03 * k).epsilon(1e-12));
  }
  CHECK(times.back() == doctest::Approx(2.97));
}

TEST_CASE("droplet spreads: peak falls while the disturbed radius grows") {
  const GeometryField g = box(64);
  SimConfig cfg = config_for(g);
  SimState s = init_droplet(g, {0.1, 700.0, {0.5, 0.5}}, cfg);
  auto radius = [&](const SimState& st) {
    double r = 0.0;
    for (std::size_t i = 0; i < 64; ++i) {
      for (std::size_t j = 0; j < 64; ++j) {
        if (std::abs(st.h(i, j) - 1.0) > 1e-3) {
          r = std::max(r, std::hypot((i + 0.5) / 64 - 0.5, (j + 0.5) / 64 - 0.5));
        }
      }
    }
    return r;
  };
  double peak = *std::max_element(s.h.values().begin(), s.h.values().end());
  double rad = radius(s);
  for (int k = 0; k < 4; ++k) {
    for (int j = 0; j < 5; ++j) s = step(s, g, cfg);
    const double p = *std::max_element(s.h.values().begin(), s.h.values().end());
    const double r = radius(s);
    CHECK(p < peak);
    CHECK(r >= rad);
    peak = p;
    rad = r;
  }
}

TEST_CASE("centred droplet is invariant under quarter turns") {
  const std::size_t n = 40;
  const GeometryField g = box(n);
  SimConfig cfg = config_for(g);
  cfg.snapshot_count = 15;
  cfg.reconstruction = Reconstruction::kMuscl;
  const SimState ic = init_droplet(g, {0.1, 600.0, {0.5, 0.5}}, cfg);
  const WaveSequence seq = run_simulation(g, ic, cfg);
  double worst = 0.0;
  for (const Frame& f : seq.frames) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double a = f(i, j);
        const double b = f(n - 1 - j, i);
        worst = std::max(worst, std::abs(a - b) / std::abs(a));
      }
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("open boundaries let the wave leave") {
  GeometryField g = box(32, 1.0, EdgeCondition::kOpen);
  SimConfig cfg = config_for(g);
  cfg.snapshot_count = 40;
  const SimState ic = init_droplet(g, {0.1, 700.0, {0.5, 0.5}}, cfg);
  const WaveSequence seq = run_simulation(g, ic, cfg);
  auto amp = [](const Frame& f) {
    double m = 0.0;
    for (float v : f.values()) m = std::max(m, std::abs(double(v) - 1.0));
    return m;
  };
  CHECK(amp(seq.frames.back()) < 0.1 * amp(seq.frames.front()));
}

TEST_CASE("solid cells stay frozen and invalid input is rejected") {
  GeometryField g = box(20);
  g.mask(5, 5) = 1;
  SimConfig cfg = config_for(g);
  cfg.snapshot_count = 5;
  SimState ic = init_droplet(g, {0.1, 500.0, {0.62, 0.62}}, cfg);
  const WaveSequence seq = run_simulation(g, ic, cfg);
  for (const Frame& f : seq.frames) CHECK(f(5, 5) == 1.0f);

  SimState bad = ic;
  bad.h(2, 2) = -1.0;
  CHECK_THROWS_AS(step(bad, g, cfg), Error);
  bad.h(2, 2) = NAN;
  CHECK_THROWS_AS(step(bad, g, cfg), Error);
  try {
    run_simulation(g, bad, cfg);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInstability);
  }

  SimConfig c2 = cfg;
  c2.cfl_number = 1.5;
  CHECK_THROWS_AS(c2.validate(), Error);
  c2 = cfg;
  c2.snapshot_count = 0;
  CHECK_THROWS_AS(c2.validate(), Error);

  GeometryField other = box(21);
  CHECK_THROWS_AS(step(ic, other, cfg), Error);
}
