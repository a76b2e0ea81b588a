#pragma once

#include <array>
#include <functional>

#include "swnet/common.hpp"
#include "swnet/geometry.hpp"
#include "swnet/sequence.hpp"

namespace swnet {

enum class Reconstruction : std::uint8_t { kFirstOrder = 0, kMuscl };
enum class Integrator : std::uint8_t { kForwardEuler = 0, kSspRk2 };

struct SimConfig {
  double gravity = 9.80665;
  double cell_size = 1.0 / 128.0;
  double cfl_number = 0.9;
  double snapshot_interval = 0.03;
  int snapshot_count = 100;
  double base_depth = 1.0;
  Reconstruction reconstruction = Reconstruction::kFirstOrder;
  Integrator integrator = Integrator::kForwardEuler;

  void validate() const;
};

/// Default configuration with the cell size taken from a rasterized geometry.
SimConfig config_for(const GeometryField& geometry);

struct SimState {
  Grid<double> h;
  Grid<double> hu;
  Grid<double> hv;
  double time = 0.0;
};

/// Conserved variables of one cell.
struct Conserved {
  double h = 0.0;
  double hu = 0.0;
  double hv = 0.0;
  bool operator==(const Conserved&) const = default;
};

struct FluxPair {
  Conserved x;
  Conserved y;
};

enum class Axis : std::uint8_t { kX = 0, kY };

FluxPair physical_flux(const Conserved& u, double gravity);

/// HLL interface flux through a face with the given normal axis.
Conserved numerical_flux(const Conserved& left, const Conserved& right, Axis normal,
                         double gravity);

SimState init_droplet(const GeometryField& geometry, const DropletSpec& spec,
                      const SimConfig& config);
/// Superimposes a further droplet (sum of Gaussians on the base depth).
void add_droplet(SimState& state, const GeometryField& geometry, const DropletSpec& spec);

/// I = 0.1 m, C ~ U(400, 1000) 1/m^2, centre uniform over the fluid region.
DropletSpec sample_droplet(Rng& rng, const GeometryField& geometry);

/// Largest (|u| + c) + (|v| + c) over fluid cells, the 2-D unsplit CFL speed.
double max_wavespeed(const SimState& state, const GeometryField& geometry, double gravity);

/// One explicit update with dt = cfl * cell_size / max_wavespeed.
SimState step(const SimState& state, const GeometryField& geometry, const SimConfig& config);
/// One explicit update with a caller-chosen dt.
SimState step(const SimState& state, const GeometryField& geometry, const SimConfig& config,
              double dt);
/// Stable dt for the current state.
double stable_dt(const SimState& state, const GeometryField& geometry, const SimConfig& config);

/// Runs to (snapshot_count - 1) * snapshot_interval, recording h at every
/// multiple of snapshot_interval. Frame 0 is the initial condition.
/// `on_snapshot`, when set, sees the full double-precision state at each frame.
WaveSequence run_simulation(const GeometryField& geometry, const SimState& initial,
                            const SimConfig& config,
                            const std::function<void(const SimState&)>& on_snapshot = {});

double total_mass(const SimState& state, const GeometryField& geometry);

}  // namespace swnet
