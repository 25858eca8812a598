#pragma once

#include "xfer/potential.hpp"
#include "xfer/sw.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace xfer {

enum class Ensemble { NVE, NVT_Langevin, NVT_NoseHoover, NPT_NoseHoover };

std::string to_string(Ensemble e);
Ensemble ensemble_from_string(const std::string& s);

struct IntegratorSpec {
  double timestep = 1.0;  // fs
  Ensemble ensemble = Ensemble::NVE;
  double target_temperature = 300.0;  // K
  double target_pressure = 0.0;       // bar, NPT only
  double thermostat_damping = 100.0;  // fs
  double barostat_damping = 1000.0;   // fs
  double langevin_friction = 1.0;     // 1/ps
  // 0 rebuilds the neighbor list every step; > 0 enables the skin cache.
  double neighbor_skin = 0.0;  // Å

  void validate() const;
};

// Nose-Hoover chain of length 2.
struct ChainState {
  std::array<double, 2> position{0.0, 0.0};
  std::array<double, 2> velocity{0.0, 0.0};  // 1/fs
};

struct MDState {
  Configuration configuration;
  Positions velocities;  // Å/fs
  std::vector<double> masses;
  ChainState thermostat;
  ChainState barostat_thermostat;
  double barostat_velocity = 0.0;  // d ln(V)/3 / dt, 1/fs
  std::int64_t step_index = 0;
  std::mt19937_64 rng;
  std::normal_distribution<double> gauss{0.0, 1.0};
  Evaluation current;  // forces/energy at `configuration`
  double min_distance = 0.0;  // closest pair within the potential cutoff
  std::optional<std::string> divergence;
  std::shared_ptr<NeighborCache> neighbor_cache;

  int size() const { return static_cast<int>(masses.size()); }
  double kinetic_energy() const;       // eV
  double kinetic_temperature() const;  // K, sum m v^2 / (3 N k_B)
  double pressure() const;             // bar
};

// Draws Maxwell-Boltzmann velocities at `temperature`, removes net momentum,
// and evaluates initial forces.
MDState initialize_state(Configuration config, double temperature, std::uint64_t seed,
                         const Potential& potential);

// One integration step. Divergence (non-finite values, overlap below 0.2 Å,
// runaway temperature) is recorded in `divergence`, never thrown.
MDState step(MDState state, const Potential& potential, const IntegratorSpec& spec);

struct TrajectoryFrame {
  std::int64_t step = 0;
  double time_fs = 0.0;
  Configuration configuration;
  double potential_energy = 0.0;  // eV
  double kinetic_temperature = 0.0;
  double pressure = 0.0;  // bar
  double volume = 0.0;    // Å^3
  Forces forces;          // reference-potential forces at the frame
};

struct TrajectoryRecord {
  std::vector<TrajectoryFrame> frames;
  bool completed = true;
  std::optional<std::int64_t> diverged_at;
  std::string failure;
  // Smallest interatomic distance seen at any step within the potential cutoff.
  double min_distance = 0.0;
};

using FrameCallback = std::function<void(const TrajectoryFrame&)>;

struct RunOptions {
  bool keep_frames = true;
  FrameCallback on_frame;
};

// Samples at steps sample_every, 2 sample_every, ... The final state is
// written to `final_state` when non-null.
TrajectoryRecord run(const MDState& initial, const IntegratorSpec& spec, std::int64_t n_steps,
                     std::int64_t sample_every, const Potential& potential,
                     const RunOptions& options = {}, MDState* final_state = nullptr);

// Data generation protocol: NPT equilibration followed by NVT production.
struct GenerationProtocol {
  IntegratorSpec equilibration{1.0, Ensemble::NPT_NoseHoover};
  IntegratorSpec production{1.0, Ensemble::NVT_NoseHoover};
  std::int64_t equilibration_steps = 10000;
  std::int64_t production_steps = 20000;
  std::int64_t sample_every = 1000;
  int replicas = 2;                 // diamond supercell repetitions
  double lattice_constant = 0.0;    // 0 uses the element's nominal value
  std::uint64_t seed = 0;
};

struct GeneratedData {
  std::vector<Configuration> samples;
  std::vector<std::pair<double, std::string>> skipped;  // temperature, reason
};

double nominal_lattice_constant(const std::string& symbol);

GeneratedData generate_dataset(const SWParameters& params, const std::vector<double>& temperatures,
                               const GenerationProtocol& protocol);

// Deterministic per-temperature seed derived from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

}  // namespace xfer
