#include "xfer/md.hpp"

#include "xfer/units.hpp"

#include <algorithm>
#include <cmath>

namespace xfer {

using units::kBoltzmann;
using units::kForceToAccel;
using units::kMv2ToEv;

std::string to_string(Ensemble e) {
  switch (e) {
    case Ensemble::NVE: return "NVE";
    case Ensemble::NVT_Langevin: return "NVT_Langevin";
    case Ensemble::NVT_NoseHoover: return "NVT_NoseHoover";
    case Ensemble::NPT_NoseHoover: return "NPT_NoseHoover";
  }
  return "?";
}

Ensemble ensemble_from_string(const std::string& s) {
  if (s == "NVE" || s == "nve") return Ensemble::NVE;
  if (s == "NVT_Langevin" || s == "langevin") return Ensemble::NVT_Langevin;
  if (s == "NVT_NoseHoover" || s == "nvt") return Ensemble::NVT_NoseHoover;
  if (s == "NPT_NoseHoover" || s == "npt") return Ensemble::NPT_NoseHoover;
  throw Error("unknown ensemble '" + s + "'");
}

void IntegratorSpec::validate() const {
  if (!(timestep > 0.0)) throw Error("timestep must be positive");
  if (ensemble != Ensemble::NVE && !(target_temperature > 0.0)) {
    throw Error("thermostatted ensembles need a positive target temperature");
  }
  if ((ensemble == Ensemble::NVT_NoseHoover || ensemble == Ensemble::NPT_NoseHoover) &&
      !(thermostat_damping > 0.0)) {
    throw Error("thermostat damping must be positive");
  }
  if (ensemble == Ensemble::NPT_NoseHoover && !(barostat_damping > 0.0)) {
    throw Error("barostat damping must be positive");
  }
  if (ensemble == Ensemble::NVT_Langevin && !(langevin_friction > 0.0)) {
    throw Error("Langevin friction must be positive");
  }
}

double MDState::kinetic_energy() const {
  double s = 0.0;
  for (int a = 0; a < size(); ++a) s += masses[a] * velocities.col(a).squaredNorm();
  return 0.5 * s * kMv2ToEv;
}

double MDState::kinetic_temperature() const {
  if (size() == 0) return 0.0;
  return 2.0 * kinetic_energy() / (3.0 * size() * kBoltzmann);
}

double MDState::pressure() const {
  const double v = configuration.cell.volume();
  return (2.0 * kinetic_energy() + current.virial.trace()) / (3.0 * v) *
         units::kEvPerA3ToBar;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  // splitmix64 finaliser
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

constexpr double kOverlapDistance = 0.2;  // Å
constexpr double kRunawayFactor = 100.0;

void evaluate_forces(MDState& s, const Potential& potential, const IntegratorSpec& spec) {
  try {
    const NeighborList* nl = nullptr;
    NeighborList fresh;
    if (spec.neighbor_skin > 0.0) {
      if (!s.neighbor_cache) {
        s.neighbor_cache = std::make_shared<NeighborCache>(potential.cutoff(), spec.neighbor_skin);
      }
      nl = &s.neighbor_cache->update(s.configuration);
    } else {
      fresh = build_neighbor_list(s.configuration, potential.cutoff());
      nl = &fresh;
    }
    s.min_distance = nl->min_distance();
    s.current = potential.evaluate(s.configuration, *nl);
  } catch (const OverlapError& e) {
    s.divergence = std::string("overlap: ") + e.what();
  } catch (const GeometryError& e) {
    s.divergence = std::string("geometry: ") + e.what();
  }
}

void check_divergence(MDState& s, const IntegratorSpec& spec) {
  if (s.divergence) return;
  if (!s.configuration.positions.allFinite() || !s.velocities.allFinite() ||
      !s.current.forces.allFinite() || !std::isfinite(s.current.energy)) {
    s.divergence = "non-finite value";
    return;
  }
  if (s.min_distance < kOverlapDistance) {
    s.divergence = "interatomic distance below 0.2 A";
    return;
  }
  if (spec.target_temperature > 0.0 &&
      s.kinetic_temperature() > kRunawayFactor * spec.target_temperature) {
    s.divergence = "kinetic temperature exceeds 100x target";
  }
}

void kick(MDState& s, double dt) {
  for (int a = 0; a < s.size(); ++a) {
    s.velocities.col(a) += (dt * kForceToAccel / s.masses[a]) * s.current.forces.col(a);
  }
}

void drift(MDState& s, double dt) { s.configuration.positions += dt * s.velocities; }

double mv2(const MDState& s) { return 2.0 * s.kinetic_energy(); }

// Martyna-Tuckerman-Klein half step for a chain of two thermostats acting on a
// subsystem with kinetic term ke2 = sum m v^2 (eV). Returns the velocity scale.
double chain_half_step(ChainState& c, double ke2, double nf, double kT, double q1, double q2,
                       double dt) {
  const double dt2 = 0.5 * dt, dt4 = 0.25 * dt, dt8 = 0.125 * dt;
  auto& v = c.velocity;
  v[1] += dt4 * (q1 * v[0] * v[0] - kT) / q2;
  v[0] *= std::exp(-v[1] * dt8);
  v[0] += dt4 * (ke2 - nf * kT) / q1;
  v[0] *= std::exp(-v[1] * dt8);
  c.position[0] += dt2 * v[0];
  c.position[1] += dt2 * v[1];
  const double scale = std::exp(-v[0] * dt2);
  ke2 *= scale * scale;
  v[0] *= std::exp(-v[1] * dt8);
  v[0] += dt4 * (ke2 - nf * kT) / q1;
  v[0] *= std::exp(-v[1] * dt8);
  v[1] += dt4 * (q1 * v[0] * v[0] - kT) / q2;
  return scale;
}

double degrees_of_freedom(const MDState& s) { return std::max(3.0 * s.size() - 3.0, 1.0); }

void thermostat_half(MDState& s, const IntegratorSpec& spec) {
  const double kT = kBoltzmann * spec.target_temperature;
  const double nf = degrees_of_freedom(s);
  const double tau = spec.thermostat_damping;
  const double scale =
      chain_half_step(s.thermostat, mv2(s), nf, kT, nf * kT * tau * tau, kT * tau * tau,
                      spec.timestep);
  s.velocities *= scale;
}

double sinhc(double x) {
  if (std::abs(x) < 1e-4) return 1.0 + x * x / 6.0;
  return std::sinh(x) / x;
}

void step_nve(MDState& s, const Potential& pot, const IntegratorSpec& spec) {
  const double dt = spec.timestep;
  kick(s, 0.5 * dt);
  drift(s, dt);
  evaluate_forces(s, pot, spec);
  if (s.divergence) return;
  kick(s, 0.5 * dt);
}

void step_langevin(MDState& s, const Potential& pot, const IntegratorSpec& spec) {
  const double dt = spec.timestep;
  const double gamma = spec.langevin_friction / units::kFsPerPs;
  const double c1 = std::exp(-gamma * dt);
  const double c2 = std::sqrt(1.0 - c1 * c1);
  const double kT = kBoltzmann * spec.target_temperature;
  kick(s, 0.5 * dt);
  drift(s, 0.5 * dt);
  for (int a = 0; a < s.size(); ++a) {
    const double sd = c2 * std::sqrt(kT / s.masses[a] * kForceToAccel);
    for (int k = 0; k < 3; ++k) {
      s.velocities(k, a) = c1 * s.velocities(k, a) + sd * s.gauss(s.rng);
    }
  }
  drift(s, 0.5 * dt);
  evaluate_forces(s, pot, spec);
  if (s.divergence) return;
  kick(s, 0.5 * dt);
}

void step_nose_hoover(MDState& s, const Potential& pot, const IntegratorSpec& spec) {
  thermostat_half(s, spec);
  step_nve(s, pot, spec);
  if (s.divergence) return;
  thermostat_half(s, spec);
}

// Isotropic MTK barostat coupled to chains on both particles and the cell.
void step_npt(MDState& s, const Potential& pot, const IntegratorSpec& spec) {
  const double dt = spec.timestep;
  const double kT = kBoltzmann * spec.target_temperature;
  const double nf = degrees_of_freedom(s);
  const double alpha = 1.0 + 3.0 / nf;
  const double tau_b = spec.barostat_damping;
  const double tau_t = spec.thermostat_damping;
  const double w = (nf + 3.0) * kT * tau_b * tau_b;
  const double p_ext = spec.target_pressure / units::kEvPerA3ToBar;

  auto baro_chain_half = [&] {
    const double ke2 = w * s.barostat_velocity * s.barostat_velocity;
    const double scale = chain_half_step(s.barostat_thermostat, ke2, 1.0, kT, kT * tau_t * tau_t,
                                         kT * tau_t * tau_t, dt);
    s.barostat_velocity *= scale;
  };
  auto cell_force = [&] {
    const double v = s.configuration.cell.volume();
    return (alpha * mv2(s) + s.current.virial.trace() - 3.0 * v * p_ext) / w;
  };
  auto velocity_half = [&] {
    const double x = alpha * s.barostat_velocity * 0.25 * dt;
    const double e2 = std::exp(-2.0 * x);
    const double kick_factor = std::exp(-x) * sinhc(x);
    s.velocities *= e2;
    kick(s, 0.5 * dt * kick_factor);
  };

  baro_chain_half();
  thermostat_half(s, spec);
  s.barostat_velocity += 0.5 * dt * cell_force();
  velocity_half();

  const double x = s.barostat_velocity * 0.5 * dt;
  const double grow = std::exp(2.0 * x);
  s.configuration.positions =
      s.configuration.positions * grow + (dt * std::exp(x) * sinhc(x)) * s.velocities;
  try {
    s.configuration.cell = s.configuration.cell.scaled(grow);
  } catch (const GeometryError& e) {
    s.divergence = std::string("cell: ") + e.what();
    return;
  }
  evaluate_forces(s, pot, spec);
  if (s.divergence) return;

  velocity_half();
  s.barostat_velocity += 0.5 * dt * cell_force();
  thermostat_half(s, spec);
  baro_chain_half();
}

}  // namespace

MDState initialize_state(Configuration config, double temperature, std::uint64_t seed,
                         const Potential& potential) {
  config.validate();
  MDState s;
  s.masses = config.masses();
  s.configuration = std::move(config);
  s.rng.seed(seed);
  const int n = s.size();
  s.velocities = Positions::Zero(3, n);
  if (temperature > 0.0) {
    const double kT = kBoltzmann * temperature;
    for (int a = 0; a < n; ++a) {
      const double sd = std::sqrt(kT / s.masses[a] * kForceToAccel);
      for (int k = 0; k < 3; ++k) s.velocities(k, a) = sd * s.gauss(s.rng);
    }
    if (n > 1) {
      Vec3 p = Vec3::Zero();
      double mtot = 0.0;
      for (int a = 0; a < n; ++a) {
        p += s.masses[a] * s.velocities.col(a);
        mtot += s.masses[a];
      }
      const Vec3 vcm = p / mtot;
      s.velocities.colwise() -= vcm;
    }
    const double t_now = s.kinetic_temperature();
    if (t_now > 0.0) s.velocities *= std::sqrt(temperature / t_now);
  }
  evaluate_forces(s, potential, IntegratorSpec{});
  if (s.divergence) throw Error("initial configuration is invalid: " + *s.divergence);
  return s;
}

MDState step(MDState state, const Potential& potential, const IntegratorSpec& spec) {
  if (state.divergence) return state;
  switch (spec.ensemble) {
    case Ensemble::NVE: step_nve(state, potential, spec); break;
    case Ensemble::NVT_Langevin: step_langevin(state, potential, spec); break;
    case Ensemble::NVT_NoseHoover: step_nose_hoover(state, potential, spec); break;
    case Ensemble::NPT_NoseHoover: step_npt(state, potential, spec); break;
  }
  ++state.step_index;
  check_divergence(state, spec);
  return state;
}

TrajectoryRecord run(const MDState& initial, const IntegratorSpec& spec, std::int64_t n_steps,
                     std::int64_t sample_every, const Potential& potential,
                     const RunOptions& options, MDState* final_state) {
  spec.validate();
  if (n_steps < 1) throw Error("n_steps must be >= 1");
  if (sample_every < 1) throw Error("sample_every must be >= 1");
  TrajectoryRecord rec;
  MDState s = initial;
  rec.min_distance = s.min_distance;
  const std::int64_t start = s.step_index;
  for (std::int64_t k = 1; k <= n_steps; ++k) {
    s = step(std::move(s), potential, spec);
    if (s.divergence) {
      rec.completed = false;
      rec.diverged_at = s.step_index;
      rec.failure = *s.divergence;
      break;
    }
    rec.min_distance = std::min(rec.min_distance, s.min_distance);
    if (k % sample_every == 0) {
      TrajectoryFrame f;
      f.step = s.step_index;
      f.time_fs = static_cast<double>(s.step_index - start) * spec.timestep;
      f.configuration = s.configuration;
      f.potential_energy = s.current.energy;
      f.kinetic_temperature = s.kinetic_temperature();
      f.pressure = s.pressure();
      f.volume = s.configuration.cell.volume();
      f.forces = s.current.forces;
      if (options.on_frame) options.on_frame(f);
      if (options.keep_frames) rec.frames.push_back(std::move(f));
    }
  }
  if (final_state) *final_state = std::move(s);
  return rec;
}

double nominal_lattice_constant(const std::string& symbol) {
  if (symbol == "Si") return 5.431;
  if (symbol == "Ge") return 5.658;
  if (symbol == "C") return 3.567;
  if (symbol == "Sn") return 6.489;
  throw Error("no nominal lattice constant for '" + symbol + "'");
}

namespace {

Configuration wrapped(Configuration c) {
  for (int a = 0; a < static_cast<int>(c.size()); ++a) {
    Vec3 s = c.cell.to_fractional(c.positions.col(a));
    for (int k = 0; k < 3; ++k) {
      if (c.cell.periodic()[k]) s[k] -= std::floor(s[k]);
    }
    c.positions.col(a) = c.cell.to_cartesian(s);
  }
  return c;
}

}  // namespace

GeneratedData generate_dataset(const SWParameters& params, const std::vector<double>& temperatures,
                               const GenerationProtocol& protocol) {
  const SWPotential sw(params);
  const double a0 = protocol.lattice_constant > 0.0 ? protocol.lattice_constant
                                                     : nominal_lattice_constant(params.element);
  GeneratedData out;
  for (const double t : temperatures) {
    const auto seed = derive_seed(protocol.seed, static_cast<std::uint64_t>(std::llround(t * 1000)));
    Configuration start = diamond_lattice(params.element, a0, protocol.replicas);
    MDState state = initialize_state(start, t, seed, sw);

    IntegratorSpec eq = protocol.equilibration;
    eq.target_temperature = t;
    MDState equilibrated;
    if (protocol.equilibration_steps > 0) {
      auto rec = run(state, eq, protocol.equilibration_steps, protocol.equilibration_steps, sw,
                     RunOptions{false, {}}, &equilibrated);
      if (!rec.completed) {
        out.skipped.emplace_back(t, "equilibration diverged at step " +
                                        std::to_string(*rec.diverged_at) + ": " + rec.failure);
        continue;
      }
    } else {
      equilibrated = state;
    }
    equilibrated.barostat_velocity = 0.0;
    equilibrated.barostat_thermostat = {};

    IntegratorSpec prod = protocol.production;
    prod.target_temperature = t;
    std::vector<Configuration> samples;
    RunOptions opts;
    opts.keep_frames = false;
    opts.on_frame = [&](const TrajectoryFrame& f) {
      Configuration c = wrapped(f.configuration);
      const Evaluation ev = evaluate(sw, c);
      c.energy = ev.energy;
      c.forces = ev.forces;
      c.temperature = t;
      c.kind = "bulk";
      c.provenance = "sw:" + params.element + ":" + params.source;
      samples.push_back(std::move(c));
    };
    auto rec = run(equilibrated, prod, protocol.production_steps, protocol.sample_every, sw, opts);
    if (!rec.completed) {
      out.skipped.emplace_back(t, "production diverged at step " +
                                      std::to_string(*rec.diverged_at) + ": " + rec.failure);
      continue;
    }
    for (auto& c : samples) out.samples.push_back(std::move(c));
  }
  return out;
}

}  // namespace xfer
