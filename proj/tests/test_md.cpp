#include "support.hpp"

#include "xfer/units.hpp"

#include <doctest.h>

#include <numeric>
#include <set>

using namespace xfer;
using xfer::test::jittered_diamond;

namespace {

const SWPotential& si_sw() {
  static const SWPotential sw(default_parameters(Species::from_symbol("Si")));
  return sw;
}

Configuration dimer(double separation) {
  Configuration c;
  c.cell = Cell::cubic(20.0);
  c.species = {"Si", "Si"};
  c.positions = Positions::Zero(3, 2);
  c.positions.col(0) = Vec3(10.0 - 0.5 * separation, 10.0, 10.0);
  c.positions.col(1) = Vec3(10.0 + 0.5 * separation, 10.0, 10.0);
  return c;
}

double total_energy(const MDState& s) { return s.current.energy + s.kinetic_energy(); }

}  // namespace

TEST_CASE("velocity Verlet follows the analytic harmonic dimer") {
  const double k = 5.0, r0 = 2.3, amp = 0.1;
  const xfer::test::SpringPotential spring(k, r0, 6.0);
  MDState s = initialize_state(dimer(r0 + amp), 300.0, 1, spring);
  s.velocities.setZero();
  const double mu = 0.5 * Species::from_symbol("Si").mass;
  const double omega = std::sqrt(k / mu * units::kForceToAccel);  // rad/fs
  IntegratorSpec nve;
  nve.timestep = 0.1;
  for (int n = 1; n <= 2000; ++n) {
    s = step(std::move(s), spring, nve);
    if (n % 250 == 0) {
      const double r = (s.configuration.positions.col(1) - s.configuration.positions.col(0)).norm();
      CHECK(r - r0 == doctest::Approx(amp * std::cos(omega * n * nve.timestep)).epsilon(1e-3).scale(amp));
    }
  }
}

TEST_CASE("initial velocities carry no momentum and hit the target temperature") {
  const Configuration c = diamond_lattice("Si", 5.431, 2);
  const MDState s = initialize_state(c, 900.0, 42, si_sw());
  Vec3 p = Vec3::Zero();
  for (int a = 0; a < s.size(); ++a) p += s.masses[a] * s.velocities.col(a);
  CHECK(p.norm() < 1e-12);
  CHECK(s.kinetic_temperature() == doctest::Approx(900.0).epsilon(1e-12));
  const MDState t = initialize_state(c, 900.0, 42, si_sw());
  CHECK(s.velocities == t.velocities);
}

TEST_CASE("NVE conserves energy and momentum") {
  const Configuration c = jittered_diamond("Si", 5.431, 2, 0.02, 1);
  MDState s = initialize_state(c, 600.0, 3, si_sw());
  IntegratorSpec nve;
  nve.neighbor_skin = 0.5;
  const double e0 = total_energy(s);
  MDState end;
  const auto rec = run(s, nve, 2000, 100, si_sw(), {}, &end);
  REQUIRE(rec.completed);
  CHECK(std::abs(total_energy(end) - e0) / 64 < 1e-3);
  Vec3 p = Vec3::Zero();
  for (int a = 0; a < end.size(); ++a) p += end.masses[a] * end.velocities.col(a);
  CHECK(p.norm() < 1e-9);
  CHECK(rec.frames.size() == 20);
}

TEST_CASE("thermostats hold the target temperature") {
  const Configuration c = diamond_lattice("Si", 5.431, 2);
  for (Ensemble e : {Ensemble::NVT_Langevin, Ensemble::NVT_NoseHoover}) {
    IntegratorSpec spec{1.0, e, 1000.0};
    spec.langevin_friction = 5.0;
    spec.neighbor_skin = 0.5;
    const MDState s = initialize_state(c, 1000.0, 5, si_sw());
    std::vector<double> temps;
    RunOptions ro;
    ro.keep_frames = false;
    ro.on_frame = [&](const TrajectoryFrame& f) {
      if (f.step > 2000) temps.push_back(f.kinetic_temperature);
    };
    const auto rec = run(s, spec, 10000, 10, si_sw(), ro);
    REQUIRE(rec.completed);
    const double mean = std::accumulate(temps.begin(), temps.end(), 0.0) / temps.size();
    CHECK(mean == doctest::Approx(1000.0).epsilon(0.08));
  }
}

TEST_CASE("barostat relaxes a compressed cell") {
  const Configuration c = diamond_lattice("Si", 5.25, 2);
  IntegratorSpec spec{1.0, Ensemble::NPT_NoseHoover, 300.0};
  spec.neighbor_skin = 0.5;
  const MDState s = initialize_state(c, 300.0, 8, si_sw());
  CHECK(s.pressure() > 1e4);
  std::vector<double> vol, pres;
  RunOptions ro;
  ro.keep_frames = false;
  ro.on_frame = [&](const TrajectoryFrame& f) {
    if (f.step > 4000) {
      vol.push_back(f.volume);
      pres.push_back(f.pressure);
    }
  };
  const auto rec = run(s, spec, 8000, 10, si_sw(), ro);
  REQUIRE(rec.completed);
  const double v = std::accumulate(vol.begin(), vol.end(), 0.0) / vol.size();
  const double p = std::accumulate(pres.begin(), pres.end(), 0.0) / pres.size();
  CHECK(v > c.cell.volume() * 1.05);
  CHECK(std::abs(p) < 5e3);
}

TEST_CASE("runs are deterministic for a seed") {
  const Configuration c = diamond_lattice("Si", 5.431, 2);
  IntegratorSpec spec{1.0, Ensemble::NVT_Langevin, 800.0};
  spec.neighbor_skin = 0.5;
  MDState a_end, b_end, c_end;
  run(initialize_state(c, 800.0, 9, si_sw()), spec, 200, 200, si_sw(), {}, &a_end);
  run(initialize_state(c, 800.0, 9, si_sw()), spec, 200, 200, si_sw(), {}, &b_end);
  run(initialize_state(c, 800.0, 10, si_sw()), spec, 200, 200, si_sw(), {}, &c_end);
  CHECK(a_end.configuration.positions == b_end.configuration.positions);
  CHECK(a_end.configuration.positions != c_end.configuration.positions);
}

TEST_CASE("divergence is recorded, not thrown") {
  const Configuration c = diamond_lattice("Si", 5.431, 1);
  const xfer::test::RunawayPotential runaway;
  const MDState s = initialize_state(c, 300.0, 1, runaway);
  IntegratorSpec spec{1.0, Ensemble::NVT_Langevin, 300.0};
  TrajectoryRecord rec;
  CHECK_NOTHROW(rec = run(s, spec, 1000, 10, runaway));
  CHECK_FALSE(rec.completed);
  REQUIRE(rec.diverged_at.has_value());
  CHECK(*rec.diverged_at < 1000);
  CHECK_FALSE(rec.failure.empty());
}

TEST_CASE("closest approach is tracked over every step") {
  // The dimer turns at r0 - amp between samples; frames alone would miss it.
  const double r0 = 2.3, amp = 0.1;
  const xfer::test::SpringPotential spring(5.0, r0, 6.0);
  MDState s = initialize_state(dimer(r0 + amp), 300.0, 1, spring);
  s.velocities.setZero();
  IntegratorSpec nve;
  nve.timestep = 0.1;
  const auto rec = run(s, nve, 3000, 3000, spring);
  REQUIRE(rec.frames.size() == 1);
  CHECK(rec.min_distance == doctest::Approx(r0 - amp).epsilon(1e-4));
}

TEST_CASE("integrator settings are validated") {
  IntegratorSpec s;
  s.timestep = 0.0;
  CHECK_THROWS_AS(s.validate(), Error);
  s = IntegratorSpec{1.0, Ensemble::NVT_Langevin, 300.0};
  s.langevin_friction = 0.0;
  CHECK_THROWS_AS(s.validate(), Error);
  CHECK(ensemble_from_string(to_string(Ensemble::NPT_NoseHoover)) == Ensemble::NPT_NoseHoover);
  CHECK_THROWS_AS(ensemble_from_string("nvk"), Error);
}

TEST_CASE("dataset generation produces labelled, tagged, reproducible samples") {
  GenerationProtocol proto;
  proto.equilibration_steps = 300;
  proto.production_steps = 600;
  proto.sample_every = 200;
  proto.seed = 4;
  proto.equilibration.neighbor_skin = proto.production.neighbor_skin = 0.5;
  const auto params = default_parameters(Species::from_symbol("Ge"));
  const auto data = generate_dataset(params, {300.0, 1200.0}, proto);
  REQUIRE(data.samples.size() == 6);
  CHECK(data.skipped.empty());
  const SWPotential sw(params);
  for (std::size_t k = 0; k < data.samples.size(); ++k) {
    const auto& c = data.samples[k];
    CHECK(*c.temperature == (k < 3 ? 300.0 : 1200.0));
    CHECK(c.kind == "bulk");
    CHECK(c.provenance == "sw:Ge:builtin");
    const Evaluation ev = evaluate(sw, c);
    CHECK(*c.energy == doctest::Approx(ev.energy).epsilon(1e-12));
    CHECK((*c.forces - ev.forces).norm() < 1e-10);
    for (Eigen::Index a = 0; a < c.positions.cols(); ++a) {
      const Vec3 s = c.cell.to_fractional(c.positions.col(a));
      CHECK(s.minCoeff() >= 0.0);
      CHECK(s.maxCoeff() < 1.0);
    }
  }
  // A temperature's samples depend only on the seed and that temperature.
  const auto alone = generate_dataset(params, {1200.0}, proto);
  REQUIRE(alone.samples.size() == 3);
  CHECK(alone.samples[0].positions == data.samples[3].positions);
}

TEST_CASE("derived seeds are distinct") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t b = 0; b < 10; ++b) {
    for (std::uint64_t s = 0; s < 100; ++s) seen.insert(derive_seed(b, s));
  }
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(3, 7) == derive_seed(3, 7));
}
