#include "support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace xfer;
using xfer::test::jittered_diamond;

namespace {

// Stillinger-Weber energy written out directly from the functional form,
// summed over explicit periodic images.
double brute_sw_energy(const Configuration& c, double eps, double sigma, double a, double lambda,
                       double gamma, double A, double B) {
  const double rc = a * sigma;
  auto phi2 = [&](double r) {
    if (r >= rc) return 0.0;
    return A * eps * (B * std::pow(sigma / r, 4) - 1.0) * std::exp(sigma / (r - rc));
  };
  auto h = [&](double r) { return r >= rc ? 0.0 : std::exp(gamma * sigma / (r - rc)); };
  const auto pairs = xfer::test::brute_neighbors(c, rc, 2);
  double e = 0.0;
  for (const auto& p : pairs) e += 0.5 * phi2(p.r);
  const int n = static_cast<int>(c.size());
  for (int i = 0; i < n; ++i) {
    std::vector<Vec3> d;
    for (const auto& p : pairs) {
      if (p.i == i) d.push_back(c.positions.col(p.j) + c.cell.shift(p.image) - c.positions.col(i));
    }
    for (std::size_t j = 0; j < d.size(); ++j) {
      for (std::size_t k = j + 1; k < d.size(); ++k) {
        const double cs = d[j].dot(d[k]) / (d[j].norm() * d[k].norm());
        e += lambda * eps * (cs + 1.0 / 3.0) * (cs + 1.0 / 3.0) * h(d[j].norm()) * h(d[k].norm());
      }
    }
  }
  return e;
}

}  // namespace

TEST_CASE("built-in constants") {
  const auto si = default_parameters(Species::from_symbol("Si"));
  CHECK(si.epsilon == 2.1683);
  CHECK(si.sigma == 2.0951);
  CHECK(si.lambda == 21.0);
  CHECK(si.cutoff() == doctest::Approx(3.77118));
  const auto ge = default_parameters(Species::from_symbol("Ge"));
  CHECK(ge.epsilon == 1.93);
  CHECK(ge.sigma == 2.181);
  CHECK(ge.lambda == 31.0);
  CHECK_THROWS_AS(default_parameters(Species::from_symbol("C")), Error);
}

TEST_CASE("pair term against the written-out formula") {
  const auto p = default_parameters(Species::from_symbol("Si"));
  for (double r : {2.0, 2.35, 2.8, 3.5, 3.77}) {
    const double want =
        7.049556277 * 2.1683 * (0.6022245584 * std::pow(2.0951 / r, 4) - 1.0) *
        std::exp(2.0951 / (r - 1.8 * 2.0951));
    CHECK(sw_phi2(p, r) == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK(sw_phi2(p, p.cutoff()) == 0.0);
  CHECK(sw_phi2(p, p.cutoff() + 1.0) == 0.0);
}

TEST_CASE("energy matches the brute-force triplet sum") {
  for (const char* el : {"Si", "Ge"}) {
    const auto p = default_parameters(Species::from_symbol(el));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Configuration c = jittered_diamond(el, nominal_lattice_constant(el), 1, 0.15, seed);
      const double got = evaluate(SWPotential(p), c).energy;
      const double want =
          brute_sw_energy(c, p.epsilon, p.sigma, p.a, p.lambda, p.gamma, p.A, p.B);
      CHECK(got == doctest::Approx(want).epsilon(1e-11));
    }
  }
}

TEST_CASE("diamond silicon cohesive energy") {
  const auto p = default_parameters(Species::from_symbol("Si"));
  const Configuration c = diamond_lattice("Si", 5.431, 2);
  // Two-body only at the ideal tetrahedral angle.
  CHECK(evaluate(SWPotential(p), c).energy / 64 == doctest::Approx(-4.3366).epsilon(2e-4));
}

TEST_CASE("three-body term vanishes on the ideal diamond lattice") {
  for (const char* el : {"Si", "Ge"}) {
    auto p = default_parameters(Species::from_symbol(el));
    const Configuration c = diamond_lattice(el, nominal_lattice_constant(el), 2);
    const double full = evaluate(SWPotential(p), c).energy;
    p.lambda = 0.0;
    const double two_body = evaluate(SWPotential(p), c).energy;
    CHECK(std::abs(full - two_body) < 1e-12);
  }
}

TEST_CASE("forces are the negative energy gradient") {
  const auto p = default_parameters(Species::from_symbol("Si"));
  const SWPotential sw(p);
  const double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Configuration c = jittered_diamond("Si", 5.431, 1, 0.2, 100 + seed);
    const Forces f = evaluate(sw, c).forces;
    Forces fd(3, c.size());
    for (Eigen::Index i = 0; i < c.positions.cols(); ++i) {
      for (int d = 0; d < 3; ++d) {
        Configuration a = c, b = c;
        a.positions(d, i) += h;
        b.positions(d, i) -= h;
        fd(d, i) = -(evaluate(sw, a).energy - evaluate(sw, b).energy) / (2 * h);
      }
    }
    CHECK(xfer::test::relative_error(f, fd) < 1e-6);
    CHECK(f.rowwise().sum().norm() < 1e-10);
  }
}

TEST_CASE("virial matches the strain derivative") {
  const auto p = default_parameters(Species::from_symbol("Si"));
  const SWPotential sw(p);
  const Configuration c = jittered_diamond("Si", 5.3, 2, 0.1, 5);
  const Mat3 W = evaluate(sw, c).virial;
  const double h = 1e-6;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      auto strained = [&](double e) {
        Mat3 eps = Mat3::Identity();
        eps(a, b) += e;
        Configuration s = c;
        s.cell = Cell((eps * c.cell.lattice().transpose()).transpose());
        s.positions = eps * c.positions;
        return evaluate(sw, s).energy;
      };
      const double dE = (strained(h) - strained(-h)) / (2 * h);
      CHECK(W(a, b) == doctest::Approx(-dE).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("energy is invariant under rigid motion and relabelling") {
  const SWPotential sw(default_parameters(Species::from_symbol("Ge")));
  Configuration c = jittered_diamond("Ge", 5.658, 1, 0.2, 9);
  const double e0 = evaluate(sw, c).energy;
  Configuration t = c;
  t.positions.colwise() += Vec3(0.7, -1.1, 2.3);
  CHECK(evaluate(sw, t).energy == doctest::Approx(e0).epsilon(1e-12));
  Configuration perm = c;
  for (Eigen::Index k = 0; k < c.positions.cols(); ++k) {
    perm.positions.col(k) = c.positions.col(c.positions.cols() - 1 - k);
  }
  CHECK(evaluate(sw, perm).energy == doctest::Approx(e0).epsilon(1e-12));
  // Rotating both cell and atoms.
  const Mat3 R = Eigen::AngleAxisd(0.4, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  Configuration rot = c;
  rot.cell = Cell((R * c.cell.lattice().transpose()).transpose());
  rot.positions = R * c.positions;
  CHECK(evaluate(sw, rot).energy == doctest::Approx(e0).epsilon(1e-12));
}

TEST_CASE("parameter file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "xfer_sw_params.txt";
  std::map<std::string, SWParameters> params{
      {"Si", default_parameters(Species::from_symbol("Si"))},
      {"Ge", default_parameters(Species::from_symbol("Ge"))}};
  params["Ge"].lambda = 29.5;
  write_sw_parameter_file(path, params);
  const auto back = read_sw_parameter_file(path);
  REQUIRE(back.size() == 2);
  CHECK(back.at("Ge").lambda == 29.5);
  CHECK(back.at("Si").sigma == params["Si"].sigma);
  CHECK(back.at("Si").source == path.string());
  std::filesystem::remove(path);
}
