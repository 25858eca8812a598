#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>
#include <tuple>

using namespace xfer;
using xfer::test::brute_neighbors;
using xfer::test::random_configuration;

TEST_CASE("species table") {
  CHECK(Species::from_symbol("Si").mass == doctest::Approx(28.0855));
  CHECK(Species::from_symbol("Ge").mass == doctest::Approx(72.63).epsilon(1e-3));
  CHECK_THROWS_AS(Species::from_symbol("Xx"), Error);
}

TEST_CASE("fractional round trip and heights") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Configuration c = random_configuration(2, 8.0, seed, 0.3, 0.1);
    const Vec3 r(1.3, -2.2, 4.9);
    CHECK((c.cell.to_cartesian(c.cell.to_fractional(r)) - r).norm() < 1e-12);
    // Height along direction k: volume over the area of the opposite face.
    const Mat3& L = c.cell.lattice();
    for (int k = 0; k < 3; ++k) {
      const Vec3 a = L.row((k + 1) % 3), b = L.row((k + 2) % 3);
      CHECK(c.cell.heights()[k] == doctest::Approx(std::abs(L.determinant()) / a.cross(b).norm()));
    }
  }
  CHECK(Cell::cubic(5.0).volume() == doctest::Approx(125.0));
}

TEST_CASE("minimum image equals the shortest of all nearby images") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Configuration c = random_configuration(2, 6.0 + seed % 5, seed, 0.3, 0.1);
    const Vec3 a = c.positions.col(0), b = c.positions.col(1);
    double best = 1e300;
    for (int i = -3; i <= 3; ++i) {
      for (int j = -3; j <= 3; ++j) {
        for (int k = -3; k <= 3; ++k) {
          best = std::min(best, (b + c.cell.shift({i, j, k}) - a).norm());
        }
      }
    }
    CHECK(minimum_image_displacement(c.cell, a, b).norm() == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("configuration validation") {
  Configuration c = diamond_lattice("Si", 5.431, 1);
  CHECK_NOTHROW(c.validate());
  Configuration bad = c;
  bad.species.pop_back();
  CHECK_THROWS_AS(bad.validate(), GeometryError);
  bad = c;
  bad.positions(0, 0) = std::nan("");
  CHECK_THROWS_AS(bad.validate(), GeometryError);
  bad = c;
  bad.forces = Forces::Zero(3, 3);
  CHECK_THROWS_AS(bad.validate(), GeometryError);
  CHECK_THROWS_AS(Configuration{}.validate(), GeometryError);
}

TEST_CASE("diamond lattice geometry") {
  const double a = 5.431;
  const Configuration c = diamond_lattice("Si", a, 2);
  CHECK(c.size() == 64);
  const NeighborList nl = build_neighbor_list(c, 0.5 * (a * std::sqrt(3.0) / 4 + a / std::sqrt(2.0)));
  for (int i = 0; i < 64; ++i) {
    CHECK(nl.of(i).size() == 4);
    for (const auto& p : nl.of(i)) CHECK(p.r == doctest::Approx(a * std::sqrt(3.0) / 4));
  }
  CHECK(relabeled(c, "Ge").species.front() == "Ge");
}

namespace {

using Key = std::tuple<int, int, int, int, int>;

std::vector<std::pair<Key, double>> keyed(const NeighborList& nl) {
  std::vector<std::pair<Key, double>> out;
  for (const auto& p : nl.pairs()) out.push_back({{p.i, p.j, p.image[0], p.image[1], p.image[2]}, p.r});
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::pair<Key, double>> keyed(const std::vector<xfer::test::BrutePair>& v) {
  std::vector<std::pair<Key, double>> out;
  for (const auto& p : v) out.push_back({{p.i, p.j, p.image[0], p.image[1], p.image[2]}, p.r});
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("neighbor list matches brute force enumeration") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Configuration c = random_configuration(12, 7.0, seed, 0.25, 1.2);
    // Include cutoffs beyond half the cell height, where images repeat.
    for (double cutoff : {2.5, 3.4, 5.0}) {
      const NeighborList nl = build_neighbor_list(c, cutoff);
      const auto got = keyed(nl);
      const auto want = keyed(brute_neighbors(c, cutoff, 3));
      REQUIRE(got.size() == want.size());
      for (std::size_t k = 0; k < got.size(); ++k) {
        CHECK(got[k].first == want[k].first);
        CHECK(got[k].second == doctest::Approx(want[k].second).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("neighbor list is symmetric, sorted and indexed") {
  const Configuration c = random_configuration(16, 8.0, 7);
  const NeighborList nl = build_neighbor_list(c, 4.0);
  std::set<Key> keys;
  for (const auto& p : nl.pairs()) keys.insert({p.i, p.j, p.image[0], p.image[1], p.image[2]});
  for (const auto& p : nl.pairs()) {
    CHECK(keys.count({p.j, p.i, -p.image[0], -p.image[1], -p.image[2]}) == 1);
    CHECK((p.d - (c.positions.col(p.j) + c.cell.shift(p.image) - c.positions.col(p.i))).norm() < 1e-12);
  }
  for (int i = 0; i < nl.atom_count(); ++i) {
    for (const auto& p : nl.of(i)) CHECK(p.i == i);
  }
  CHECK(std::is_sorted(nl.pairs().begin(), nl.pairs().end(), [](const auto& a, const auto& b) {
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  }));
}

TEST_CASE("replicated cutoffs can be refused") {
  const Configuration c = diamond_lattice("Si", 5.431, 1);
  CHECK_THROWS_AS(build_neighbor_list(c, 3.0, NeighborOptions{false}), Error);
  CHECK_NOTHROW(build_neighbor_list(c, 3.0, NeighborOptions{true}));
}

TEST_CASE("neighbor cache agrees with fresh lists") {
  Configuration c = xfer::test::jittered_diamond("Si", 5.431, 2, 0.05, 3);
  NeighborCache cache(3.77, 0.5);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> step(0.0, 0.03);
  for (int it = 0; it < 40; ++it) {
    for (Eigen::Index k = 0; k < c.positions.cols(); ++k) {
      for (int d = 0; d < 3; ++d) c.positions(d, k) += step(rng);
    }
    const auto cached = keyed(cache.update(c));
    const auto fresh = keyed(build_neighbor_list(c, 3.77));
    REQUIRE(cached.size() == fresh.size());
    for (std::size_t k = 0; k < fresh.size(); ++k) {
      CHECK(cached[k].first == fresh[k].first);
      CHECK(cached[k].second == doctest::Approx(fresh[k].second).epsilon(1e-12));
    }
  }
  CHECK(cache.rebuild_count() >= 1);
  CHECK(cache.rebuild_count() < 40);
}
