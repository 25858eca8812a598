#include "support.hpp"

#include "xfer/descriptors.hpp"

#include <doctest.h>

#include <set>

using namespace xfer;
using xfer::test::jittered_diamond;
using xfer::test::random_configuration;

namespace {

const DescriptorBasis& basis() {
  static const DescriptorBasis b(5.0, 8, 6, 4);
  return b;
}

double chebyshev_t(int l, double c) {
  double t0 = 1.0, t1 = c;
  if (l == 0) return t0;
  for (int k = 1; k < l; ++k) {
    const double t2 = 2.0 * c * t1 - t0;
    t0 = t1;
    t1 = t2;
  }
  return t1;
}

// Direct triple loop over neighbours.
Eigen::MatrixXd brute_descriptors(const DescriptorBasis& b, const NeighborList& nl, int n) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(b.size(), n);
  std::vector<double> rv(b.n_radial()), rd(b.n_radial());
  std::vector<double> av(b.n_angular_radial()), ad(b.n_angular_radial());
  std::vector<double> aw(b.n_angular_radial());
  for (int i = 0; i < n; ++i) {
    const auto nb = nl.of(i);
    for (const auto& p : nb) {
      b.radial(p.r, rv.data(), rd.data());
      for (int m = 0; m < b.n_radial(); ++m) D(m, i) += rv[m];
    }
    for (std::size_t j = 0; j < nb.size(); ++j) {
      for (std::size_t k = 0; k < nb.size(); ++k) {
        if (j == k) continue;
        const double c = nb[j].d.dot(nb[k].d) / (nb[j].r * nb[k].r);
        b.angular_radial(nb[j].r, av.data(), ad.data());
        b.angular_radial(nb[k].r, aw.data(), ad.data());
        for (int l = 0; l < b.n_angular(); ++l) {
          for (int a = 0; a < b.n_angular_radial(); ++a) {
            for (int bb = a; bb < b.n_angular_radial(); ++bb) {
              D(b.n_radial() + l * b.n_pairs() + b.pair_index(a, bb), i) +=
                  0.5 * chebyshev_t(l, c) * av[a] * aw[bb];
            }
          }
        }
      }
    }
  }
  return D;
}

Forces forces_from(const DescriptorBasis& b, const NeighborList& nl, const Eigen::MatrixXd& adj,
                   int n) {
  const Matrix3X<double> g = b.pair_gradients(nl, adj);
  Forces f = Forces::Zero(3, n);
  Mat3 w = Mat3::Zero();
  for (std::size_t p = 0; p < nl.pairs().size(); ++p) scatter_pair_gradient(nl.pairs()[p], g.col(p), f, w);
  return f;
}

}  // namespace

TEST_CASE("layout and size") {
  CHECK(basis().size() == 8 + 6 * 10);
  CHECK(basis().n_pairs() == 10);
  std::set<int> idx;
  for (int a = 0; a < 4; ++a) {
    for (int b = a; b < 4; ++b) idx.insert(basis().pair_index(a, b));
  }
  CHECK(idx.size() == 10);
  CHECK(*idx.begin() == 0);
  CHECK(*idx.rbegin() == 9);
}

TEST_CASE("Chebyshev coefficients reproduce cos(l theta)") {
  for (int l = 0; l < 6; ++l) {
    for (double th = 0.0; th <= M_PI; th += 0.13) {
      double v = 0.0;
      for (int p = 0; p <= l; ++p) v += basis().chebyshev(l, p) * std::pow(std::cos(th), p);
      CHECK(v == doctest::Approx(std::cos(l * th)).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("envelope is smooth at the cutoff") {
  const double rc = 5.0;
  CHECK(cutoff_envelope(0.0, rc) == 1.0);
  CHECK(std::abs(cutoff_envelope(rc - 1e-3, rc)) < 1e-9);
  CHECK(std::abs(cutoff_envelope_derivative(rc - 1e-3, rc)) < 1e-6);
  CHECK(cutoff_envelope(rc, rc) == 0.0);
  for (double r = 0.1; r < rc; r += 0.37) {
    const double h = 1e-6;
    const double fd = (cutoff_envelope(r + h, rc) - cutoff_envelope(r - h, rc)) / (2 * h);
    CHECK(cutoff_envelope_derivative(r, rc) == doctest::Approx(fd).epsilon(1e-7).scale(1.0));
  }
}

TEST_CASE("radial derivatives match finite differences") {
  std::vector<double> v(8), d(8), vp(8), vm(8), tmp(8);
  std::vector<double> av(4), ad(4), avp(4), avm(4), atmp(4);
  for (double r = 1.5; r < 5.0; r += 0.23) {
    const double h = 1e-6;
    basis().radial(r, v.data(), d.data());
    basis().radial(r + h, vp.data(), tmp.data());
    basis().radial(r - h, vm.data(), tmp.data());
    for (int m = 0; m < 8; ++m) CHECK(d[m] == doctest::Approx((vp[m] - vm[m]) / (2 * h)).epsilon(1e-6).scale(1.0));
    basis().angular_radial(r, av.data(), ad.data());
    basis().angular_radial(r + h, avp.data(), atmp.data());
    basis().angular_radial(r - h, avm.data(), atmp.data());
    for (int m = 0; m < 4; ++m) CHECK(ad[m] == doctest::Approx((avp[m] - avm[m]) / (2 * h)).epsilon(1e-6).scale(1.0));
  }
  basis().radial(5.0, v.data(), d.data());
  for (int m = 0; m < 8; ++m) CHECK(v[m] == 0.0);
}

TEST_CASE("moment-tensor sums equal the explicit triplet loop") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Configuration c = seed % 2 ? random_configuration(14, 8.0, seed, 0.2, 1.8)
                                     : jittered_diamond("Si", 5.431, 1, 0.2, seed);
    const NeighborList nl = build_neighbor_list(c, 5.0);
    const int n = static_cast<int>(c.size());
    const Eigen::MatrixXd got = basis().compute(nl, n);
    const Eigen::MatrixXd want = brute_descriptors(basis(), nl, n);
    CHECK(xfer::test::relative_error(got, want) < 1e-11);
  }
}

TEST_CASE("pair gradients are the exact derivative of adjoint-weighted descriptors") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Configuration c = jittered_diamond("Ge", 5.658, 1, 0.2, 20 + seed);
    const int n = static_cast<int>(c.size());
    Eigen::MatrixXd adj(basis().size(), n);
    for (Eigen::Index k = 0; k < adj.size(); ++k) adj.data()[k] = g(rng);
    auto energy = [&](const Configuration& x) {
      return (basis().compute(build_neighbor_list(x, 5.0), n).array() * adj.array()).sum();
    };
    const NeighborList nl = build_neighbor_list(c, 5.0);
    const Forces f = forces_from(basis(), nl, adj, n);
    Forces fd(3, n);
    const double h = 1e-5;
    for (int a = 0; a < n; ++a) {
      for (int d = 0; d < 3; ++d) {
        Configuration p = c, m = c;
        p.positions(d, a) += h;
        m.positions(d, a) -= h;
        fd(d, a) = -(energy(p) - energy(m)) / (2 * h);
      }
    }
    CHECK(xfer::test::relative_error(f, fd) < 1e-7);
    // Workspace reuse gives identical results.
    DescriptorBasis::Workspace ws;
    const Eigen::MatrixXd D = basis().compute(nl, n, &ws);
    CHECK(D == basis().compute(nl, n));
    CHECK(basis().pair_gradients(nl, adj, &ws) == basis().pair_gradients(nl, adj));
  }
}

TEST_CASE("jacobian agrees with pair gradients") {
  const Configuration c = random_configuration(10, 7.5, 4, 0.2, 1.9);
  const NeighborList nl = build_neighbor_list(c, 5.0);
  const int n = static_cast<int>(c.size());
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd adj(basis().size(), n);
  for (Eigen::Index k = 0; k < adj.size(); ++k) adj.data()[k] = g(rng);
  const Eigen::MatrixXd J = basis().jacobian(nl, n);
  const Matrix3X<double> pg = basis().pair_gradients(nl, adj);
  for (std::size_t p = 0; p < nl.pairs().size(); ++p) {
    const Vec3 want = J.middleCols(3 * p, 3).transpose() * adj.col(nl.pairs()[p].i);
    CHECK((pg.col(p) - want).norm() < 1e-10 * (1.0 + want.norm()));
  }
}

TEST_CASE("descriptors are invariant to rotation, translation and relabelling") {
  const Configuration c = random_configuration(12, 8.0, 17, 0.2, 1.8);
  const int n = static_cast<int>(c.size());
  const Eigen::MatrixXd D = basis().compute(build_neighbor_list(c, 5.0), n);
  const Mat3 R = Eigen::AngleAxisd(1.1, Vec3(-1, 0.5, 2).normalized()).toRotationMatrix();
  Configuration rot = c;
  rot.cell = Cell((R * c.cell.lattice().transpose()).transpose());
  rot.positions = R * c.positions;
  rot.positions.colwise() += Vec3(3.0, -1.0, 0.4);
  CHECK(xfer::test::relative_error(basis().compute(build_neighbor_list(rot, 5.0), n), D) < 1e-12);
  Configuration perm = c;
  for (int k = 0; k < n; ++k) perm.positions.col(k) = c.positions.col(n - 1 - k);
  const Eigen::MatrixXd Dp = basis().compute(build_neighbor_list(perm, 5.0), n);
  for (int k = 0; k < n; ++k) CHECK((Dp.col(k) - D.col(n - 1 - k)).norm() < 1e-11 * D.col(n - 1 - k).norm());
}

TEST_CASE("descriptors vary continuously as a neighbour leaves the cutoff") {
  // Atom 2 sits just inside atom 0's cutoff and out of atom 1's range; its
  // contribution must fade to nothing.
  auto cluster = [](int n, double r) {
    Configuration c;
    c.cell = Cell::cubic(30.0);
    c.species.assign(n, "Si");
    c.positions = Positions::Zero(3, n);
    c.positions.col(0) = Vec3(10, 10, 10);
    c.positions.col(1) = Vec3(7.7, 10, 10);
    if (n == 3) c.positions.col(2) = Vec3(10, 10, 10) + r * Vec3(0.6, 0.8, 0.0);
    return c;
  };
  const Eigen::MatrixXd pair = basis().compute(build_neighbor_list(cluster(2, 0), 5.0), 2);
  const Eigen::MatrixXd near = basis().compute(build_neighbor_list(cluster(3, 5.0 - 1e-4), 5.0), 3);
  CHECK((near.leftCols(2) - pair).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(near.col(2).cwiseAbs().maxCoeff() < 1e-10);
}
