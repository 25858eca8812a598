#pragma once

// Shared generators and toy potentials for the test suites.

#include "xfer/md.hpp"
#include "xfer/neighbor.hpp"
#include "xfer/sw.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace xfer::test {

inline Configuration jittered_diamond(const std::string& el, double a, int reps, double sigma,
                                      std::uint64_t seed) {
  Configuration c = diamond_lattice(el, a, reps);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (Eigen::Index k = 0; k < c.positions.cols(); ++k) {
    for (int d = 0; d < 3; ++d) c.positions(d, k) += n(rng);
  }
  return c;
}

// Random triclinic cell with atoms kept at least `min_sep` apart.
inline Configuration random_configuration(int n_atoms, double edge, std::uint64_t seed,
                                          double skew = 0.2, double min_sep = 1.6,
                                          const std::string& el = "Si") {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0), s(-skew, skew);
  Mat3 lat = Mat3::Identity() * edge;
  lat(1, 0) = s(rng) * edge;
  lat(2, 0) = s(rng) * edge;
  lat(2, 1) = s(rng) * edge;
  Configuration c;
  c.cell = Cell(lat);
  c.positions.resize(3, 0);
  for (int tries = 0; static_cast<int>(c.species.size()) < n_atoms && tries < 100000; ++tries) {
    const Vec3 r = c.cell.to_cartesian(Vec3(u(rng), u(rng), u(rng)));
    bool ok = true;
    for (Eigen::Index k = 0; k < c.positions.cols() && ok; ++k) {
      ok = minimum_image_displacement(c.cell, c.positions.col(k), r).norm() >= min_sep;
    }
    if (!ok) continue;
    c.positions.conservativeResize(3, c.positions.cols() + 1);
    c.positions.col(c.positions.cols() - 1) = r;
    c.species.push_back(el);
  }
  return c;
}

// Brute-force neighbour enumeration over an explicit image range.
struct BrutePair {
  int i, j;
  Eigen::Vector3i image;
  double r;
};

inline std::vector<BrutePair> brute_neighbors(const Configuration& c, double cutoff, int range) {
  std::vector<BrutePair> out;
  const int n = static_cast<int>(c.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int a = -range; a <= range; ++a) {
        for (int b = -range; b <= range; ++b) {
          for (int g = -range; g <= range; ++g) {
            const Eigen::Vector3i img(a, b, g);
            if (i == j && img.isZero()) continue;
            const Vec3 d = c.positions.col(j) + c.cell.shift(img) - c.positions.col(i);
            if (d.norm() < cutoff) out.push_back({i, j, img, d.norm()});
          }
        }
      }
    }
  }
  return out;
}

// Harmonic springs E = k/2 (r - r0)^2 between all pairs within the cutoff.
class SpringPotential final : public Potential {
 public:
  SpringPotential(double k, double r0, double cutoff) : k_(k), r0_(r0), cutoff_(cutoff) {}
  double cutoff() const override { return cutoff_; }
  std::string name() const override { return "spring"; }
  Evaluation evaluate(const Configuration& config, const NeighborList& nl) const override {
    Evaluation ev;
    ev.forces = Forces::Zero(3, config.size());
    for (const auto& p : nl.pairs()) {
      if (p.r >= cutoff_) continue;
      ev.energy += 0.25 * k_ * (p.r - r0_) * (p.r - r0_);  // each pair appears twice
      const Vec3 g = 0.5 * k_ * (p.r - r0_) * p.d / p.r;
      scatter_pair_gradient(p, g, ev.forces, ev.virial);
    }
    return ev;
  }

 private:
  double k_, r0_, cutoff_;
};

// Every atom tethered to a fixed site: E = k/2 sum |r_i - site_i|^2.
class EinsteinPotential final : public Potential {
 public:
  EinsteinPotential(Positions sites, double k) : sites_(std::move(sites)), k_(k) {}
  double cutoff() const override { return 2.5; }
  std::string name() const override { return "einstein"; }
  Evaluation evaluate(const Configuration& config, const NeighborList&) const override {
    Evaluation ev;
    ev.forces = Forces::Zero(3, config.size());
    for (Eigen::Index i = 0; i < config.positions.cols(); ++i) {
      const Vec3 d = minimum_image_displacement(config.cell, sites_.col(i), config.positions.col(i));
      ev.energy += 0.5 * k_ * d.squaredNorm();
      ev.forces.col(i) = -k_ * d;
    }
    return ev;
  }

 private:
  Positions sites_;
  double k_;
};

// Constant enormous push on every atom: blows up any trajectory.
class RunawayPotential final : public Potential {
 public:
  double cutoff() const override { return 2.5; }
  std::string name() const override { return "runaway"; }
  Evaluation evaluate(const Configuration& config, const NeighborList&) const override {
    Evaluation ev;
    ev.forces = Forces::Zero(3, config.size());
    for (Eigen::Index i = 0; i < config.positions.cols(); ++i) {
      ev.forces(0, i) = (i % 2 == 0 ? 1.0 : -1.0) * 1e6;
    }
    return ev;
  }
};

// Tethers disjoint nearest-neighbour pairs to sites 1.8 Å apart; the swing
// bottoms out near 1.15 Å, well short of a numerical blow-up.
inline EinsteinPotential collapsing_potential(const Configuration& c) {
  Positions sites = c.positions;
  const NeighborList nl = build_neighbor_list(c, 2.6);
  std::vector<bool> used(c.size(), false);
  for (int i = 0; i < static_cast<int>(c.size()); ++i) {
    if (used[i]) continue;
    for (const auto& p : nl.of(i)) {
      if (used[p.j] || p.j == i) continue;
      used[i] = used[p.j] = true;
      sites.col(p.j) = c.positions.col(i) + 1.8 * p.d / p.r;
      break;
    }
  }
  return EinsteinPotential(sites, 2.0);
}

inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace xfer::test
