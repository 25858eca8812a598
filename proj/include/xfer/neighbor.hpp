#pragma once

#include "xfer/core.hpp"

#include <span>
#include <vector>

namespace xfer {

struct NeighborPair {
  int i = 0;
  int j = 0;
  Vec3 d = Vec3::Zero();  // r_j + image shift - r_i, Å
  double r = 0.0;         // |d|, Å
  Eigen::Vector3i image = Eigen::Vector3i::Zero();
};

// Full (both directions) neighbor list sorted by (i, j, image).
class NeighborList {
 public:
  NeighborList() = default;
  NeighborList(double cutoff, int n_atoms, std::vector<NeighborPair> pairs);

  double cutoff() const { return cutoff_; }
  int atom_count() const { return static_cast<int>(offsets_.size()) - 1; }
  const std::vector<NeighborPair>& pairs() const { return pairs_; }
  std::span<const NeighborPair> of(int i) const {
    return {pairs_.data() + offsets_[i], pairs_.data() + offsets_[i + 1]};
  }
  // Index of the first pair of atom i within pairs().
  int offset(int i) const { return offsets_[i]; }
  double min_distance() const;

 private:
  double cutoff_ = 0.0;
  std::vector<NeighborPair> pairs_;
  std::vector<int> offsets_{0};
};

struct NeighborOptions {
  // Enumerate all periodic images when the cutoff exceeds half the smallest
  // cell height. When false such cutoffs are rejected.
  bool allow_replicated = true;
};

NeighborList build_neighbor_list(const Configuration& config, double cutoff,
                                 NeighborOptions options = {});

// Verlet-style cache: a list built with cutoff + skin is reused until some atom
// has moved more than skin / 2 or the cell changed.
class NeighborCache {
 public:
  NeighborCache(double cutoff, double skin) : cutoff_(cutoff), skin_(skin) {}
  const NeighborList& update(const Configuration& config);
  int rebuild_count() const { return rebuilds_; }

 private:
  double cutoff_;
  double skin_;
  NeighborList wide_;
  NeighborList current_;
  Positions reference_;
  Cell reference_cell_;
  int rebuilds_ = 0;
};

}  // namespace xfer
