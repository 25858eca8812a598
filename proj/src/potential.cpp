#include "xfer/potential.hpp"

namespace xfer {

Evaluation evaluate(const Potential& potential, const Configuration& config) {
  const NeighborList nl = build_neighbor_list(config, potential.cutoff());
  return potential.evaluate(config, nl);
}

}  // namespace xfer
