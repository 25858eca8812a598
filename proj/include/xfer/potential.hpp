#pragma once

#include "xfer/core.hpp"
#include "xfer/neighbor.hpp"

#include <string>

namespace xfer {

// Thrown when two atoms are closer than a potential can handle.
class OverlapError : public Error {
 public:
  using Error::Error;
};

struct Evaluation {
  double energy = 0.0;  // eV
  Forces forces;        // eV/Å
  // W = sum over neighbor displacements of d (x) f_d, with f_d = -dE/dd.
  // Pressure = (2 KE + trace W) / (3 V).
  Mat3 virial = Mat3::Zero();
};

// Energy/force provider. Implementations are immutable after construction and
// may be shared read-only between threads.
class Potential {
 public:
  virtual ~Potential() = default;
  virtual double cutoff() const = 0;
  virtual Evaluation evaluate(const Configuration& config, const NeighborList& neighbors) const = 0;
  virtual std::string name() const = 0;
};

// Builds the neighbor list with the potential's cutoff and evaluates.
Evaluation evaluate(const Potential& potential, const Configuration& config);

// Accumulates a gradient dE/dd for pair p into forces and virial.
inline void scatter_pair_gradient(const NeighborPair& p, const Vec3& dE_dd, Forces& forces,
                                  Mat3& virial) {
  forces.col(p.i) += dE_dd;
  forces.col(p.j) -= dE_dd;
  virial -= p.d * dE_dd.transpose();
}

}  // namespace xfer
