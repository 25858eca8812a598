#pragma once

#include "xfer/potential.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <string>

namespace xfer {

struct SWParameters {
  std::string element;
  double epsilon = 0.0;  // eV
  double sigma = 0.0;    // Å
  double a = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;
  double A = 0.0;
  double B = 0.0;
  double p = 4.0;
  double q = 0.0;
  double cos_theta0 = -1.0 / 3.0;
  // "builtin" or the parameter file the constants were read from.
  std::string source = "builtin";

  double cutoff() const { return a * sigma; }
  void validate() const;
};

// Built-in constants for Si and Ge. Throws for other elements.
SWParameters default_parameters(const Species& element);

// Flat key-value blocks, each starting with `element = <symbol>`.
std::map<std::string, SWParameters> read_sw_parameter_file(const std::filesystem::path& path);
void write_sw_parameter_file(const std::filesystem::path& path,
                             const std::map<std::string, SWParameters>& params);

// Two-body term; zero at and beyond r = a sigma.
template <typename Scalar>
Scalar sw_phi2(const SWParameters& prm, Scalar r) {
  const Scalar rc = prm.a * prm.sigma;
  if (r >= rc) return Scalar(0);
  const Scalar sr = prm.sigma / r;
  return prm.A * prm.epsilon * (prm.B * std::pow(sr, prm.p) - std::pow(sr, prm.q)) *
         std::exp(prm.sigma / (r - rc));
}

// Three-body term centred on the atom at the shared vertex.
template <typename Scalar>
Scalar sw_phi3(const SWParameters& prm, Scalar r_ij, Scalar r_ik, Scalar cos_jik) {
  const Scalar rc = prm.a * prm.sigma;
  if (r_ij >= rc || r_ik >= rc) return Scalar(0);
  const Scalar dc = cos_jik - prm.cos_theta0;
  return prm.lambda * prm.epsilon * dc * dc * std::exp(prm.gamma * prm.sigma / (r_ij - rc)) *
         std::exp(prm.gamma * prm.sigma / (r_ik - rc));
}

double sw_energy(const Configuration& config, const SWParameters& params,
                 const NeighborList& neighbors);
Forces sw_forces(const Configuration& config, const SWParameters& params,
                 const NeighborList& neighbors);

class SWPotential final : public Potential {
 public:
  explicit SWPotential(SWParameters params);
  double cutoff() const override { return params_.cutoff(); }
  Evaluation evaluate(const Configuration& config, const NeighborList& neighbors) const override;
  std::string name() const override { return "sw:" + params_.element; }
  const SWParameters& parameters() const { return params_; }

 private:
  SWParameters params_;
};

}  // namespace xfer
