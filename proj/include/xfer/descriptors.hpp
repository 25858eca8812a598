#pragma once

#include "xfer/neighbor.hpp"

#include <array>
#include <vector>

namespace xfer {

// Smooth envelope on [0, cutoff]: 1 - 10x^3 + 15x^4 - 6x^5 with x = r / cutoff.
// Value, slope and curvature vanish at the cutoff.
template <typename Scalar>
Scalar cutoff_envelope(Scalar r, Scalar cutoff) {
  if (r >= cutoff) return Scalar(0);
  const Scalar x = r / cutoff;
  const Scalar x3 = x * x * x;
  return Scalar(1) + x3 * (Scalar(-10) + x * (Scalar(15) - Scalar(6) * x));
}

template <typename Scalar>
Scalar cutoff_envelope_derivative(Scalar r, Scalar cutoff) {
  if (r >= cutoff) return Scalar(0);
  const Scalar x = r / cutoff;
  const Scalar x2 = x * x;
  return x2 * (Scalar(-30) + x * (Scalar(60) - Scalar(30) * x)) / cutoff;
}

// Atom-centred descriptors. For atom i with neighbours j at distance r_j:
//   radial:   G_m          = sum_j R_m(r_j)
//   angular:  G_{l,(a,b)}  = sum_{j != k} T_l(cos theta_jik) A_a(r_j) A_b(r_k) / 2,  a <= b
// R_m and A_a are Gaussians times the cutoff envelope (two separate sets),
// T_l Chebyshev polynomials of order 0 .. n_angular-1. The angular sums are
// evaluated through Cartesian moment tensors of the neighbour directions,
// which costs O(neighbours).
//
// Layout: [radial m][angular: (l, pair) at n_radial + l * n_pairs + pair],
// pairs (a, b) with a <= b in row-major order.
class DescriptorBasis {
 public:
  // Per-atom neighbour expansions, shared between compute and pair_gradients.
  struct Moments {
    Eigen::MatrixXd R, dR;       // n_radial x neighbours
    Eigen::MatrixXd A, dA;       // n_angular_radial x neighbours
    Eigen::MatrixXd mono;        // monomials x neighbours
    Eigen::MatrixXd gx, gy, gz;  // monomial gradients
    Eigen::VectorXd r;           // neighbour distances
    Eigen::Matrix3Xd u;          // unit directions
    Eigen::MatrixXd S;           // n_angular_radial x monomials
    Eigen::MatrixXd Q;           // sum_j A_a A_b
  };
  using Workspace = std::vector<Moments>;

  DescriptorBasis(double cutoff, int n_radial, int n_angular, int n_angular_radial);

  int size() const { return n_radial_ + n_angular_ * n_pairs(); }
  int n_radial() const { return n_radial_; }
  int n_angular() const { return n_angular_; }
  int n_angular_radial() const { return n_ar_; }
  int n_pairs() const { return n_ar_ * (n_ar_ + 1) / 2; }
  double cutoff() const { return cutoff_; }

  // Radial functions and their r-derivatives at r.
  void radial(double r, double* value, double* derivative) const;
  void angular_radial(double r, double* value, double* derivative) const;
  // Coefficient of c^p in T_l(c).
  double chebyshev(int l, int p) const { return cheb_[l][p]; }
  // Index of pair (a, b), a <= b.
  int pair_index(int a, int b) const { return pair_index_[a * n_ar_ + b]; }

  // Raw descriptors, one column per atom. A workspace, when given, keeps the
  // expansions for a following pair_gradients call on the same list.
  Eigen::MatrixXd compute(const NeighborList& nl, int n_atoms, Workspace* ws = nullptr) const;

  // Given per-atom adjoints G = dE/dD (size() x N), returns dE/dd for every
  // neighbour pair displacement, one column per pair of nl.pairs().
  Matrix3X<double> pair_gradients(const NeighborList& nl, const Eigen::MatrixXd& adjoint,
                                  const Workspace* ws = nullptr) const;

  // Jacobian blocks: columns 3p..3p+2 hold dD_i / dd_p for pair p (centre i).
  Eigen::MatrixXd jacobian(const NeighborList& nl, int n_atoms) const;

 private:
  void accumulate_moments(const NeighborList& nl, int i, Moments& mom) const;
  void evaluate_monomials(const Vec3& u, double* value, double* gx, double* gy, double* gz) const;
  static void gaussians(double r, double cutoff, const std::vector<double>& centers, double eta,
                        double* value, double* derivative);

  double cutoff_;
  int n_radial_;
  int n_angular_;
  int n_ar_;
  std::vector<double> centers_, ar_centers_;
  double eta_, ar_eta_;
  std::vector<int> pair_index_;
  std::vector<std::array<int, 2>> pairs_;
  // Monomials x^a y^b z^c of total degree < n_angular.
  std::vector<std::array<int, 3>> exponents_;
  std::vector<int> degree_;
  std::vector<double> multinomial_;
  std::vector<std::vector<double>> cheb_;
};

}  // namespace xfer
