#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace xfer {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix3X = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

using Vec3 = Vector3<double>;
using Mat3 = Matrix3<double>;
// One column per atom.
using Positions = Matrix3X<double>;
using Forces = Matrix3X<double>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

struct Species {
  std::string symbol;
  double mass = 0.0;  // amu

  // Built-in table: Si, Ge, C, Sn. Throws for anything else.
  static Species from_symbol(std::string_view symbol);
};

class Cell {
 public:
  Cell() = default;
  // Rows of `lattice` are the lattice vectors.
  explicit Cell(const Mat3& lattice, std::array<bool, 3> periodic = {true, true, true});

  static Cell cubic(double edge);

  const Mat3& lattice() const { return lattice_; }
  const std::array<bool, 3>& periodic() const { return periodic_; }
  double volume() const { return lattice_.determinant(); }

  // Distance between opposite faces, per lattice direction. Infinite along
  // non-periodic directions.
  Vec3 heights() const;
  double min_height() const { return heights().minCoeff(); }

  Vec3 to_fractional(const Vec3& r) const { return inverse_.transpose() * r; }
  Vec3 to_cartesian(const Vec3& s) const { return lattice_.transpose() * s; }
  // Image shift n (integer fractional offsets) expressed in Å.
  Vec3 shift(const Eigen::Vector3i& n) const { return lattice_.transpose() * n.cast<double>(); }

  Cell scaled(double factor) const { return Cell(lattice_ * factor, periodic_); }

  bool operator==(const Cell& other) const {
    return lattice_ == other.lattice_ && periodic_ == other.periodic_;
  }

 private:
  Mat3 lattice_ = Mat3::Identity();
  Mat3 inverse_ = Mat3::Identity();
  std::array<bool, 3> periodic_{true, true, true};
};

// Shortest periodic image of (r_b - r_a).
Vec3 minimum_image_displacement(const Cell& cell, const Vec3& r_a, const Vec3& r_b);

struct Configuration {
  Cell cell;
  std::vector<std::string> species;
  Positions positions;
  std::optional<double> energy;      // eV, total
  std::optional<Forces> forces;      // eV/Å
  std::optional<double> temperature; // K, provenance tag
  std::string kind;                  // structure kind tag ("bulk", "slab", ...), may be empty
  std::string provenance;            // generator description, may be empty

  std::size_t size() const { return species.size(); }
  bool labeled() const { return forces.has_value(); }

  // Throws GeometryError when the invariants do not hold.
  void validate() const;

  std::vector<double> masses() const;
};

// Conventional 8-atom cubic diamond cell replicated reps^3 times.
Configuration diamond_lattice(const std::string& symbol, double lattice_constant, int reps = 2);

// Returns a copy with every species label replaced.
Configuration relabeled(Configuration config, const std::string& symbol);

}  // namespace xfer
