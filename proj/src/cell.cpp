#include "xfer/core.hpp"

#include <cmath>
#include <limits>

namespace xfer {

Species Species::from_symbol(std::string_view symbol) {
  if (symbol == "Si") return {"Si", 28.0855};
  if (symbol == "Ge") return {"Ge", 72.63};
  if (symbol == "C") return {"C", 12.011};
  if (symbol == "Sn") return {"Sn", 118.71};
  throw Error("unsupported element '" + std::string(symbol) + "'");
}

Cell::Cell(const Mat3& lattice, std::array<bool, 3> periodic)
    : lattice_(lattice), periodic_(periodic) {
  const double det = lattice_.determinant();
  if (!(det > 0.0) || !std::isfinite(det)) {
    throw GeometryError("cell lattice must be right-handed and non-degenerate (det = " +
                        std::to_string(det) + ")");
  }
  inverse_ = lattice_.inverse();
}

Cell Cell::cubic(double edge) { return Cell(Mat3::Identity() * edge); }

Vec3 Cell::heights() const {
  const Vec3 a = lattice_.row(0), b = lattice_.row(1), c = lattice_.row(2);
  const double v = volume();
  Vec3 h(v / b.cross(c).norm(), v / c.cross(a).norm(), v / a.cross(b).norm());
  for (int k = 0; k < 3; ++k) {
    if (!periodic_[k]) h[k] = std::numeric_limits<double>::infinity();
  }
  return h;
}

Vec3 minimum_image_displacement(const Cell& cell, const Vec3& r_a, const Vec3& r_b) {
  const Vec3 d = r_b - r_a;
  Vec3 s = cell.to_fractional(d);
  for (int k = 0; k < 3; ++k) {
    if (cell.periodic()[k]) s[k] -= std::round(s[k]);
  }
  const Vec3 base = cell.to_cartesian(s);
  const Mat3& lat = cell.lattice();
  if (lat.isDiagonal()) return base;

  // Rounding is not always the shortest image in skewed cells; check the
  // neighbouring images of the rounded one.
  Vec3 best = base;
  double best_sq = base.squaredNorm();
  const int rx = cell.periodic()[0] ? 1 : 0;
  const int ry = cell.periodic()[1] ? 1 : 0;
  const int rz = cell.periodic()[2] ? 1 : 0;
  for (int i = -rx; i <= rx; ++i) {
    for (int j = -ry; j <= ry; ++j) {
      for (int k = -rz; k <= rz; ++k) {
        if (i == 0 && j == 0 && k == 0) continue;
        const Vec3 cand = base + cell.shift(Eigen::Vector3i(i, j, k));
        const double sq = cand.squaredNorm();
        if (sq < best_sq) {
          best_sq = sq;
          best = cand;
        }
      }
    }
  }
  return best;
}

void Configuration::validate() const {
  const auto n = species.size();
  if (n == 0) throw GeometryError("configuration has no atoms");
  if (static_cast<std::size_t>(positions.cols()) != n) {
    throw GeometryError("positions count does not match species count");
  }
  if (!positions.allFinite()) throw GeometryError("non-finite position");
  if (forces) {
    if (static_cast<std::size_t>(forces->cols()) != n) {
      throw GeometryError("forces count does not match species count");
    }
    if (!forces->allFinite()) throw GeometryError("non-finite reference force");
  }
  if (energy && !std::isfinite(*energy)) throw GeometryError("non-finite reference energy");
}

std::vector<double> Configuration::masses() const {
  std::vector<double> m;
  m.reserve(species.size());
  std::string last;
  double last_mass = 0.0;
  for (const auto& s : species) {
    if (s != last) {
      last = s;
      last_mass = Species::from_symbol(s).mass;
    }
    m.push_back(last_mass);
  }
  return m;
}

Configuration diamond_lattice(const std::string& symbol, double lattice_constant, int reps) {
  static const double basis[8][3] = {{0.0, 0.0, 0.0},    {0.0, 0.5, 0.5},   {0.5, 0.0, 0.5},
                                     {0.5, 0.5, 0.0},    {0.25, 0.25, 0.25}, {0.25, 0.75, 0.75},
                                     {0.75, 0.25, 0.75}, {0.75, 0.75, 0.25}};
  Configuration c;
  c.cell = Cell::cubic(lattice_constant * reps);
  const int n = 8 * reps * reps * reps;
  c.positions.resize(3, n);
  c.species.assign(n, symbol);
  int idx = 0;
  for (int x = 0; x < reps; ++x) {
    for (int y = 0; y < reps; ++y) {
      for (int z = 0; z < reps; ++z) {
        for (const auto& b : basis) {
          c.positions.col(idx++) = lattice_constant * Vec3(x + b[0], y + b[1], z + b[2]);
        }
      }
    }
  }
  c.kind = "bulk";
  return c;
}

Configuration relabeled(Configuration config, const std::string& symbol) {
  for (auto& s : config.species) s = symbol;
  return config;
}

}  // namespace xfer
