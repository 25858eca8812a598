#include "xfer/neighbor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace xfer {

NeighborList::NeighborList(double cutoff, int n_atoms, std::vector<NeighborPair> pairs)
    : cutoff_(cutoff), pairs_(std::move(pairs)) {
  offsets_.assign(n_atoms + 1, 0);
  for (const auto& p : pairs_) ++offsets_[p.i + 1];
  for (int i = 0; i < n_atoms; ++i) offsets_[i + 1] += offsets_[i];
}

double NeighborList::min_distance() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& p : pairs_) m = std::min(m, p.r);
  return m;
}

namespace {

bool pair_less(const NeighborPair& a, const NeighborPair& b) {
  return std::tie(a.i, a.j, a.image[0], a.image[1], a.image[2]) <
         std::tie(b.i, b.j, b.image[0], b.image[1], b.image[2]);
}

// Valid when the cutoff is below half of every periodic cell height: at most
// one image of each atom can lie inside the cutoff sphere.
std::vector<NeighborPair> minimum_image_search(const Configuration& config, double cutoff) {
  const Cell& cell = config.cell;
  const int n = static_cast<int>(config.size());
  const double cut_sq = cutoff * cutoff;
  const bool orthorhombic = cell.lattice().isDiagonal();
  std::vector<NeighborPair> out;
  out.reserve(static_cast<std::size_t>(n) * 32);

  for (int i = 0; i < n; ++i) {
    const Vec3 ri = config.positions.col(i);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const Vec3 raw = config.positions.col(j) - ri;
      Vec3 s = cell.to_fractional(raw);
      Eigen::Vector3i image = Eigen::Vector3i::Zero();
      for (int k = 0; k < 3; ++k) {
        if (cell.periodic()[k]) image[k] = -static_cast<int>(std::lround(s[k]));
      }
      Vec3 d = raw + cell.shift(image);
      if (!orthorhombic) {
        double best = d.squaredNorm();
        const Eigen::Vector3i base = image;
        for (int a = -1; a <= 1; ++a) {
          for (int b = -1; b <= 1; ++b) {
            for (int c = -1; c <= 1; ++c) {
              Eigen::Vector3i cand(base[0] + a, base[1] + b, base[2] + c);
              bool ok = true;
              for (int k = 0; k < 3; ++k) {
                if (!cell.periodic()[k] && cand[k] != 0) ok = false;
              }
              if (!ok) continue;
              const Vec3 dc = raw + cell.shift(cand);
              if (dc.squaredNorm() < best) {
                best = dc.squaredNorm();
                d = dc;
                image = cand;
              }
            }
          }
        }
      }
      const double r_sq = d.squaredNorm();
      if (r_sq < cut_sq) out.push_back({i, j, d, std::sqrt(r_sq), image});
    }
  }
  return out;
}

std::vector<NeighborPair> replicated_search(const Configuration& config, double cutoff) {
  const Cell& cell = config.cell;
  const int n = static_cast<int>(config.size());
  const Vec3 h = cell.heights();
  // Wrap into the home cell first so that the image range below is sufficient.
  Positions wrapped(3, n);
  std::vector<Eigen::Vector3i> wrap_shift(n);
  for (int a = 0; a < n; ++a) {
    Vec3 s = cell.to_fractional(config.positions.col(a));
    Eigen::Vector3i w = Eigen::Vector3i::Zero();
    for (int k = 0; k < 3; ++k) {
      if (cell.periodic()[k]) w[k] = -static_cast<int>(std::floor(s[k]));
    }
    wrap_shift[a] = w;
    wrapped.col(a) = config.positions.col(a) + cell.shift(w);
  }
  Eigen::Vector3i range;
  for (int k = 0; k < 3; ++k) {
    range[k] = cell.periodic()[k] ? static_cast<int>(std::ceil(cutoff / h[k])) + 1 : 0;
  }
  const double cut_sq = cutoff * cutoff;
  std::vector<NeighborPair> out;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Vec3 raw = wrapped.col(j) - wrapped.col(i);
      for (int a = -range[0]; a <= range[0]; ++a) {
        for (int b = -range[1]; b <= range[1]; ++b) {
          for (int c = -range[2]; c <= range[2]; ++c) {
            if (i == j && a == 0 && b == 0 && c == 0) continue;
            const Eigen::Vector3i img(a, b, c);
            const Vec3 d = raw + cell.shift(img);
            const double r_sq = d.squaredNorm();
            if (r_sq < cut_sq) {
              // Express the image relative to the unwrapped input positions.
              const Eigen::Vector3i image = img + wrap_shift[j] - wrap_shift[i];
              const Vec3 d_exact = config.positions.col(j) + cell.shift(image) -
                                   config.positions.col(i);
              out.push_back({i, j, d_exact, d_exact.norm(), image});
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

NeighborList build_neighbor_list(const Configuration& config, double cutoff,
                                 NeighborOptions options) {
  if (!(cutoff > 0.0)) throw GeometryError("neighbor cutoff must be positive");
  if (!(config.cell.volume() > 0.0)) throw GeometryError("degenerate cell");
  const bool minimum_image_ok = cutoff < 0.5 * config.cell.min_height();
  std::vector<NeighborPair> pairs;
  if (minimum_image_ok) {
    pairs = minimum_image_search(config, cutoff);
  } else if (options.allow_replicated) {
    pairs = replicated_search(config, cutoff);
  } else {
    throw GeometryError("cutoff " + std::to_string(cutoff) +
                        " A violates the minimum-image bound (half min cell height " +
                        std::to_string(0.5 * config.cell.min_height()) + " A)");
  }
  std::sort(pairs.begin(), pairs.end(), pair_less);
  return NeighborList(cutoff, static_cast<int>(config.size()), std::move(pairs));
}

const NeighborList& NeighborCache::update(const Configuration& config) {
  bool rebuild = wide_.atom_count() != static_cast<int>(config.size()) ||
                 !(config.cell == reference_cell_) ||
                 reference_.cols() != config.positions.cols();
  if (!rebuild) {
    const double limit = 0.25 * skin_ * skin_;
    rebuild = ((config.positions - reference_).colwise().squaredNorm().array() > limit).any();
  }
  if (rebuild) {
    wide_ = build_neighbor_list(config, cutoff_ + skin_);
    reference_ = config.positions;
    reference_cell_ = config.cell;
    ++rebuilds_;
  }
  std::vector<NeighborPair> pairs;
  pairs.reserve(wide_.pairs().size());
  for (const auto& p : wide_.pairs()) {
    const Vec3 d = config.positions.col(p.j) + config.cell.shift(p.image) - config.positions.col(p.i);
    const double r = d.norm();
    if (r < cutoff_) pairs.push_back({p.i, p.j, d, r, p.image});
  }
  current_ = NeighborList(cutoff_, static_cast<int>(config.size()), std::move(pairs));
  return current_;
}

}  // namespace xfer
