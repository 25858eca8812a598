#include "xfer/analysis.hpp"

#include "xfer/parallel.hpp"
#include "xfer/units.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace xfer {

MaeResult force_energy_mae(const Potential& model, const std::vector<Configuration>& test_set,
                           int workers) {
  if (test_set.empty()) throw Error("test set is empty");
  const std::size_t n = test_set.size();
  std::vector<double> abs_force(n), components(n);
  MaeResult out;
  out.per_sample_force_mae.resize(n);
  out.per_sample_energy_mae.resize(n);
  parallel_for(n, workers, [&](std::size_t k) {
    const auto& c = test_set[k];
    if (!c.forces) throw Error("test configuration " + std::to_string(k) + " has no forces");
    const Evaluation ev = evaluate(model, c);
    abs_force[k] = (ev.forces - *c.forces).cwiseAbs().sum();
    components[k] = static_cast<double>(ev.forces.size());
    out.per_sample_force_mae[k] = 1000.0 * abs_force[k] / components[k];
    out.per_sample_energy_mae[k] =
        c.energy ? 1000.0 * std::abs(ev.energy - *c.energy) / static_cast<double>(c.size())
                 : std::numeric_limits<double>::quiet_NaN();
  });
  double fsum = 0.0, fcount = 0.0, esum = 0.0;
  int ecount = 0;
  for (std::size_t k = 0; k < n; ++k) {
    fsum += abs_force[k];
    fcount += components[k];
    if (!std::isnan(out.per_sample_energy_mae[k])) {
      esum += out.per_sample_energy_mae[k];
      ++ecount;
    }
  }
  out.force_mae = 1000.0 * fsum / fcount;
  out.energy_mae = ecount > 0 ? esum / ecount : std::numeric_limits<double>::quiet_NaN();
  return out;
}

RDFResult rdf(const std::vector<Configuration>& frames, double bin_width, double r_max) {
  if (frames.empty()) throw Error("rdf needs at least one frame");
  if (!(bin_width > 0.0) || !(r_max > bin_width)) throw Error("rdf needs 0 < bin_width < r_max");
  const int nb = static_cast<int>(std::floor(r_max / bin_width + 1e-9));
  RDFResult out;
  out.bin_width = bin_width;
  out.r_max = nb * bin_width;
  out.frames = static_cast<int>(frames.size());
  out.r.resize(nb);
  out.g.assign(nb, 0.0);
  out.counts.assign(nb, 0.0);
  std::vector<double> shell(nb);
  for (int b = 0; b < nb; ++b) {
    out.r[b] = (b + 0.5) * bin_width;
    const double lo = b * bin_width, hi = lo + bin_width;
    shell[b] = 4.0 / 3.0 * std::numbers::pi * (hi * hi * hi - lo * lo * lo);
  }
  NeighborOptions opt;
  opt.allow_replicated = false;
  for (const auto& f : frames) {
    if (f.size() < 2) throw Error("rdf needs at least two atoms per frame");
    if (out.r_max > 0.5 * f.cell.min_height() + 1e-12) {
      throw Error("rdf r_max exceeds half the smallest cell height");
    }
    const double v = f.cell.volume();
    const double n = static_cast<double>(f.size());
    out.mean_density += n / v / frames.size();
    const NeighborList nl = build_neighbor_list(f, out.r_max, opt);
    std::vector<double> hist(nb, 0.0);
    for (const auto& p : nl.pairs()) {
      const int b = static_cast<int>(p.r / bin_width);
      if (b < nb) hist[b] += 1.0;
    }
    const double norm = v / (n * (n - 1.0));
    for (int b = 0; b < nb; ++b) {
      out.counts[b] += hist[b];
      out.g[b] += norm * hist[b] / shell[b] / frames.size();
    }
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> rdf_band(const std::vector<RDFResult>& runs) {
  if (runs.empty()) throw Error("rdf_band needs at least one result");
  const std::size_t nb = runs[0].g.size();
  std::vector<double> mean(nb, 0.0), sd(nb, 0.0);
  for (const auto& r : runs) {
    if (r.g.size() != nb) throw Error("rdf results use different grids");
    for (std::size_t b = 0; b < nb; ++b) mean[b] += r.g[b] / runs.size();
  }
  for (const auto& r : runs) {
    for (std::size_t b = 0; b < nb; ++b) sd[b] += (r.g[b] - mean[b]) * (r.g[b] - mean[b]);
  }
  for (auto& s : sd) s = runs.size() > 1 ? std::sqrt(s / (runs.size() - 1)) : 0.0;
  return {mean, sd};
}

ADFResult adf(const std::vector<Configuration>& frames, double triplet_cutoff, int n_bins) {
  if (frames.empty()) throw Error("adf needs at least one frame");
  if (n_bins < 1 || !(triplet_cutoff > 0.0)) throw Error("adf needs n_bins >= 1 and cutoff > 0");
  ADFResult out;
  out.cutoff = triplet_cutoff;
  out.bin_width = 180.0 / n_bins;
  out.frames = static_cast<int>(frames.size());
  out.angle.resize(n_bins);
  out.density.assign(n_bins, 0.0);
  for (int b = 0; b < n_bins; ++b) out.angle[b] = (b + 0.5) * out.bin_width;
  NeighborOptions opt;
  opt.allow_replicated = false;
  for (const auto& f : frames) {
    if (triplet_cutoff > 0.5 * f.cell.min_height() + 1e-12) {
      throw Error("adf cutoff exceeds half the smallest cell height");
    }
    const NeighborList nl = build_neighbor_list(f, triplet_cutoff, opt);
    for (int i = 0; i < static_cast<int>(f.size()); ++i) {
      const auto list = nl.of(i);
      for (std::size_t a = 0; a < list.size(); ++a) {
        for (std::size_t b = a + 1; b < list.size(); ++b) {
          const double c =
              std::clamp(list[a].d.dot(list[b].d) / (list[a].r * list[b].r), -1.0, 1.0);
          const double theta = std::acos(c) * 180.0 / std::numbers::pi;
          const int bin = std::min(n_bins - 1, static_cast<int>(theta / out.bin_width));
          out.density[bin] += 1.0;
          out.triplets += 1.0;
        }
      }
    }
  }
  if (out.triplets == 0.0) throw Error("no triplets within the adf cutoff");
  for (auto& d : out.density) d /= out.triplets * out.bin_width;
  return out;
}

double first_rdf_minimum(const RDFResult& r, double fallback) {
  if (r.g.size() < 3) return fallback;
  const auto peak = std::max_element(r.g.begin(), r.g.end()) - r.g.begin();
  for (std::size_t b = peak + 1; b + 1 < r.g.size(); ++b) {
    if (r.g[b] <= r.g[b - 1] && r.g[b] < r.g[b + 1]) return r.r[b];
  }
  return fallback;
}

RelaxResult relax_lattice(const Potential& potential, const std::string& element, double a0,
                          int reps, double tolerance) {
  if (!(a0 > 0.0)) throw Error("initial lattice constant must be positive");
  const Configuration base = diamond_lattice(element, 1.0, reps);
  auto energy = [&](double a) {
    Configuration c = base;
    c.cell = base.cell.scaled(a);
    c.positions *= a;
    return evaluate(potential, c).energy / static_cast<double>(c.size());
  };
  const int n_scan = 61;
  const double lo = 0.7 * a0, hi = 1.3 * a0, step = (hi - lo) / (n_scan - 1);
  std::vector<double> e(n_scan);
  for (int k = 0; k < n_scan; ++k) {
    try {
      e[k] = energy(lo + k * step);
    } catch (const OverlapError&) {
      e[k] = std::numeric_limits<double>::infinity();
    }
  }
  const int best = static_cast<int>(std::min_element(e.begin(), e.end()) - e.begin());
  if (best == 0 || best == n_scan - 1 || !std::isfinite(e[best])) {
    throw Error("no energy minimum bracketed in [0.7 a0, 1.3 a0]");
  }
  double a = lo + (best - 1) * step, b = lo + (best + 1) * step;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = energy(c), fd = energy(d);
  while (b - a > tolerance) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = energy(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = energy(d);
    }
  }
  RelaxResult out;
  out.lattice_constant = 0.5 * (a + b);
  out.energy_per_atom = energy(out.lattice_constant);
  return out;
}

Eigen::MatrixXd force_constants(const Potential& potential, const Configuration& config,
                                double displacement, int workers) {
  if (!(displacement > 0.0)) throw Error("displacement must be positive");
  const int n3 = 3 * static_cast<int>(config.size());
  Eigen::MatrixXd phi(n3, n3);
  parallel_for(n3, workers, [&](std::size_t col) {
    const int atom = static_cast<int>(col) / 3, axis = static_cast<int>(col) % 3;
    Configuration plus = config, minus = config;
    plus.positions(axis, atom) += displacement;
    minus.positions(axis, atom) -= displacement;
    const Forces fp = evaluate(potential, plus).forces;
    const Forces fm = evaluate(potential, minus).forces;
    phi.col(col) = -(fp - fm).reshaped() / (2.0 * displacement);
  });
  return phi;
}

void enforce_acoustic_sum_rule(Eigen::MatrixXd& phi, int iterations) {
  const int n = static_cast<int>(phi.rows()) / 3;
  for (int it = 0; it < iterations; ++it) {
    phi = 0.5 * (phi + phi.transpose()).eval();
    for (int i = 0; i < n; ++i) {
      Mat3 off = Mat3::Zero();
      for (int j = 0; j < n; ++j) {
        if (j != i) off += phi.block<3, 3>(3 * i, 3 * j);
      }
      phi.block<3, 3>(3 * i, 3 * i) = -off;
    }
  }
  phi = 0.5 * (phi + phi.transpose()).eval();
}

std::vector<double> mode_frequencies(const Eigen::MatrixXd& phi, const std::vector<double>& masses) {
  const Eigen::Index n3 = phi.rows();
  if (static_cast<Eigen::Index>(3 * masses.size()) != n3) throw Error("mass count mismatch");
  Eigen::VectorXd w(n3);
  for (Eigen::Index k = 0; k < n3; ++k) w[k] = 1.0 / std::sqrt(masses[k / 3]);
  const Eigen::MatrixXd dyn = w.asDiagonal() * phi * w.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dyn, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("dynamical matrix diagonalisation failed");
  std::vector<double> out(n3);
  for (Eigen::Index k = 0; k < n3; ++k) {
    const double l = solver.eigenvalues()[k];
    out[k] = (l < 0.0 ? -1.0 : 1.0) * std::sqrt(std::abs(l)) * units::kSqrtEvA2AmuToTHz;
  }
  std::sort(out.begin(), out.end());
  return out;
}

PDOSResult smeared_density(std::vector<double> modes, const PDOSOptions& options) {
  if (options.n_points < 2 || !(options.f_max > options.f_min) || !(options.smearing > 0.0)) {
    throw Error("invalid PDOS grid");
  }
  PDOSResult out;
  out.smearing = options.smearing;
  out.displacement = options.displacement;
  const int np = options.n_points;
  const double df = (options.f_max - options.f_min) / (np - 1);
  out.frequency.resize(np);
  out.density.assign(np, 0.0);
  const double s = options.smearing;
  const double pref = 1.0 / (s * std::sqrt(2.0 * std::numbers::pi));
  for (int k = 0; k < np; ++k) {
    const double f = options.f_min + k * df;
    out.frequency[k] = f;
    double acc = 0.0;
    for (double m : modes) {
      const double x = (f - m) / s;
      acc += pref * std::exp(-0.5 * x * x);
    }
    out.density[k] = acc;
  }
  double integral = 0.0;
  for (int k = 0; k + 1 < np; ++k) integral += 0.5 * df * (out.density[k] + out.density[k + 1]);
  if (integral > 0.0) {
    const double scale = static_cast<double>(modes.size()) / integral;
    for (auto& d : out.density) d *= scale;
  }
  out.modes = std::move(modes);
  return out;
}

PDOSResult pdos(const Potential& potential, const Configuration& supercell,
                const PDOSOptions& options) {
  Eigen::MatrixXd phi = force_constants(potential, supercell, options.displacement, options.workers);
  const double asym = (phi - phi.transpose()).cwiseAbs().maxCoeff();
  enforce_acoustic_sum_rule(phi, options.asr_iterations);
  PDOSResult out = smeared_density(mode_frequencies(phi, supercell.masses()), options);
  out.asymmetry = asym;
  if (asym > 1e-2) {
    out.warnings.push_back("force constants asymmetric by " + std::to_string(asym) +
                           " eV/A^2 before symmetrisation");
  }
  return out;
}

double pdos_l1_distance(const PDOSResult& a, const PDOSResult& b) {
  if (a.frequency != b.frequency) throw Error("PDOS results use different frequency grids");
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < a.frequency.size(); ++k) {
    const double df = a.frequency[k + 1] - a.frequency[k];
    acc += 0.5 * df *
           (std::abs(a.density[k] - b.density[k]) + std::abs(a.density[k + 1] - b.density[k + 1]));
  }
  return acc;
}

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw Error("box statistics of an empty sample");
  std::sort(values.begin(), values.end());
  BoxStats s;
  s.median = quantile_sorted(values, 0.5);
  s.q1 = quantile_sorted(values, 0.25);
  s.q3 = quantile_sorted(values, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo = s.q1 - 1.5 * iqr, hi = s.q3 + 1.5 * iqr;
  s.whisker_low = s.q1;
  s.whisker_high = s.q3;
  for (double v : values) {
    if (v < lo || v > hi) {
      s.outliers.push_back(v);
      continue;
    }
    s.whisker_low = std::min(s.whisker_low, v);
    s.whisker_high = std::max(s.whisker_high, v);
  }
  return s;
}

std::vector<SweepRow> temperature_sweep(const Potential& model,
                                        const std::vector<Configuration>& pool,
                                        const std::vector<double>& temperatures,
                                        std::size_t samples_per_t, int workers) {
  if (samples_per_t < 1) throw Error("samples_per_t must be >= 1");
  std::vector<SweepRow> rows;
  for (double t : temperatures) {
    std::vector<Configuration> group;
    for (const auto& c : pool) {
      if (c.temperature && *c.temperature == t && group.size() < samples_per_t) group.push_back(c);
    }
    if (group.size() < samples_per_t) {
      throw Error("pool has " + std::to_string(group.size()) + " samples tagged " +
                  std::to_string(t) + " K, " + std::to_string(samples_per_t) + " requested");
    }
    SweepRow row;
    row.temperature = t;
    row.per_sample = force_energy_mae(model, group, workers).per_sample_force_mae;
    row.stats = box_stats(row.per_sample);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string to_string(RunOutcome o) {
  switch (o) {
    case RunOutcome::Completed: return "completed";
    case RunOutcome::RdfViolation: return "rdf-violation";
    case RunOutcome::Diverged: return "diverged";
  }
  return "?";
}

int StabilityCensus::count(RunOutcome o) const {
  return static_cast<int>(
      std::count_if(runs.begin(), runs.end(), [o](const CensusRun& r) { return r.outcome == o; }));
}

StabilityCensus stability_census(const Potential& model, const Configuration& initial,
                                 const CensusOptions& options) {
  if (options.n_runs < 1) throw Error("census needs at least one run");
  options.integrator.validate();
  const auto steps =
      static_cast<std::int64_t>(std::llround(options.duration_ps * units::kFsPerPs /
                                             options.integrator.timestep));
  StabilityCensus census;
  census.threshold = options.threshold;
  census.duration_ps = options.duration_ps;
  census.runs.resize(options.n_runs);
  parallel_for(options.n_runs, options.workers, [&](std::size_t k) {
    CensusRun& out = census.runs[k];
    out.seed = derive_seed(options.seed, k);
    MDState state;
    try {
      state = initialize_state(initial, options.integrator.target_temperature, out.seed, model);
    } catch (const Error& e) {
      out.outcome = RunOutcome::Diverged;
      out.diverged_at = 0;
      out.failure = e.what();
      return;
    }
    RunOptions ro;
    ro.keep_frames = false;
    const TrajectoryRecord rec = run(state, options.integrator, steps, steps, model, ro);
    out.min_distance = rec.min_distance;
    if (!rec.completed) {
      out.outcome = RunOutcome::Diverged;
      out.diverged_at = rec.diverged_at;
      out.failure = rec.failure;
    } else if (rec.min_distance < options.threshold) {
      out.outcome = RunOutcome::RdfViolation;
    }
  });
  return census;
}

}  // namespace xfer
