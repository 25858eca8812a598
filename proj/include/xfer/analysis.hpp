#pragma once

#include "xfer/md.hpp"

#include <optional>
#include <string>
#include <vector>

namespace xfer {

struct MaeResult {
  double force_mae = 0.0;   // meV/Å, mean |dF| over atoms and components
  double energy_mae = 0.0;  // meV/atom, NaN when no sample carries an energy
  std::vector<double> per_sample_force_mae;
  std::vector<double> per_sample_energy_mae;  // NaN for unlabelled energies
};

MaeResult force_energy_mae(const Potential& model, const std::vector<Configuration>& test_set,
                           int workers = 1);

struct RDFResult {
  std::vector<double> r;  // bin centres, Å
  std::vector<double> g;
  std::vector<double> counts;  // ordered-pair counts summed over frames
  double bin_width = 0.0;
  double r_max = 0.0;
  int frames = 0;
  double mean_density = 0.0;  // atoms / Å^3
};

// Pair histogram normalised per frame by V / (N (N - 1) shell volume), so an
// uncorrelated configuration gives g = 1. r_max must not exceed half the
// smallest cell height.
RDFResult rdf(const std::vector<Configuration>& frames, double bin_width, double r_max);

// Mean and standard deviation across several RDFs on the same grid.
std::pair<std::vector<double>, std::vector<double>> rdf_band(const std::vector<RDFResult>& runs);

struct ADFResult {
  std::vector<double> angle;    // bin centres, degrees
  std::vector<double> density;  // per degree, unit integral
  double cutoff = 0.0;
  double bin_width = 0.0;  // degrees
  int frames = 0;
  double triplets = 0.0;
};

ADFResult adf(const std::vector<Configuration>& frames, double triplet_cutoff, int n_bins);

// First minimum of g(r) after its highest peak, or `fallback` when none is found.
double first_rdf_minimum(const RDFResult& r, double fallback);

struct RelaxResult {
  double lattice_constant = 0.0;  // Å
  double energy_per_atom = 0.0;   // eV
};

// Golden-section minimisation of the cubic-diamond energy over the lattice
// constant, bracketed by a scan of [0.7 a0, 1.3 a0].
RelaxResult relax_lattice(const Potential& potential, const std::string& element, double a0,
                          int reps = 2, double tolerance = 1e-5);

struct PDOSOptions {
  double displacement = 0.01;  // Å
  double smearing = 0.3;       // THz, Gaussian sigma
  double f_min = -2.0;         // THz
  double f_max = 20.0;
  int n_points = 1101;
  int asr_iterations = 20;
  int workers = 1;
};

struct PDOSResult {
  std::vector<double> frequency;  // THz
  std::vector<double> density;    // states / THz, integral 3N
  double smearing = 0.0;
  double displacement = 0.0;
  std::vector<double> modes;  // THz ascending, imaginary modes negative
  double asymmetry = 0.0;     // max |Phi - Phi^T| before symmetrisation
  std::vector<std::string> warnings;
};

// Force constants by central differences, one column per displaced coordinate:
// Phi(j beta, i alpha) = -(F_j beta(+d) - F_j beta(-d)) / (2 d).
Eigen::MatrixXd force_constants(const Potential& potential, const Configuration& config,
                                double displacement, int workers = 1);
// Symmetrise and impose the acoustic sum rule.
void enforce_acoustic_sum_rule(Eigen::MatrixXd& phi, int iterations);
// Frequencies (THz) of the mass-weighted force-constant matrix.
std::vector<double> mode_frequencies(const Eigen::MatrixXd& phi, const std::vector<double>& masses);

PDOSResult pdos(const Potential& potential, const Configuration& supercell,
                const PDOSOptions& options = {});
PDOSResult smeared_density(std::vector<double> modes, const PDOSOptions& options);
// Integral of |a - b| over the common frequency grid.
double pdos_l1_distance(const PDOSResult& a, const PDOSResult& b);

struct BoxStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;   // furthest sample within q1 - 1.5 IQR
  double whisker_high = 0.0;  // furthest sample within q3 + 1.5 IQR
  std::vector<double> outliers;
};
// Quartiles by linear interpolation between order statistics.
BoxStats box_stats(std::vector<double> values);

struct SweepRow {
  double temperature = 0.0;
  std::vector<double> per_sample;  // meV/Å
  BoxStats stats;
};

// Per-temperature force MAE distributions over the first `samples_per_t`
// samples of each requested temperature tag.
std::vector<SweepRow> temperature_sweep(const Potential& model,
                                        const std::vector<Configuration>& pool,
                                        const std::vector<double>& temperatures,
                                        std::size_t samples_per_t, int workers = 1);

enum class RunOutcome { Completed, RdfViolation, Diverged };
std::string to_string(RunOutcome o);

struct CensusRun {
  std::uint64_t seed = 0;
  RunOutcome outcome = RunOutcome::Completed;
  double min_distance = 0.0;  // Å, over every step
  std::optional<std::int64_t> diverged_at;
  std::string failure;
};

struct CensusOptions {
  int n_runs = 20;
  double duration_ps = 20.0;
  double threshold = 2.0;  // Å
  IntegratorSpec integrator{1.0, Ensemble::NVT_Langevin, 1200.0};
  std::uint64_t seed = 0;
  int workers = 1;
};

struct StabilityCensus {
  std::vector<CensusRun> runs;
  double threshold = 0.0;
  double duration_ps = 0.0;

  int count(RunOutcome o) const;
  int successes() const { return count(RunOutcome::Completed); }
};

// A run succeeds iff it completes the full duration and no interatomic
// distance ever falls below the threshold.
StabilityCensus stability_census(const Potential& model, const Configuration& initial,
                                 const CensusOptions& options);

}  // namespace xfer
