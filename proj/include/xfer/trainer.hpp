#pragma once

#include "xfer/model.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace xfer {

// Thrown when the loss becomes non-finite during training.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

struct GridPoint {
  double learning_rate = 1e-3;
  double decay = 1.0;  // per-epoch multiplicative factor
};

std::vector<GridPoint> default_grid();

struct TrainSpec {
  int batch_size = 0;  // 0: min(8, training-set size)
  int max_epochs = 2000;
  double initial_learning_rate = 1e-3;
  double lr_decay_factor = 1.0;
  int early_stop_patience = 200;
  std::uint64_t seed = 0;
  std::vector<GridPoint> hyperparameter_grid = default_grid();
  // Parameter groups (see parameter_groups) left untouched by the optimizer.
  std::vector<std::string> frozen_groups;
  int workers = 1;

  void validate() const;
};

// Per-configuration data that does not depend on the network parameters:
// raw descriptors and their Jacobian with respect to pair displacements.
struct PreparedSample {
  int n_atoms = 0;
  std::vector<std::string> species;
  Eigen::MatrixXd descriptors;  // n_desc x N
  Eigen::MatrixXd jacobian;     // n_desc x 3 n_pairs
  std::vector<int> pair_i, pair_j;
  Forces reference_forces;
  std::optional<double> reference_energy;
};

PreparedSample prepare_sample(const ModelSpec& spec, const Configuration& config);
std::vector<PreparedSample> prepare_samples(const ModelSpec& spec,
                                            const std::vector<Configuration>& configs,
                                            int workers = 1);

// Forces predicted from a prepared sample.
Forces predict_forces(const ModelParameters& params, const PreparedSample& sample);

// Force-matching loss averaged over the batch, each configuration normalised
// by 1 / (3 N).
double force_matching_loss(const ModelParameters& params, const std::vector<Configuration>& batch);
double force_matching_loss(const ModelParameters& params, std::span<const PreparedSample> batch);

struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;  // flatten() ordering
};
LossGradient loss_and_gradient(const ModelParameters& params, std::span<const PreparedSample> batch,
                               int workers = 1);

struct AdamState {
  Eigen::VectorXd m, v;
  long t = 0;
};
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;
void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state, double lr);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;        // (eV/Å)^2
  double val_force_mae = 0.0;     // meV/Å
  double val_force_mse = 0.0;     // (eV/Å)^2
  double learning_rate = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> history;  // epoch 0 is the initial model
  int selected_epoch = 0;
  double final_val_force_mae = 0.0;  // meV/Å
  std::uint64_t seed = 0;
  std::string split_id;
  GridPoint grid_point;
  bool diverged = false;
  std::string diagnostic;
};

// Mean |dF| over atoms and components (meV/Å) and mean squared error.
std::pair<double, double> force_errors(const ModelParameters& params,
                                       std::span<const PreparedSample> samples);

struct TrainResult {
  ModelParameters params;
  TrainReport report;
};

// Trains with the TrainSpec learning rate and decay. Returns the parameters of
// the epoch with the lowest validation force MAE (epoch 0 included), with the
// energy shift fitted on the training set.
TrainResult train(const ModelParameters& initial, const std::vector<Configuration>& train_set,
                  const std::vector<Configuration>& validation_set, const TrainSpec& spec);
TrainResult train(const ModelParameters& initial, std::span<const PreparedSample> train_samples,
                  std::span<const PreparedSample> validation_samples, const TrainSpec& spec);

struct SearchResult {
  TrainResult best;
  TrainSpec best_spec;
  std::vector<TrainReport> candidates;  // grid order
};

// One training run per grid point; ties go to the lower learning rate.
SearchResult hyperparameter_search(const ModelParameters& initial,
                                   const std::vector<Configuration>& train_set,
                                   const std::vector<Configuration>& validation_set,
                                   const TrainSpec& spec);
SearchResult hyperparameter_search(const ModelParameters& initial,
                                   std::span<const PreparedSample> train_samples,
                                   std::span<const PreparedSample> validation_samples,
                                   const TrainSpec& spec);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> rest;  // unused pool indices, ascending
  std::string id;                 // hash of the index sets
};

// Deterministic disjoint draw. When stratified, indices are taken round-robin
// over temperature tags (untagged samples form one group).
Split make_splits(const std::vector<Configuration>& pool, std::size_t n_train,
                  std::size_t n_validation, std::uint64_t seed, bool stratify_by_temperature);

std::vector<Configuration> select(const std::vector<Configuration>& pool,
                                  const std::vector<std::size_t>& indices);

// CSV history with a metadata header.
void write_train_report(const TrainReport& report, const std::filesystem::path& path);

}  // namespace xfer
