#pragma once

#include "xfer/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace xfer {

enum class Arm { Transfer, Scratch };
std::string to_string(Arm a);  // "tl", "scratch"
Arm arm_from_string(const std::string& s);

struct PretrainResult {
  ModelParameters params;
  SearchResult search;
  double test_force_mae = 0.0;   // meV/Å, NaN without a test set
  double test_energy_mae = 0.0;  // meV/atom
};

// Trains a single-element source model from scratch: random init, input
// scaling fitted on the training set, hyperparameter search.
PretrainResult pretrain(const std::string& element, const std::vector<Configuration>& train_set,
                        const std::vector<Configuration>& validation_set,
                        const std::vector<Configuration>& test_set, const ModelSpec& spec,
                        const TrainSpec& train_spec);

// Copies every parameter; the target element's embedding column is a copy of
// the source element's, so predictions on identical geometries are unchanged.
// When `expected` is given it must match the source architecture.
ModelParameters transfer_init(const ModelParameters& source, const std::string& target_element,
                              const std::optional<ModelSpec>& expected = std::nullopt);

// Random-init model for the baseline arm, standardised on its own training set.
ModelParameters scratch_init(const ModelSpec& spec, const std::string& element, std::uint64_t seed,
                             const std::vector<Configuration>& train_set);

struct TransferPlan {
  std::string source_element = "Si";
  std::string target_element = "Ge";
  ModelParameters source_model;
  std::vector<Configuration> target_pool;  // train/validation draws
  std::vector<Configuration> target_test;  // fixed held-out test set
  std::vector<int> target_train_sizes{1, 10, 50};
  int n_replicas = 5;
  // Replica ids to run; empty means 0 .. n_replicas-1.
  std::vector<int> replicas;
  std::vector<Arm> arms{Arm::Transfer, Arm::Scratch};
  // Architecture the transferred model must have, when given.
  std::optional<ModelSpec> expected_spec;
  int n_validation = 10;
  bool stratify = true;
  TrainSpec train_spec;  // both arms; the grid is searched per arm
  std::uint64_t seed = 0;
  int workers = 1;
  std::filesystem::path output_dir;  // empty: nothing persisted

  void validate() const;
};

struct MatrixCell {
  int train_size = 0;
  int replica = 0;
  Arm arm = Arm::Transfer;
  std::string split_id;
  std::vector<std::size_t> train_indices, validation_indices;
  std::uint64_t init_seed = 0;
  std::uint64_t train_seed = 0;
  std::optional<ModelParameters> model;
  TrainReport report;
  std::vector<TrainReport> candidates;
  double force_mae = 0.0;   // meV/Å on the test set
  double energy_mae = 0.0;  // meV/atom
  std::string failure;      // empty on success
};

struct ExperimentMatrix {
  std::vector<MatrixCell> cells;  // (size, replica, arm) order, TL first

  const MatrixCell* find(int size, int replica, Arm arm) const;
  // Mean test force MAE over successful replicas.
  double mean_force_mae(int size, Arm arm) const;
  double mean_energy_mae(int size, Arm arm) const;
  bool all_succeeded() const;
};

// Seeds of a matrix cell, shared by both arms.
std::uint64_t cell_split_seed(std::uint64_t base, int size, int replica);
std::uint64_t cell_init_seed(std::uint64_t base, int size, int replica);

ExperimentMatrix run_matrix(const TransferPlan& plan);

// Directory layout: size_<n>/rep_<r>/<arm>/{model.json, report.csv, metrics.csv}
// plus index.csv at the root.
void save_matrix(const ExperimentMatrix& matrix, const std::filesystem::path& dir);
ExperimentMatrix load_matrix(const std::filesystem::path& dir);
// Flat table: train_size, arm, replica, force_mae, energy_mae.
void write_matrix_report(const ExperimentMatrix& matrix, const std::filesystem::path& path);

}  // namespace xfer
