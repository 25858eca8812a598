#include "xfer/transfer.hpp"

#include "xfer/analysis.hpp"
#include "xfer/csv.hpp"
#include "xfer/parallel.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace xfer {

std::string to_string(Arm a) { return a == Arm::Transfer ? "tl" : "scratch"; }

Arm arm_from_string(const std::string& s) {
  if (s == "tl" || s == "transfer") return Arm::Transfer;
  if (s == "scratch") return Arm::Scratch;
  throw Error("unknown arm '" + s + "'");
}

PretrainResult pretrain(const std::string& element, const std::vector<Configuration>& train_set,
                        const std::vector<Configuration>& validation_set,
                        const std::vector<Configuration>& test_set, const ModelSpec& spec,
                        const TrainSpec& train_spec) {
  if (train_set.empty()) throw Error("source training set is empty");
  for (const auto& c : train_set) {
    if (!c.labeled()) throw Error("source training set contains unlabeled configurations");
  }
  const ModelParameters init = scratch_init(spec, element, train_spec.seed, train_set);
  PretrainResult out;
  out.search = hyperparameter_search(init, train_set, validation_set, train_spec);
  out.params = out.search.best.params;
  out.params.metadata["role"] = "source";
  out.params.metadata["element"] = element;
  if (!train_set.front().provenance.empty()) {
    out.params.metadata["provenance"] = train_set.front().provenance;
  }
  if (test_set.empty()) {
    out.test_force_mae = out.test_energy_mae = std::numeric_limits<double>::quiet_NaN();
  } else {
    const MaeResult m = force_energy_mae(NeuralPotential(out.params), test_set, train_spec.workers);
    out.test_force_mae = m.force_mae;
    out.test_energy_mae = m.energy_mae;
  }
  return out;
}

ModelParameters transfer_init(const ModelParameters& source, const std::string& target_element,
                              const std::optional<ModelSpec>& expected) {
  if (expected && !expected->compatible_with(source.spec)) {
    std::ostringstream msg;
    msg << "source checkpoint is incompatible with the target model spec (cutoff "
        << source.spec.cutoff << " vs " << expected->cutoff << ", radial "
        << source.spec.n_radial_basis << " vs " << expected->n_radial_basis << ", angular "
        << source.spec.n_angular_basis << " vs " << expected->n_angular_basis << ", angular radial "
        << source.spec.n_angular_radial << " vs " << expected->n_angular_radial << ", embedding "
        << source.spec.embedding_dim << " vs " << expected->embedding_dim << ")";
    throw Error(msg.str());
  }
  if (source.elements.empty()) throw Error("source model has no elements");
  const std::string& from = source.elements.front();
  if (from == target_element) throw Error("source and target element are both " + from);
  if (source.element_index(target_element) >= 0) {
    throw Error("source model already has an embedding for " + target_element);
  }
  ModelParameters out = source;
  out.elements.push_back(target_element);
  out.embedding.conservativeResize(Eigen::NoChange, out.embedding.cols() + 1);
  out.embedding.col(out.embedding.cols() - 1) = source.embedding.col(0);
  out.metadata["role"] = "transfer";
  out.metadata["element"] = target_element;
  out.metadata["transferred_from"] = from;
  return out;
}

ModelParameters scratch_init(const ModelSpec& spec, const std::string& element, std::uint64_t seed,
                             const std::vector<Configuration>& train_set) {
  ModelParameters p = init_parameters(spec, {element}, seed);
  p = fit_input_scaling(std::move(p), train_set);
  p.metadata["role"] = "scratch";
  p.metadata["element"] = element;
  return p;
}

void TransferPlan::validate() const {
  if (source_element == target_element) throw Error("source and target element must differ");
  if (n_replicas < 1) throw Error("n_replicas must be >= 1");
  if (n_validation < 1) throw Error("n_validation must be >= 1");
  if (target_train_sizes.empty()) throw Error("no target training sizes");
  for (int s : target_train_sizes) {
    if (s < 1) throw Error("training sizes must be >= 1");
  }
  if (target_pool.empty()) throw Error("target pool is empty");
  if (target_test.empty()) throw Error("target test set is empty");
  if (source_model.element_index(source_element) != 0) {
    throw Error("source model is not a " + source_element + " model");
  }
  if (arms.empty()) throw Error("no arms requested");
  for (int r : replicas) {
    if (r < 0) throw Error("replica ids must be >= 0");
  }
  // Surfaces an architecture mismatch before any cell runs.
  if (expected_spec) transfer_init(source_model, target_element, expected_spec);
  train_spec.validate();
}

const MatrixCell* ExperimentMatrix::find(int size, int replica, Arm arm) const {
  for (const auto& c : cells) {
    if (c.train_size == size && c.replica == replica && c.arm == arm) return &c;
  }
  return nullptr;
}

namespace {

double mean_over(const ExperimentMatrix& m, int size, Arm arm, double MatrixCell::*field) {
  double acc = 0.0;
  int n = 0;
  for (const auto& c : m.cells) {
    if (c.train_size == size && c.arm == arm && c.failure.empty()) {
      acc += c.*field;
      ++n;
    }
  }
  return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

double ExperimentMatrix::mean_force_mae(int size, Arm arm) const {
  return mean_over(*this, size, arm, &MatrixCell::force_mae);
}

double ExperimentMatrix::mean_energy_mae(int size, Arm arm) const {
  return mean_over(*this, size, arm, &MatrixCell::energy_mae);
}

bool ExperimentMatrix::all_succeeded() const {
  for (const auto& c : cells) {
    if (!c.failure.empty()) return false;
  }
  return true;
}

std::uint64_t cell_split_seed(std::uint64_t base, int size, int replica) {
  return derive_seed(base, static_cast<std::uint64_t>(size) * 1000003ULL + replica);
}

std::uint64_t cell_init_seed(std::uint64_t base, int size, int replica) {
  return derive_seed(cell_split_seed(base, size, replica), 1);
}

ExperimentMatrix run_matrix(const TransferPlan& plan) {
  plan.validate();
  struct Job {
    int size;
    int replica;
  };
  std::vector<Job> jobs;
  std::vector<int> replicas = plan.replicas;
  if (replicas.empty()) {
    for (int r = 0; r < plan.n_replicas; ++r) replicas.push_back(r);
  }
  for (int s : plan.target_train_sizes) {
    for (int r : replicas) jobs.push_back({s, r});
  }
  std::vector<std::vector<MatrixCell>> results(jobs.size(),
                                               std::vector<MatrixCell>(plan.arms.size()));
  parallel_for(jobs.size(), plan.workers, [&](std::size_t k) {
    const Job job = jobs[k];
    const std::uint64_t split_seed = cell_split_seed(plan.seed, job.size, job.replica);
    const std::uint64_t init_seed = cell_init_seed(plan.seed, job.size, job.replica);
    auto& pair = results[k];
    for (std::size_t a = 0; a < pair.size(); ++a) {
      MatrixCell& c = pair[a];
      c.train_size = job.size;
      c.replica = job.replica;
      c.arm = plan.arms[a];
      c.train_seed = split_seed;
      c.init_seed = init_seed;
    }
    try {
      const Split split =
          make_splits(plan.target_pool, job.size, plan.n_validation, split_seed, plan.stratify);
      const auto train_set = select(plan.target_pool, split.train);
      const auto val_set = select(plan.target_pool, split.validation);
      const auto tr = prepare_samples(plan.source_model.spec, train_set);
      const auto va = prepare_samples(plan.source_model.spec, val_set);
      for (auto& c : pair) {
        c.split_id = split.id;
        c.train_indices = split.train;
        c.validation_indices = split.validation;
      }
      TrainSpec ts = plan.train_spec;
      ts.seed = split_seed;
      ts.workers = 1;
      for (auto& c : pair) {
        try {
          const ModelParameters init =
              c.arm == Arm::Transfer
                  ? transfer_init(plan.source_model, plan.target_element, plan.expected_spec)
                  : scratch_init(plan.source_model.spec, plan.target_element, init_seed, train_set);
          SearchResult sr = hyperparameter_search(init, std::span<const PreparedSample>(tr),
                                                  std::span<const PreparedSample>(va), ts);
          sr.best.report.split_id = split.id;
          for (auto& r : sr.candidates) r.split_id = split.id;
          c.report = sr.best.report;
          c.candidates = sr.candidates;
          c.model = sr.best.params;
          c.model->metadata["split_id"] = split.id;
          const MaeResult m = force_energy_mae(NeuralPotential(*c.model), plan.target_test);
          c.force_mae = m.force_mae;
          c.energy_mae = m.energy_mae;
        } catch (const Error& e) {
          c.failure = e.what();
        }
      }
    } catch (const Error& e) {
      for (auto& c : pair) c.failure = e.what();
    }
  });
  ExperimentMatrix m;
  for (auto& pair : results) {
    for (auto& c : pair) m.cells.push_back(std::move(c));
  }
  if (!plan.output_dir.empty()) save_matrix(m, plan.output_dir);
  return m;
}

namespace {

std::filesystem::path cell_dir(const MatrixCell& c) {
  return std::filesystem::path("size_" + std::to_string(c.train_size)) /
         ("rep_" + std::to_string(c.replica)) / to_string(c.arm);
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + std::to_string(v[k]);
  return s;
}

std::vector<std::size_t> split_indices(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream in(s);
  std::size_t v;
  while (in >> v) out.push_back(v);
  return out;
}

}  // namespace

void save_matrix(const ExperimentMatrix& matrix, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CsvTable index;
  index.meta("cells", fmt(matrix.cells.size()));
  index.columns = {"train_size", "arm",        "replica", "split_id", "force_mae_meV_A",
                   "energy_mae_meV_atom", "status", "path"};
  for (const auto& c : matrix.cells) {
    const auto rel = cell_dir(c);
    const auto leaf = dir / rel;
    std::filesystem::create_directories(leaf);
    if (c.model) save_model(*c.model, leaf / "model.json");
    if (!c.report.history.empty()) write_train_report(c.report, leaf / "report.csv");
    CsvTable metrics;
    metrics.meta("split_id", c.split_id);
    metrics.meta("train_indices", join(c.train_indices));
    metrics.meta("validation_indices", join(c.validation_indices));
    metrics.meta("train_seed", std::to_string(c.train_seed));
    metrics.meta("init_seed", std::to_string(c.init_seed));
    if (!c.failure.empty()) metrics.meta("failure", c.failure);
    metrics.columns = {"train_size", "arm", "replica", "force_mae_meV_A", "energy_mae_meV_atom"};
    metrics.add_row({fmt(c.train_size), to_string(c.arm), fmt(c.replica), fmt(c.force_mae),
                     fmt(c.energy_mae)});
    write_csv(metrics, leaf / "metrics.csv");
    CsvTable cand;
    cand.columns = {"learning_rate", "decay", "selected_epoch", "val_force_mae_meV_A", "diverged"};
    for (const auto& r : c.candidates) {
      cand.add_row({fmt(r.grid_point.learning_rate), fmt(r.grid_point.decay),
                    fmt(r.selected_epoch), fmt(r.final_val_force_mae), r.diverged ? "1" : "0"});
    }
    write_csv(cand, leaf / "candidates.csv");
    index.add_row({fmt(c.train_size), to_string(c.arm), fmt(c.replica), c.split_id,
                   fmt(c.force_mae), fmt(c.energy_mae), c.failure.empty() ? "ok" : "failed",
                   rel.generic_string()});
  }
  write_csv(index, dir / "index.csv");
}

ExperimentMatrix load_matrix(const std::filesystem::path& dir) {
  const CsvTable index = read_csv(dir / "index.csv");
  ExperimentMatrix m;
  for (const auto& row : index.rows) {
    MatrixCell c;
    c.train_size = std::stoi(row[0]);
    c.arm = arm_from_string(row[1]);
    c.replica = std::stoi(row[2]);
    c.split_id = row[3];
    c.force_mae = std::stod(row[4]);
    c.energy_mae = std::stod(row[5]);
    const auto leaf = dir / row[7];
    if (std::filesystem::exists(leaf / "model.json")) c.model = load_model(leaf / "model.json");
    const CsvTable metrics = read_csv(leaf / "metrics.csv");
    for (const auto& [k, v] : metrics.metadata) {
      if (k == "train_indices") c.train_indices = split_indices(v);
      if (k == "validation_indices") c.validation_indices = split_indices(v);
      if (k == "train_seed") c.train_seed = std::stoull(v);
      if (k == "init_seed") c.init_seed = std::stoull(v);
      if (k == "failure") c.failure = v;
    }
    if (row[6] != "ok" && c.failure.empty()) c.failure = "failed";
    m.cells.push_back(std::move(c));
  }
  return m;
}

void write_matrix_report(const ExperimentMatrix& matrix, const std::filesystem::path& path) {
  CsvTable t;
  t.meta("force_mae_unit", "meV/A");
  t.meta("energy_mae_unit", "meV/atom");
  t.columns = {"train_size", "arm", "replica", "force_mae", "energy_mae"};
  for (const auto& c : matrix.cells) {
    if (!c.failure.empty()) continue;
    t.add_row({fmt(c.train_size), to_string(c.arm), fmt(c.replica), fmt(c.force_mae),
               fmt(c.energy_mae)});
  }
  write_csv(t, path);
}

}  // namespace xfer
