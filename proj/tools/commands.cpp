#include "commands.hpp"

#include "config.hpp"

#include "xfer/analysis.hpp"
#include "xfer/csv.hpp"
#include "xfer/dataset.hpp"
#include "xfer/extxyz.hpp"
#include "xfer/parallel.hpp"
#include "xfer/transfer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <memory>
#include <numeric>
#include <ostream>
#include <set>

namespace xfer::cli {

namespace fs = std::filesystem;

namespace {

struct Context {
  RunConfig cfg;
  fs::path out_dir;
  std::uint64_t seed = 0;
  int workers = 1;
  bool dry_run = false;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

// ---------------------------------------------------------------- helpers

std::string format_temperature(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

void write_run_manifest(const Context& ctx, const std::string& command) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(ctx.out_dir)) {
    if (e.is_regular_file() && e.path().filename() != "MANIFEST.tsv") files.push_back(e.path());
  }
  std::vector<std::string> rel;
  for (const auto& f : files) rel.push_back(fs::relative(f, ctx.out_dir).generic_string());
  std::sort(rel.begin(), rel.end());
  std::ofstream m(ctx.out_dir / "MANIFEST.tsv", std::ios::binary);
  m << "# xfer-run 1\n";
  m << "command\t" << command << "\n";
  for (const auto& r : rel) m << "file\t" << r << "\t" << sha256_file(ctx.out_dir / r) << "\n";
}

// Resolved config plus the directory manifest; called once outputs exist.
void finish(const Context& ctx, const std::string& command) {
  ctx.cfg.write(ctx.out_dir / ("config." + command + ".ini"));
  write_run_manifest(ctx, command);
}

std::unique_ptr<Potential> load_potential(const std::string& spec) {
  if (spec.rfind("sw:", 0) == 0) {
    return std::make_unique<SWPotential>(default_parameters(Species::from_symbol(spec.substr(3))));
  }
  if (spec.empty()) throw UsageError("no potential given");
  return std::make_unique<NeuralPotential>(load_model(spec));
}

std::string potential_element(const Potential& p) {
  if (const auto* sw = dynamic_cast<const SWPotential*>(&p)) return sw->parameters().element;
  const auto& nn = dynamic_cast<const NeuralPotential&>(p);
  return nn.parameters().elements.back();
}

ModelSpec model_spec(const RunConfig& cfg, std::uint64_t seed) {
  ModelSpec s;
  s.cutoff = cfg.num("model.cutoff");
  s.n_radial_basis = static_cast<int>(cfg.integer("model.n_radial_basis"));
  s.n_angular_basis = static_cast<int>(cfg.integer("model.n_angular_basis"));
  s.n_angular_radial = static_cast<int>(cfg.integer("model.n_angular_radial"));
  s.embedding_dim = static_cast<int>(cfg.integer("model.embedding_dim"));
  s.hidden_layer_widths = cfg.int_list("model.hidden_layer_widths");
  s.activation = activation_from_string(cfg.str("model.activation"));
  s.seed = seed;
  s.validate();
  return s;
}

TrainSpec train_spec(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  TrainSpec t;
  t.batch_size = static_cast<int>(cfg.integer("train.batch_size"));
  t.max_epochs = static_cast<int>(cfg.integer("train.max_epochs"));
  t.early_stop_patience = static_cast<int>(cfg.integer("train.patience"));
  t.hyperparameter_grid.clear();
  for (double lr : cfg.num_list("train.learning_rates")) {
    for (double d : cfg.num_list("train.decays")) t.hyperparameter_grid.push_back({lr, d});
  }
  if (t.hyperparameter_grid.empty()) throw UsageError("empty hyperparameter grid");
  t.initial_learning_rate = t.hyperparameter_grid.front().learning_rate;
  t.lr_decay_factor = t.hyperparameter_grid.front().decay;
  t.frozen_groups = cfg.list("train.frozen_groups");
  t.seed = ctx.seed;
  t.workers = ctx.workers;
  try {
    t.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return t;
}

std::vector<Configuration> load_pool_arg(const RunConfig& cfg, const std::string& where,
                                         const std::optional<std::string>& element,
                                         std::uint64_t seed) {
  if (where.empty()) throw UsageError("no data pool given (--pool)");
  fs::path p = where;
  if (fs::is_directory(p)) p /= "manifest.tsv";
  if (!fs::exists(p)) throw UsageError("pool " + p.string() + " does not exist");
  const double sigma = cfg.num("data.noise_sigma");
  PoolFilter filter;
  filter.element = element;
  if (!cfg.str("data.t_min").empty() || !cfg.str("data.t_max").empty()) {
    filter.temperature_range = {
        cfg.str("data.t_min").empty() ? -1e300 : cfg.num("data.t_min"),
        cfg.str("data.t_max").empty() ? 1e300 : cfg.num("data.t_max")};
  }
  filter.kinds = cfg.list("data.kinds");
  filter.exclude_kinds = cfg.list("data.exclude_kinds");
  if (p.extension() == ".xyz" || p.extension() == ".extxyz") {
    // Loose extxyz files carry no hashes; filter in place.
    DatasetManifest m = build_manifest({p});
    return load_pool(build_pool(m, filter), sigma, seed);
  }
  return load_pool(build_pool(read_manifest(p), filter), sigma, seed);
}

std::size_t temperature_groups(const std::vector<Configuration>& pool) {
  std::set<double> t;
  bool untagged = false;
  for (const auto& c : pool) {
    if (c.temperature) {
      t.insert(*c.temperature);
    } else {
      untagged = true;
    }
  }
  return t.size() + (untagged ? 1 : 0);
}

CsvTable candidates_table(const std::vector<TrainReport>& candidates) {
  CsvTable t;
  t.columns = {"learning_rate", "decay", "selected_epoch", "val_force_mae_meV_A", "diverged",
               "diagnostic"};
  for (const auto& r : candidates) {
    t.add_row({fmt(r.grid_point.learning_rate), fmt(r.grid_point.decay), fmt(r.selected_epoch),
               fmt(r.final_val_force_mae), r.diverged ? "1" : "0", r.diagnostic});
  }
  return t;
}

// Models grouped for comparison: a matrix directory contributes one group
// per arm at the chosen training size, every --models entry one group.
struct ModelGroup {
  std::string label;
  std::vector<fs::path> models;
};

std::vector<fs::path> find_models(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "model.json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ModelGroup> model_groups(const RunConfig& cfg) {
  std::vector<ModelGroup> groups;
  if (!cfg.str("analyze.matrix").empty()) {
    const fs::path dir = cfg.str("analyze.matrix");
    if (!fs::is_directory(dir)) throw UsageError("matrix directory " + dir.string() + " not found");
    int size = static_cast<int>(cfg.integer("analyze.train_size"));
    if (size == 0) {
      size = std::numeric_limits<int>::max();
      for (const auto& e : fs::directory_iterator(dir)) {
        const std::string n = e.path().filename().string();
        if (e.is_directory() && n.rfind("size_", 0) == 0) size = std::min(size, std::stoi(n.substr(5)));
      }
      if (size == std::numeric_limits<int>::max()) throw UsageError("no size_* cells in " + dir.string());
    }
    const fs::path sdir = dir / ("size_" + std::to_string(size));
    for (const std::string arm : {"tl", "scratch"}) {
      ModelGroup g{arm, {}};
      if (fs::is_directory(sdir)) {
        for (const auto& m : find_models(sdir)) {
          if (m.parent_path().filename() == arm) g.models.push_back(m);
        }
      }
      if (!g.models.empty()) groups.push_back(std::move(g));
    }
  }
  std::vector<std::string> entries = cfg.list("analyze.models");
  if (!cfg.str("analyze.model").empty()) entries.insert(entries.begin(), cfg.str("analyze.model"));
  for (const auto& e : entries) {
    const fs::path p = e;
    if (fs::is_directory(p)) {
      ModelGroup g{p.filename().string(), find_models(p)};
      if (g.label.empty()) g.label = p.parent_path().filename().string();
      if (g.models.empty()) throw UsageError("no model.json under " + p.string());
      groups.push_back(std::move(g));
    } else if (fs::exists(p)) {
      const std::string label =
          p.filename() == "model.json" ? p.parent_path().generic_string() : p.stem().string();
      groups.push_back({label, {p}});
    } else {
      throw UsageError("model " + p.string() + " not found");
    }
  }
  if (groups.empty()) throw UsageError("no models given (--model, --models or --matrix)");
  return groups;
}

Configuration initial_structure(const RunConfig& cfg, const std::string& structure_key,
                                const std::string& element, int reps, double lattice_constant,
                                long frame = 0) {
  const std::string path = cfg.str(structure_key);
  if (!path.empty()) {
    auto frames = read_extxyz(path, 0.0);
    if (frame < 0 || frame >= static_cast<long>(frames.size())) {
      throw UsageError(path + " has no frame " + std::to_string(frame));
    }
    return frames[frame];
  }
  const double a0 = lattice_constant > 0.0 ? lattice_constant : nominal_lattice_constant(element);
  return diamond_lattice(element, a0, reps);
}

// ---------------------------------------------------------------- generate

int cmd_generate(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const std::string element = cfg.str("generate.element");
  if (element.empty()) throw UsageError("generate: --element is required");
  const auto temps = parse_temperatures(cfg.str("generate.temps"));
  SWParameters params;
  try {
    params = cfg.str("generate.sw_parameters").empty()
                 ? default_parameters(Species::from_symbol(element))
                 : read_sw_parameter_file(cfg.str("generate.sw_parameters")).at(element);
  } catch (const std::out_of_range&) {
    throw UsageError("no SW parameters for " + element);
  }
  GenerationProtocol proto;
  proto.equilibration.timestep = proto.production.timestep = cfg.num("generate.timestep");
  proto.equilibration.thermostat_damping = proto.production.thermostat_damping =
      cfg.num("generate.thermostat_damping");
  proto.equilibration.barostat_damping = cfg.num("generate.barostat_damping");
  proto.equilibration.target_pressure = cfg.num("generate.pressure");
  proto.equilibration.neighbor_skin = proto.production.neighbor_skin = 0.5;
  proto.equilibration_steps = cfg.integer("generate.equilibration_steps");
  proto.production_steps = cfg.integer("generate.production_steps");
  proto.sample_every = cfg.integer("generate.sample_every");
  proto.replicas = static_cast<int>(cfg.integer("generate.replicas"));
  proto.lattice_constant = cfg.num("generate.lattice_constant");
  proto.seed = ctx.seed;
  if (proto.sample_every < 1 || proto.production_steps < proto.sample_every) {
    throw UsageError("generate: need production_steps >= sample_every >= 1");
  }

  const long per_t = static_cast<long>(proto.production_steps / proto.sample_every);
  const long long steps = static_cast<long long>(temps.size()) *
                          (proto.equilibration_steps + proto.production_steps);
  if (ctx.dry_run) {
    *ctx.out << "generate " << element << ": " << temps.size() << " temperatures ("
             << format_temperature(temps.front()) << " .. " << format_temperature(temps.back())
             << " K), " << per_t << " samples each, " << 8 * proto.replicas * proto.replicas * proto.replicas
             << " atoms, " << steps << " MD steps in total\n";
    return kExitOk;
  }

  std::vector<GeneratedData> results(temps.size());
  parallel_for(temps.size(), ctx.workers,
               [&](std::size_t k) { results[k] = generate_dataset(params, {temps[k]}, proto); });
  const fs::path data = ctx.out_dir / "data";
  fs::create_directories(data);
  std::vector<fs::path> files;
  int status = kExitOk;
  for (std::size_t k = 0; k < temps.size(); ++k) {
    for (const auto& [t, why] : results[k].skipped) {
      *ctx.err << "generate: " << format_temperature(t) << " K skipped: " << why << "\n";
      status = kExitFailure;
    }
    if (results[k].samples.empty()) continue;
    const fs::path f = data / (element + "_" + format_temperature(temps[k]) + "K.xyz");
    write_extxyz(results[k].samples, f);
    files.push_back(f);
  }
  write_manifest(build_manifest(files), ctx.out_dir / "manifest.tsv");
  *ctx.out << "wrote " << files.size() << " files to " << data.string() << "\n";
  finish(ctx, "generate");
  return status;
}

// ---------------------------------------------------------------- train

int cmd_train(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const std::string element = cfg.str("train.element");
  const ModelSpec spec = model_spec(cfg, ctx.seed);
  const TrainSpec ts = train_spec(ctx);
  const bool stratify = cfg.flag("train.stratify");
  auto pool = load_pool_arg(cfg, cfg.str("data.pool"), element, ctx.seed);
  const std::size_t groups = temperature_groups(pool);
  const std::size_t n_val = groups * cfg.integer("train.validation_per_temperature");
  const std::size_t n_test = groups * cfg.integer("train.test_per_temperature");
  if (n_val < 1) throw UsageError("train: validation set would be empty");
  if (n_val + n_test >= pool.size()) throw UsageError("train: pool too small for the requested splits");
  const Split outer = make_splits(pool, n_test, n_val, ctx.seed, stratify);
  const auto test = select(pool, outer.train);
  const auto val = select(pool, outer.validation);
  auto rest = select(pool, outer.rest);
  std::string split_id = outer.id;
  const auto n_train = static_cast<std::size_t>(cfg.integer("train.n_train"));
  if (n_train > 0) {
    if (n_train > rest.size()) throw UsageError("train: n_train exceeds the remaining pool");
    const Split inner = make_splits(rest, n_train, 0, derive_seed(ctx.seed, 2), stratify);
    rest = select(rest, inner.train);
    split_id += "+" + inner.id;
  }
  if (ctx.dry_run) {
    *ctx.out << "train " << element << ": " << rest.size() << " train / " << val.size()
             << " validation / " << test.size() << " test, " << ts.hyperparameter_grid.size()
             << " grid points, <= " << ts.max_epochs << " epochs, "
             << parameter_count(spec, 1) << " parameters, <= "
             << static_cast<long long>(ts.hyperparameter_grid.size()) * ts.max_epochs *
                    (rest.size() + val.size())
             << " configuration evaluations\n";
    return kExitOk;
  }
  PretrainResult r = pretrain(element, rest, val, test, spec, ts);
  r.params.metadata["split_id"] = split_id;
  fs::create_directories(ctx.out_dir);
  save_model(r.params, ctx.out_dir / "model.json");
  write_train_report(r.search.best.report, ctx.out_dir / "report.csv");
  write_csv(candidates_table(r.search.candidates), ctx.out_dir / "candidates.csv");
  CsvTable metrics;
  metrics.columns = {"element", "n_train", "n_validation", "n_test", "split_id",
                     "test_force_mae_meV_A", "test_energy_mae_meV_atom"};
  metrics.add_row({element, fmt(rest.size()), fmt(val.size()), fmt(test.size()), split_id,
                   fmt(r.test_force_mae), fmt(r.test_energy_mae)});
  write_csv(metrics, ctx.out_dir / "metrics.csv");
  *ctx.out << "test force MAE " << fmt(r.test_force_mae) << " meV/A, energy MAE "
           << fmt(r.test_energy_mae) << " meV/atom\n";
  finish(ctx, "train");
  return kExitOk;
}

// ---------------------------------------------------------------- transfer / matrix

TransferPlan transfer_plan(Context& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.str("transfer.source").empty()) throw UsageError("--source checkpoint is required");
  TransferPlan plan;
  plan.source_model = load_model(cfg.str("transfer.source"));
  plan.source_element = plan.source_model.elements.front();
  plan.target_element = cfg.str("transfer.target_element");
  if (cfg.any_set("model")) plan.expected_spec = model_spec(cfg, ctx.seed);
  plan.train_spec = train_spec(ctx);
  plan.n_validation = static_cast<int>(cfg.integer("transfer.n_validation"));
  plan.stratify = cfg.flag("train.stratify");
  plan.seed = ctx.seed;
  plan.workers = ctx.workers;
  auto pool = load_pool_arg(cfg, cfg.str("data.pool"), plan.target_element, ctx.seed);
  if (!cfg.str("data.test_pool").empty()) {
    plan.target_pool = std::move(pool);
    plan.target_test = load_pool_arg(cfg, cfg.str("data.test_pool"), plan.target_element,
                                     derive_seed(ctx.seed, 1));
  } else {
    const std::size_t n_test =
        temperature_groups(pool) * cfg.integer("transfer.test_per_temperature");
    if (n_test < 1 || n_test >= pool.size()) throw UsageError("pool too small for the test hold-out");
    const Split held = make_splits(pool, n_test, 0, derive_seed(ctx.seed, 0x7e57), plan.stratify);
    plan.target_test = select(pool, held.train);
    plan.target_pool = select(pool, held.rest);
  }
  return plan;
}

void print_plan(const Context& ctx, const TransferPlan& plan, const std::string& what) {
  const std::size_t reps = plan.replicas.empty() ? plan.n_replicas : plan.replicas.size();
  const std::size_t cells = plan.target_train_sizes.size() * reps * plan.arms.size();
  long long evals = 0;
  for (int s : plan.target_train_sizes) {
    evals += static_cast<long long>(reps * plan.arms.size()) *
             plan.train_spec.hyperparameter_grid.size() * plan.train_spec.max_epochs *
             (s + plan.n_validation);
  }
  *ctx.out << what << " " << plan.source_element << " -> " << plan.target_element << ": " << cells
           << " cells (" << plan.target_train_sizes.size() << " sizes x " << reps
           << " replicas x " << plan.arms.size() << " arms), "
           << plan.train_spec.hyperparameter_grid.size() << " grid points per cell, pool "
           << plan.target_pool.size() << ", test " << plan.target_test.size() << ", <= " << evals
           << " configuration evaluations\n";
}

void report_failures(const Context& ctx, const ExperimentMatrix& m) {
  for (const auto& c : m.cells) {
    if (!c.failure.empty()) {
      *ctx.err << "cell size " << c.train_size << " replica " << c.replica << " "
               << to_string(c.arm) << " failed: " << c.failure << "\n";
    }
  }
}

int cmd_transfer(Context& ctx) {
  TransferPlan plan = transfer_plan(ctx);
  plan.target_train_sizes = {static_cast<int>(ctx.cfg.integer("transfer.train_size"))};
  plan.replicas = {static_cast<int>(ctx.cfg.integer("transfer.replica"))};
  try {
    plan.arms = {arm_from_string(ctx.cfg.str("transfer.arm"))};
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  plan.validate();
  if (ctx.dry_run) {
    print_plan(ctx, plan, "transfer");
    return kExitOk;
  }
  plan.output_dir = ctx.out_dir;
  const ExperimentMatrix m = run_matrix(plan);
  report_failures(ctx, m);
  for (const auto& c : m.cells) {
    if (c.failure.empty()) {
      *ctx.out << to_string(c.arm) << " size " << c.train_size << ": test force MAE "
               << fmt(c.force_mae) << " meV/A, energy MAE " << fmt(c.energy_mae) << " meV/atom\n";
    }
  }
  finish(ctx, "transfer");
  return m.all_succeeded() ? kExitOk : kExitFailure;
}

int cmd_matrix(Context& ctx) {
  TransferPlan plan = transfer_plan(ctx);
  plan.target_train_sizes = ctx.cfg.int_list("transfer.train_sizes");
  plan.n_replicas = static_cast<int>(ctx.cfg.integer("transfer.replicas"));
  plan.validate();
  if (ctx.dry_run) {
    print_plan(ctx, plan, "matrix");
    return kExitOk;
  }
  plan.output_dir = ctx.out_dir;
  const ExperimentMatrix m = run_matrix(plan);
  report_failures(ctx, m);
  write_matrix_report(m, ctx.out_dir / "matrix_report.csv");
  for (int s : plan.target_train_sizes) {
    *ctx.out << "size " << s << ": tl " << fmt(m.mean_force_mae(s, Arm::Transfer))
             << " meV/A, scratch " << fmt(m.mean_force_mae(s, Arm::Scratch)) << " meV/A\n";
  }
  finish(ctx, "matrix");
  return m.all_succeeded() ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- simulate

IntegratorSpec md_integrator(const RunConfig& cfg) {
  IntegratorSpec s;
  try {
    s.ensemble = ensemble_from_string(cfg.str("md.ensemble"));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  s.timestep = cfg.num("md.timestep");
  s.target_temperature = cfg.num("md.temperature");
  s.target_pressure = cfg.num("md.pressure");
  s.thermostat_damping = cfg.num("md.thermostat_damping");
  s.barostat_damping = cfg.num("md.barostat_damping");
  s.langevin_friction = cfg.num("md.friction");
  s.neighbor_skin = cfg.num("md.skin");
  try {
    s.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return s;
}

int cmd_simulate(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const IntegratorSpec spec = md_integrator(cfg);
  const auto potential = load_potential(cfg.str("md.potential"));
  const std::string element =
      cfg.str("md.element").empty() ? potential_element(*potential) : cfg.str("md.element");
  const long long steps = cfg.integer("md.steps");
  const long long every = cfg.integer("md.sample_every");
  if (steps < 1 || every < 1) throw UsageError("md.steps and md.sample_every must be >= 1");
  Configuration start =
      initial_structure(cfg, "md.structure", element, static_cast<int>(cfg.integer("md.replicas")),
                        cfg.num("md.lattice_constant"), static_cast<long>(cfg.integer("md.frame")));
  if (ctx.dry_run) {
    *ctx.out << "simulate " << potential->name() << ": " << start.size() << " atoms, "
             << to_string(spec.ensemble) << " at " << format_temperature(spec.target_temperature)
             << " K, " << steps << " steps of " << spec.timestep << " fs, " << steps / every
             << " frames\n";
    return kExitOk;
  }
  const MDState state = initialize_state(start, spec.target_temperature, ctx.seed, *potential);
  std::vector<Configuration> frames;
  CsvTable thermo;
  thermo.columns = {"step", "time_fs", "potential_energy_eV", "temperature_K", "pressure_bar",
                    "volume_A3"};
  RunOptions opts;
  opts.keep_frames = false;
  opts.on_frame = [&](const TrajectoryFrame& f) {
    Configuration c = f.configuration;
    c.energy = f.potential_energy;
    c.forces = f.forces;
    c.provenance = potential->name();
    frames.push_back(std::move(c));
    thermo.add_row({fmt(static_cast<long long>(f.step)), fmt(f.time_fs), fmt(f.potential_energy),
                    fmt(f.kinetic_temperature), fmt(f.pressure), fmt(f.volume)});
  };
  const TrajectoryRecord rec = run(state, spec, steps, every, *potential, opts);
  fs::create_directories(ctx.out_dir);
  write_extxyz(frames, ctx.out_dir / "trajectory.xyz");
  write_csv(thermo, ctx.out_dir / "thermo.csv");
  CsvTable summary;
  summary.columns = {"completed", "diverged_at", "min_distance_A", "failure"};
  summary.add_row({rec.completed ? "1" : "0",
                   rec.diverged_at ? fmt(static_cast<long long>(*rec.diverged_at)) : "",
                   fmt(rec.min_distance), rec.failure});
  write_csv(summary, ctx.out_dir / "summary.csv");
  finish(ctx, "simulate");
  if (!rec.completed) {
    *ctx.err << "simulation diverged at step " << *rec.diverged_at << ": " << rec.failure << "\n";
    return kExitFailure;
  }
  *ctx.out << "wrote " << frames.size() << " frames, closest approach " << fmt(rec.min_distance)
           << " A\n";
  return kExitOk;
}

// ---------------------------------------------------------------- analyze

int recipe_fig2(Context& ctx) {
  const std::string dir = ctx.cfg.str("analyze.matrix");
  if (dir.empty()) throw UsageError("fig2 needs --matrix");
  if (ctx.dry_run) {
    *ctx.out << "fig2: aggregate " << dir << "/index.csv\n";
    return kExitOk;
  }
  const ExperimentMatrix m = load_matrix(dir);
  std::set<int> sizes;
  for (const auto& c : m.cells) sizes.insert(c.train_size);
  CsvTable t;
  t.columns = {"train_size", "arm", "n", "force_mae_mean", "force_mae_sd", "energy_mae_mean",
               "energy_mae_sd"};
  for (int s : sizes) {
    for (Arm arm : {Arm::Transfer, Arm::Scratch}) {
      std::vector<double> f, e;
      for (const auto& c : m.cells) {
        if (c.train_size == s && c.arm == arm && c.failure.empty()) {
          f.push_back(c.force_mae);
          e.push_back(c.energy_mae);
        }
      }
      auto mean_sd = [](const std::vector<double>& v) -> std::pair<double, double> {
        if (v.empty()) return {std::nan(""), std::nan("")};
        const double mu = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
        double ss = 0.0;
        for (double x : v) ss += (x - mu) * (x - mu);
        return {mu, v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : 0.0};
      };
      const auto [fm, fs_] = mean_sd(f);
      const auto [em, es] = mean_sd(e);
      t.add_row({fmt(s), to_string(arm), fmt(f.size()), fmt(fm), fmt(fs_), fmt(em), fmt(es)});
    }
  }
  fs::create_directories(ctx.out_dir);
  write_csv(t, ctx.out_dir / "fig2.csv");
  finish(ctx, "analyze-fig2");
  return kExitOk;
}

int recipe_fig3(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto groups = model_groups(cfg);
  const std::string element = cfg.str("analyze.element");
  PDOSOptions opt;
  opt.displacement = cfg.num("analyze.pdos_displacement");
  opt.smearing = cfg.num("analyze.pdos_smearing");
  opt.workers = ctx.workers;
  std::size_t n_models = 0;
  for (const auto& g : groups) n_models += g.models.size();
  if (ctx.dry_run) {
    *ctx.out << "fig3: relax " << element << " 2x2x2 supercell, PDOS for the reference and "
             << n_models << " models, " << 2 * 64 * 3 * (n_models + 1) << " force evaluations\n";
    return kExitOk;
  }
  const SWPotential sw(default_parameters(Species::from_symbol(element)));
  const RelaxResult relaxed = relax_lattice(sw, element, nominal_lattice_constant(element));
  const Configuration cell = add_position_noise(diamond_lattice(element, relaxed.lattice_constant, 2),
                                                cfg.num("analyze.pdos_noise"), ctx.seed);
  const auto reference = load_potential(cfg.str("analyze.reference"));
  const PDOSResult ref = pdos(*reference, cell, opt);

  CsvTable curves, summary;
  curves.columns = {"frequency_THz", "reference"};
  summary.columns = {"group", "model", "l1_distance", "acoustic_modes", "imaginary_modes",
                     "warnings"};
  auto count_modes = [](const PDOSResult& r) {
    int acoustic = 0, imaginary = 0;
    for (double f : r.modes) {
      if (std::abs(f) < 0.1) ++acoustic;
      if (f < -0.1) ++imaginary;
    }
    return std::pair{acoustic, imaginary};
  };
  auto join = [](const std::vector<std::string>& w) {
    std::string s;
    for (const auto& x : w) s += (s.empty() ? "" : "; ") + x;
    return s;
  };
  const auto [ra, ri] = count_modes(ref);
  summary.add_row({"reference", cfg.str("analyze.reference"), "0", fmt(ra), fmt(ri), join(ref.warnings)});
  std::vector<PDOSResult> results;
  for (const auto& g : groups) {
    for (const auto& m : g.models) {
      const NeuralPotential nn(load_model(m));
      results.push_back(pdos(nn, relabeled(cell, element), opt));
      const auto [a, i] = count_modes(results.back());
      curves.columns.push_back(g.label + ":" + m.generic_string());
      summary.add_row({g.label, m.generic_string(), fmt(pdos_l1_distance(results.back(), ref)),
                       fmt(a), fmt(i), join(results.back().warnings)});
    }
  }
  for (std::size_t k = 0; k < ref.frequency.size(); ++k) {
    std::vector<std::string> row{fmt(ref.frequency[k]), fmt(ref.density[k])};
    for (const auto& r : results) row.push_back(fmt(r.density[k]));
    curves.add_row(std::move(row));
  }
  curves.meta("lattice_constant_A", fmt(relaxed.lattice_constant));
  curves.meta("smearing_THz", fmt(opt.smearing));
  fs::create_directories(ctx.out_dir);
  write_csv(curves, ctx.out_dir / "fig3_pdos.csv");
  write_csv(summary, ctx.out_dir / "fig3_summary.csv");
  finish(ctx, "analyze-fig3");
  return kExitOk;
}

int recipe_fig4(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto groups = model_groups(cfg);
  const auto temps = parse_temperatures(cfg.str("analyze.temps"));
  const auto per_t = static_cast<std::size_t>(cfg.integer("analyze.samples_per_t"));
  if (ctx.dry_run) {
    *ctx.out << "fig4: " << groups.size() << " groups x " << temps.size() << " temperatures x "
             << per_t << " samples per model\n";
    return kExitOk;
  }
  const auto pool = load_pool_arg(cfg, cfg.str("data.pool"), cfg.str("analyze.element"), ctx.seed);
  CsvTable stats, samples;
  stats.columns = {"group", "temperature_K", "n", "median", "q1", "q3", "whisker_low",
                   "whisker_high", "n_outliers"};
  samples.columns = {"group", "model", "temperature_K", "sample", "force_mae_meV_A"};
  for (const auto& g : groups) {
    std::vector<std::vector<double>> pooled(temps.size());
    for (const auto& m : g.models) {
      const NeuralPotential nn(load_model(m));
      const auto rows = temperature_sweep(nn, pool, temps, per_t, ctx.workers);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        for (std::size_t s = 0; s < rows[k].per_sample.size(); ++s) {
          samples.add_row({g.label, m.generic_string(), fmt(rows[k].temperature), fmt(s),
                           fmt(rows[k].per_sample[s])});
        }
        pooled[k].insert(pooled[k].end(), rows[k].per_sample.begin(), rows[k].per_sample.end());
      }
    }
    for (std::size_t k = 0; k < temps.size(); ++k) {
      const BoxStats b = box_stats(pooled[k]);
      stats.add_row({g.label, fmt(temps[k]), fmt(pooled[k].size()), fmt(b.median), fmt(b.q1),
                     fmt(b.q3), fmt(b.whisker_low), fmt(b.whisker_high), fmt(b.outliers.size())});
    }
  }
  fs::create_directories(ctx.out_dir);
  write_csv(stats, ctx.out_dir / "fig4.csv");
  write_csv(samples, ctx.out_dir / "fig4_samples.csv");
  finish(ctx, "analyze-fig4");
  return kExitOk;
}

IntegratorSpec analysis_integrator(const RunConfig& cfg) {
  IntegratorSpec s{cfg.num("analyze.timestep"), Ensemble::NVT_Langevin,
                   cfg.num("analyze.temperature")};
  s.langevin_friction = cfg.num("analyze.friction");
  s.neighbor_skin = 0.5;
  s.validate();
  return s;
}

// Runs per group are spread round-robin over the group's models.
std::vector<std::pair<std::size_t, int>> run_assignment(const ModelGroup& g, int runs) {
  std::vector<std::pair<std::size_t, int>> out;  // (model, run count)
  for (std::size_t m = 0; m < g.models.size(); ++m) {
    const int n = runs / static_cast<int>(g.models.size()) +
                  (static_cast<int>(m) < runs % static_cast<int>(g.models.size()) ? 1 : 0);
    if (n > 0) out.emplace_back(m, n);
  }
  return out;
}

int recipe_table1(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto groups = model_groups(cfg);
  const int runs = static_cast<int>(cfg.integer("analyze.runs"));
  const double duration = parse_duration_ps(cfg.str("analyze.duration"));
  const IntegratorSpec integ = analysis_integrator(cfg);
  if (runs < 1 || !(duration > 0.0)) throw UsageError("table1: runs and duration must be positive");
  if (ctx.dry_run) {
    const long long steps = std::llround(duration * 1000.0 / integ.timestep);
    *ctx.out << "table1: " << groups.size() << " groups x " << runs << " runs x " << steps
             << " steps at " << format_temperature(integ.target_temperature) << " K\n";
    return kExitOk;
  }
  CsvTable table, detail;
  table.columns = {"group", "runs", "successes", "rdf_violations", "diverged"};
  detail.columns = {"group", "model", "run", "seed", "outcome", "min_distance_A", "diverged_at"};
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    int ok = 0, viol = 0, div = 0, idx = 0;
    for (const auto& [m, n] : run_assignment(g, runs)) {
      const NeuralPotential nn(load_model(g.models[m]));
      const std::string element = nn.parameters().elements.back();
      const Configuration start = initial_structure(cfg, "analyze.structure", element, 2, 0.0);
      CensusOptions opt;
      opt.n_runs = n;
      opt.duration_ps = duration;
      opt.threshold = cfg.num("analyze.threshold");
      opt.integrator = integ;
      opt.seed = derive_seed(ctx.seed, m);
      opt.workers = ctx.workers;
      const StabilityCensus census = stability_census(nn, relabeled(start, element), opt);
      ok += census.successes();
      viol += census.count(RunOutcome::RdfViolation);
      div += census.count(RunOutcome::Diverged);
      for (const auto& r : census.runs) {
        detail.add_row({g.label, g.models[m].generic_string(), fmt(idx++), std::to_string(r.seed),
                        to_string(r.outcome), fmt(r.min_distance),
                        r.diverged_at ? fmt(static_cast<long long>(*r.diverged_at)) : ""});
      }
    }
    table.add_row({g.label, fmt(runs), fmt(ok), fmt(viol), fmt(div)});
    *ctx.out << g.label << ": " << ok << " / " << runs << " successful\n";
  }
  table.meta("duration_ps", fmt(duration));
  table.meta("temperature_K", fmt(integ.target_temperature));
  table.meta("threshold_A", fmt(cfg.num("analyze.threshold")));
  fs::create_directories(ctx.out_dir);
  write_csv(table, ctx.out_dir / "table1.csv");
  write_csv(detail, ctx.out_dir / "table1_runs.csv");
  finish(ctx, "analyze-table1");
  return kExitOk;
}

int recipe_fig6(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto groups = model_groups(cfg);
  const int runs = static_cast<int>(cfg.integer("analyze.runs"));
  const double duration = parse_duration_ps(cfg.str("analyze.duration"));
  const IntegratorSpec integ = analysis_integrator(cfg);
  const long long steps = std::llround(duration * 1000.0 / integ.timestep);
  const long long every = cfg.integer("analyze.sample_every");
  const double discard = cfg.num("analyze.discard");
  const double threshold = cfg.num("analyze.threshold");
  if (runs < 1 || steps < every || every < 1) throw UsageError("fig6: bad run length settings");
  if (ctx.dry_run) {
    *ctx.out << "fig6: " << groups.size() << " groups x " << runs << " runs x " << steps
             << " steps, " << steps / every << " frames per run\n";
    return kExitOk;
  }
  struct Outcome {
    std::string model;
    bool ok = false;
    double min_distance = 0.0;
    std::vector<Configuration> frames;
  };
  const double bin = cfg.num("analyze.rdf_bin");
  const int adf_bins = static_cast<int>(cfg.integer("analyze.adf_bins"));
  CsvTable rdf_csv, adf_csv, run_csv;
  run_csv.columns = {"group", "model", "run", "used", "min_distance_A"};
  std::vector<std::vector<RDFResult>> rdfs(groups.size());
  std::vector<std::vector<ADFResult>> adfs(groups.size());
  double adf_cut = cfg.num("analyze.adf_cutoff");
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    std::vector<std::pair<std::size_t, int>> jobs;  // (model, run index within model)
    for (const auto& [m, n] : run_assignment(g, runs)) {
      for (int k = 0; k < n; ++k) jobs.emplace_back(m, k);
    }
    std::vector<std::unique_ptr<NeuralPotential>> models;
    for (const auto& m : g.models) models.push_back(std::make_unique<NeuralPotential>(load_model(m)));
    std::vector<Outcome> outcomes(jobs.size());
    parallel_for(jobs.size(), ctx.workers, [&](std::size_t j) {
      const auto [m, k] = jobs[j];
      const NeuralPotential& nn = *models[m];
      const std::string element = nn.parameters().elements.back();
      const Configuration start =
          relabeled(initial_structure(cfg, "analyze.structure", element, 2, 0.0), element);
      const MDState s0 = initialize_state(start, integ.target_temperature,
                                          derive_seed(derive_seed(ctx.seed, m), k), nn);
      Outcome& o = outcomes[j];
      o.model = g.models[m].generic_string();
      RunOptions ro;
      ro.keep_frames = false;
      ro.on_frame = [&](const TrajectoryFrame& f) {
        if (f.step > discard * steps) o.frames.push_back(f.configuration);
      };
      const TrajectoryRecord rec = run(s0, integ, steps, every, nn, ro);
      o.min_distance = rec.min_distance;
      o.ok = rec.completed && rec.min_distance >= threshold;
    });
    for (std::size_t j = 0; j < outcomes.size(); ++j) {
      run_csv.add_row({g.label, outcomes[j].model, fmt(j), outcomes[j].ok ? "1" : "0",
                       fmt(outcomes[j].min_distance)});
      if (!outcomes[j].ok || outcomes[j].frames.empty()) continue;
      const double r_max =
          std::min(cfg.num("analyze.rdf_max"), 0.5 * outcomes[j].frames.front().cell.min_height());
      rdfs[gi].push_back(rdf(outcomes[j].frames, bin, r_max));
      if (!(adf_cut > 0.0)) adf_cut = first_rdf_minimum(rdfs[gi].back(), 3.0);
      adfs[gi].push_back(adf(outcomes[j].frames, adf_cut, adf_bins));
    }
  }
  rdf_csv.columns = {"r_A"};
  adf_csv.columns = {"angle_deg"};
  std::vector<std::pair<std::vector<double>, std::vector<double>>> rdf_bands, adf_bands;
  const RDFResult* rdf_grid = nullptr;
  const ADFResult* adf_grid = nullptr;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    if (rdfs[gi].empty()) {
      *ctx.err << "fig6: no usable runs for " << groups[gi].label << "\n";
      continue;
    }
    rdf_grid = &rdfs[gi].front();
    adf_grid = &adfs[gi].front();
    rdf_csv.columns.push_back(groups[gi].label + "_mean");
    rdf_csv.columns.push_back(groups[gi].label + "_sd");
    adf_csv.columns.push_back(groups[gi].label + "_mean");
    adf_csv.columns.push_back(groups[gi].label + "_sd");
    rdf_bands.push_back(rdf_band(rdfs[gi]));
    std::vector<double> mean(adfs[gi].front().density.size(), 0.0), sd(mean.size(), 0.0);
    for (const auto& a : adfs[gi]) {
      for (std::size_t b = 0; b < mean.size(); ++b) mean[b] += a.density[b] / adfs[gi].size();
    }
    for (const auto& a : adfs[gi]) {
      for (std::size_t b = 0; b < mean.size(); ++b) {
        sd[b] += (a.density[b] - mean[b]) * (a.density[b] - mean[b]) / adfs[gi].size();
      }
    }
    for (double& v : sd) v = std::sqrt(v);
    adf_bands.emplace_back(mean, sd);
  }
  if (rdf_grid) {
    for (std::size_t b = 0; b < rdf_grid->r.size(); ++b) {
      std::vector<std::string> row{fmt(rdf_grid->r[b])};
      for (const auto& [m, s] : rdf_bands) {
        row.push_back(b < m.size() ? fmt(m[b]) : "");
        row.push_back(b < s.size() ? fmt(s[b]) : "");
      }
      rdf_csv.add_row(std::move(row));
    }
    for (std::size_t b = 0; b < adf_grid->angle.size(); ++b) {
      std::vector<std::string> row{fmt(adf_grid->angle[b])};
      for (const auto& [m, s] : adf_bands) {
        row.push_back(fmt(m[b]));
        row.push_back(fmt(s[b]));
      }
      adf_csv.add_row(std::move(row));
    }
  }
  adf_csv.meta("triplet_cutoff_A", fmt(adf_cut));
  fs::create_directories(ctx.out_dir);
  write_csv(rdf_csv, ctx.out_dir / "fig6_rdf.csv");
  write_csv(adf_csv, ctx.out_dir / "fig6_adf.csv");
  write_csv(run_csv, ctx.out_dir / "fig6_runs.csv");
  finish(ctx, "analyze-fig6");
  return kExitOk;
}

const std::map<std::string, std::function<int(Context&)>>& recipes() {
  static const std::map<std::string, std::function<int(Context&)>> r = {
      {"fig2", recipe_fig2}, {"fig3", recipe_fig3},     {"fig4", recipe_fig4},
      {"fig6", recipe_fig6}, {"table1", recipe_table1},
  };
  return r;
}

std::string recipe_list() {
  std::string s;
  for (const auto& [name, fn] : recipes()) s += (s.empty() ? "" : ", ") + name;
  return s;
}

// ---------------------------------------------------------------- report

int cmd_report(Context& ctx, const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("report: " + dir.string() + " is not a directory");
  int status = kExitOk;
  const fs::path manifest = dir / "MANIFEST.tsv";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::string line;
    int checked = 0, bad = 0;
    while (std::getline(in, line)) {
      if (line.rfind("file\t", 0) != 0) continue;
      const auto a = line.find('\t', 5);
      const std::string rel = line.substr(5, a - 5);
      const std::string hash = line.substr(a + 1);
      ++checked;
      if (!fs::exists(dir / rel) || sha256_file(dir / rel) != hash) {
        *ctx.err << "report: " << rel << " does not match the run manifest\n";
        ++bad;
      }
    }
    *ctx.out << "manifest: " << checked - bad << " / " << checked << " files verified\n";
    if (bad > 0) status = kExitFailure;
  }
  if (fs::exists(dir / "index.csv")) {
    const ExperimentMatrix m = load_matrix(dir);
    std::set<int> sizes;
    for (const auto& c : m.cells) sizes.insert(c.train_size);
    CsvTable t;
    t.columns = {"train_size", "tl_force_mae", "scratch_force_mae", "tl_advantage",
                 "tl_energy_mae", "scratch_energy_mae"};
    *ctx.out << std::left << std::setw(8) << "size" << std::setw(14) << "tl meV/A" << std::setw(14)
             << "scratch" << "advantage\n";
    for (int s : sizes) {
      const double tl = m.mean_force_mae(s, Arm::Transfer);
      const double sc = m.mean_force_mae(s, Arm::Scratch);
      const double adv = 1.0 - tl / sc;
      t.add_row({fmt(s), fmt(tl), fmt(sc), fmt(adv), fmt(m.mean_energy_mae(s, Arm::Transfer)),
                 fmt(m.mean_energy_mae(s, Arm::Scratch))});
      *ctx.out << std::setw(8) << s << std::setw(14) << fmt(tl) << std::setw(14) << fmt(sc)
               << fmt(100.0 * adv) << " %\n";
    }
    if (!ctx.dry_run) write_csv(t, dir / "summary.csv");
    if (!m.all_succeeded()) status = kExitFailure;
  }
  return status;
}

// ---------------------------------------------------------------- wiring

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // config key -> value
  std::optional<std::string> out, seed, workers;
  bool dry_run = false;
  bool paper_scale = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "INI configuration file");
  sub->add_option("--set", c.sets, "override a configuration key (section.key=value)")
      ->allow_extra_args(false);
  sub->add_option_function<std::string>(
      "--out", [&c](const std::string& v) { c.out = v; }, "run directory");
  sub->add_option_function<std::string>(
      "--seed", [&c](const std::string& v) { c.seed = v; }, "global seed");
  sub->add_option_function<std::string>(
      "--workers", [&c](const std::string& v) { c.workers = v; }, "worker threads");
  sub->add_flag("--dry-run", c.dry_run, "print the resolved plan without computing");
  sub->add_flag("--paper-scale", c.paper_scale, "use the full published settings");
}

void bind(CLI::App* sub, Common& c, const std::string& flag, const std::string& key) {
  const auto& info = RunConfig::registry().at(key);
  sub->add_option_function<std::string>(
      flag, [&c, key](const std::string& v) { c.flags[key] = v; },
      info.help.empty() ? key : key + ": " + info.help);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-element transfer learning of interatomic potentials", "xfer"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("generate", "simulate SW reference data per temperature");
  bind(gen, common, "--element", "generate.element");
  bind(gen, common, "--temps", "generate.temps");
  bind(gen, common, "--equilibration-steps", "generate.equilibration_steps");
  bind(gen, common, "--production-steps", "generate.production_steps");
  bind(gen, common, "--sample-every", "generate.sample_every");

  auto* trn = app.add_subcommand("train", "train a source model from scratch");
  bind(trn, common, "--pool", "data.pool");
  bind(trn, common, "--element", "train.element");
  bind(trn, common, "--n-train", "train.n_train");
  bind(trn, common, "--max-epochs", "train.max_epochs");

  auto* xfr = app.add_subcommand("transfer", "fine-tune one target model");
  bind(xfr, common, "--source", "transfer.source");
  bind(xfr, common, "--target-element", "transfer.target_element");
  bind(xfr, common, "--pool", "data.pool");
  bind(xfr, common, "--test-pool", "data.test_pool");
  bind(xfr, common, "--train-size", "transfer.train_size");
  bind(xfr, common, "--replica", "transfer.replica");
  bind(xfr, common, "--arm", "transfer.arm");
  bind(xfr, common, "--max-epochs", "train.max_epochs");

  auto* mtx = app.add_subcommand("matrix", "transfer vs scratch over sizes and replicas");
  bind(mtx, common, "--source", "transfer.source");
  bind(mtx, common, "--target-element", "transfer.target_element");
  bind(mtx, common, "--pool", "data.pool");
  bind(mtx, common, "--test-pool", "data.test_pool");
  bind(mtx, common, "--sizes", "transfer.train_sizes");
  bind(mtx, common, "--replicas", "transfer.replicas");
  bind(mtx, common, "--max-epochs", "train.max_epochs");

  auto* sim = app.add_subcommand("simulate", "run molecular dynamics");
  bind(sim, common, "--potential", "md.potential");
  bind(sim, common, "--structure", "md.structure");
  bind(sim, common, "--element", "md.element");
  bind(sim, common, "--ensemble", "md.ensemble");
  bind(sim, common, "--temperature", "md.temperature");
  bind(sim, common, "--steps", "md.steps");
  bind(sim, common, "--sample-every", "md.sample_every");

  std::string recipe;
  auto* ana = app.add_subcommand("analyze", "figure and table recipes: " + recipe_list());
  ana->add_option("recipe", recipe, "one of " + recipe_list())->required();
  bind(ana, common, "--model", "analyze.model");
  bind(ana, common, "--models", "analyze.models");
  bind(ana, common, "--matrix", "analyze.matrix");
  bind(ana, common, "--train-size", "analyze.train_size");
  bind(ana, common, "--reference", "analyze.reference");
  bind(ana, common, "--pool", "data.pool");
  bind(ana, common, "--element", "analyze.element");
  bind(ana, common, "--temps", "analyze.temps");
  bind(ana, common, "--samples-per-t", "analyze.samples_per_t");
  bind(ana, common, "--runs", "analyze.runs");
  bind(ana, common, "--duration", "analyze.duration");
  bind(ana, common, "--structure", "analyze.structure");

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "verify a run directory and summarise a matrix");
  rep->add_option("dir", report_dir, "run directory")->required();

  for (auto* sub : {gen, trn, xfr, mtx, sim, ana, rep}) add_common(sub, common);

  std::vector<std::string> argv_store{"xfer"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      if (const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
        out << sub->help();
      }
      return kExitOk;
    }
    err << "xfer: " << e.what() << "\n";
    return kExitUsage;
  }

  Context ctx;
  ctx.out = &out;
  ctx.err = &err;
  try {
    if (!common.config.empty()) ctx.cfg.load_ini(common.config);
    for (const auto& [k, v] : common.flags) ctx.cfg.set(k, v);
    if (common.out) ctx.cfg.set("run.output_dir", *common.out);
    if (common.seed) ctx.cfg.set("run.seed", *common.seed);
    if (common.workers) ctx.cfg.set("run.workers", *common.workers);
    for (const auto& s : common.sets) ctx.cfg.apply_override(s);
    if (common.paper_scale) ctx.cfg.apply_paper_scale();
    ctx.out_dir = ctx.cfg.str("run.output_dir");
    ctx.seed = static_cast<std::uint64_t>(ctx.cfg.integer("run.seed"));
    ctx.workers = static_cast<int>(ctx.cfg.integer("run.workers"));
    if (ctx.workers < 1) throw UsageError("run.workers must be >= 1");
    ctx.dry_run = common.dry_run;

    if (gen->parsed()) return cmd_generate(ctx);
    if (trn->parsed()) return cmd_train(ctx);
    if (xfr->parsed()) return cmd_transfer(ctx);
    if (mtx->parsed()) return cmd_matrix(ctx);
    if (sim->parsed()) return cmd_simulate(ctx);
    if (rep->parsed()) return cmd_report(ctx, report_dir);
    const auto it = recipes().find(recipe);
    if (it == recipes().end()) {
      throw UsageError("unknown recipe '" + recipe + "'; available recipes: " + recipe_list());
    }
    return it->second(ctx);
  } catch (const UsageError& e) {
    err << "xfer: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "xfer: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace xfer::cli
