#include "xfer/trainer.hpp"

#include "xfer/csv.hpp"
#include "xfer/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

namespace xfer {

std::vector<GridPoint> default_grid() {
  std::vector<GridPoint> g;
  for (double lr : {1e-3, 3e-4, 1e-4}) {
    for (double decay : {1.0, 0.995, 0.99}) g.push_back({lr, decay});
  }
  return g;
}

void TrainSpec::validate() const {
  if (batch_size < 0) throw Error("batch_size must be >= 1 (or 0 for the default)");
  if (max_epochs < 0) throw Error("max_epochs must be >= 0");
  if (!(initial_learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw Error("lr_decay_factor must lie in (0, 1]");
  }
  if (early_stop_patience < 1) throw Error("early_stop_patience must be >= 1");
  for (const auto& g : hyperparameter_grid) {
    if (!(g.learning_rate > 0.0) || !(g.decay > 0.0 && g.decay <= 1.0)) {
      throw Error("invalid hyperparameter grid point");
    }
  }
}

PreparedSample prepare_sample(const ModelSpec& spec, const Configuration& config) {
  if (!config.forces) throw Error("configuration has no reference forces");
  const NeighborList nl = build_neighbor_list(config, spec.cutoff);
  const DescriptorBasis basis = spec.basis();
  PreparedSample s;
  s.n_atoms = static_cast<int>(config.size());
  s.species = config.species;
  s.descriptors = basis.compute(nl, s.n_atoms);
  s.jacobian = basis.jacobian(nl, s.n_atoms);
  s.pair_i.reserve(nl.pairs().size());
  s.pair_j.reserve(nl.pairs().size());
  for (const auto& p : nl.pairs()) {
    s.pair_i.push_back(p.i);
    s.pair_j.push_back(p.j);
  }
  s.reference_forces = *config.forces;
  s.reference_energy = config.energy;
  return s;
}

std::vector<PreparedSample> prepare_samples(const ModelSpec& spec,
                                            const std::vector<Configuration>& configs,
                                            int workers) {
  std::vector<PreparedSample> out(configs.size());
  parallel_for(configs.size(), workers,
               [&](std::size_t k) { out[k] = prepare_sample(spec, configs[k]); });
  return out;
}

namespace {

std::vector<int> sample_species(const ModelParameters& p, const PreparedSample& s) {
  std::vector<int> idx(s.species.size());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    idx[a] = p.element_index(s.species[a]);
    if (idx[a] < 0) throw Error("model has no embedding for species '" + s.species[a] + "'");
  }
  return idx;
}

struct SampleForward {
  std::vector<int> species;
  NetworkCache cache;
  Eigen::RowVectorXd atom_energy;
  Forces forces;
};

SampleForward forward_sample(const ModelParameters& p, const PreparedSample& s) {
  SampleForward f;
  f.species = sample_species(p, s);
  const int nd = p.spec.descriptor_size();
  f.atom_energy = network_forward(p, network_input(p, s.descriptors, f.species), f.cache);
  const Eigen::MatrixXd g = (network_input_gradient(p, f.cache).topRows(nd).array().colwise() /
                             p.input_scale.array())
                                .matrix();
  f.forces = Forces::Zero(3, s.n_atoms);
  const std::size_t np = s.pair_i.size();
  for (std::size_t k = 0; k < np; ++k) {
    const Vec3 v = s.jacobian.middleCols(3 * k, 3).transpose() * g.col(s.pair_i[k]);
    f.forces.col(s.pair_i[k]) += v;
    f.forces.col(s.pair_j[k]) -= v;
  }
  return f;
}

// Loss of one configuration and, when `grad` is given, weight * dLoss/dtheta
// accumulated in model-parameter shape.
double sample_loss(const ModelParameters& p, const PreparedSample& s, double weight,
                   ModelParameters* grad) {
  SampleForward f = forward_sample(p, s);
  const Forces diff = f.forces - s.reference_forces;
  const double norm = 1.0 / (3.0 * s.n_atoms);
  const double loss = diff.squaredNorm() * norm;
  if (!grad) return loss;

  const int nd = p.spec.descriptor_size();
  const int ne = p.spec.embedding_dim;
  const Forces dF = (2.0 * norm * weight) * diff;
  // Tangent direction in descriptor space: u_i = sum_p J_p (dF_i - dF_j).
  Eigen::MatrixXd xdot = Eigen::MatrixXd::Zero(nd + ne, s.n_atoms);
  for (std::size_t k = 0; k < s.pair_i.size(); ++k) {
    const Vec3 w = dF.col(s.pair_i[k]) - dF.col(s.pair_j[k]);
    xdot.col(s.pair_i[k]).head(nd) += s.jacobian.middleCols(3 * k, 3) * w;
  }
  xdot.topRows(nd).array().colwise() /= p.input_scale.array();

  const std::size_t nh = p.layers.size() - 1;
  const auto& cache = f.cache;
  std::vector<Eigen::MatrixXd> hdot(nh + 1), zdot(nh);
  std::vector<Eigen::ArrayXXd> curv(nh);
  hdot[0] = std::move(xdot);
  for (std::size_t l = 0; l < nh; ++l) {
    zdot[l].noalias() = p.layers[l].weight * hdot[l];
    hdot[l + 1] = (cache.slope[l] * zdot[l].array()).matrix();
    activation_eval(p.spec.activation, cache.pre[l].array(), nullptr, nullptr, &curv[l]);
  }

  const auto& out = p.layers.back();
  grad->layers.back().weight += hdot[nh].rowwise().sum().transpose();
  Eigen::MatrixXd hdot_bar = out.weight.transpose().replicate(1, s.n_atoms);
  Eigen::MatrixXd h_bar = Eigen::MatrixXd::Zero(hdot_bar.rows(), s.n_atoms);
  for (std::size_t l = nh; l-- > 0;) {
    const Eigen::ArrayXXd zdot_bar = hdot_bar.array() * cache.slope[l];
    const Eigen::ArrayXXd z_bar =
        h_bar.array() * cache.slope[l] + hdot_bar.array() * curv[l] * zdot[l].array();
    auto& gl = grad->layers[l];
    gl.weight.noalias() += zdot_bar.matrix() * hdot[l].transpose();
    gl.weight.noalias() += z_bar.matrix() * cache.post[l].transpose();
    gl.bias += z_bar.matrix().rowwise().sum();
    hdot_bar.noalias() = p.layers[l].weight.transpose() * zdot_bar.matrix();
    h_bar.noalias() = p.layers[l].weight.transpose() * z_bar.matrix();
  }
  for (int a = 0; a < s.n_atoms; ++a) {
    grad->embedding.col(f.species[a]) += h_bar.col(a).tail(ne);
  }
  return loss;
}

ModelParameters zero_like(const ModelParameters& p) {
  ModelParameters z = p;
  z.embedding.setZero();
  for (auto& l : z.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return z;
}

}  // namespace

Forces predict_forces(const ModelParameters& params, const PreparedSample& sample) {
  return forward_sample(params, sample).forces;
}

double force_matching_loss(const ModelParameters& params, std::span<const PreparedSample> batch) {
  if (batch.empty()) throw Error("empty batch");
  double acc = 0.0;
  for (const auto& s : batch) acc += sample_loss(params, s, 1.0, nullptr);
  return acc / static_cast<double>(batch.size());
}

double force_matching_loss(const ModelParameters& params, const std::vector<Configuration>& batch) {
  for (const auto& c : batch) {
    if (!c.forces) throw Error("configuration has no reference forces");
  }
  const auto samples = prepare_samples(params.spec, batch);
  return force_matching_loss(params, std::span<const PreparedSample>(samples));
}

LossGradient loss_and_gradient(const ModelParameters& params, std::span<const PreparedSample> batch,
                               int workers) {
  if (batch.empty()) throw Error("empty batch");
  const double weight = 1.0 / static_cast<double>(batch.size());
  std::vector<double> losses(batch.size());
  std::vector<Eigen::VectorXd> grads(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t k) {
    ModelParameters g = zero_like(params);
    losses[k] = sample_loss(params, batch[k], weight, &g);
    grads[k] = flatten(g);
  });
  LossGradient out;
  out.gradient = Eigen::VectorXd::Zero(grads[0].size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    out.loss += losses[k] * weight;
    out.gradient += grads[k];
  }
  return out;
}

void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state, double lr) {
  if (state.m.size() != theta.size()) {
    state.m = Eigen::VectorXd::Zero(theta.size());
    state.v = Eigen::VectorXd::Zero(theta.size());
    state.t = 0;
  }
  ++state.t;
  state.m = kAdamBeta1 * state.m + (1.0 - kAdamBeta1) * grad;
  state.v = kAdamBeta2 * state.v + (1.0 - kAdamBeta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  theta.array() -=
      lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + kAdamEpsilon);
}

std::pair<double, double> force_errors(const ModelParameters& params,
                                       std::span<const PreparedSample> samples) {
  if (samples.empty()) throw Error("empty evaluation set");
  double abs_sum = 0.0, sq_sum = 0.0, count = 0.0;
  for (const auto& s : samples) {
    const Forces diff = forward_sample(params, s).forces - s.reference_forces;
    abs_sum += diff.cwiseAbs().sum();
    sq_sum += diff.squaredNorm();
    count += static_cast<double>(diff.size());
  }
  return {1000.0 * abs_sum / count, sq_sum / count};
}

namespace {

Eigen::VectorXd freeze_mask(const ModelParameters& p, const std::vector<std::string>& frozen) {
  const auto groups = parameter_groups(p);
  Eigen::Index total = 0;
  for (const auto& g : groups) total += g.size;
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(total);
  for (const auto& name : frozen) {
    bool found = false;
    for (const auto& g : groups) {
      if (g.name == name) {
        mask.segment(g.offset, g.size).setZero();
        found = true;
      }
    }
    if (!found) throw Error("unknown parameter group '" + name + "'");
  }
  return mask;
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

TrainResult train(const ModelParameters& initial, std::span<const PreparedSample> train_samples,
                  std::span<const PreparedSample> validation_samples, const TrainSpec& spec) {
  spec.validate();
  if (train_samples.empty()) throw Error("training set is empty");
  if (validation_samples.empty()) throw Error("validation set is empty");
  const std::size_t n = train_samples.size();
  const std::size_t batch =
      spec.batch_size > 0 ? std::min<std::size_t>(spec.batch_size, n) : std::min<std::size_t>(8, n);

  ModelParameters work = initial;
  Eigen::VectorXd theta = flatten(work);
  const Eigen::VectorXd mask = freeze_mask(work, spec.frozen_groups);
  const bool any_frozen = mask.minCoeff() == 0.0;
  AdamState adam;

  TrainReport report;
  report.seed = spec.seed;
  report.grid_point = {spec.initial_learning_rate, spec.lr_decay_factor};

  auto clock = std::chrono::steady_clock::now();
  auto record = [&](int epoch, double train_loss, double lr) {
    const auto [mae, mse] = force_errors(work, validation_samples);
    const auto now = std::chrono::steady_clock::now();
    EpochRecord r;
    r.epoch = epoch;
    r.train_loss = train_loss;
    r.val_force_mae = mae;
    r.val_force_mse = mse;
    r.learning_rate = lr;
    r.seconds = std::chrono::duration<double>(now - clock).count();
    clock = now;
    report.history.push_back(r);
    return mae;
  };

  Eigen::VectorXd best_theta = theta;
  double best = record(0, force_matching_loss(work, train_samples), 0.0);
  if (!std::isfinite(best)) {
    throw TrainingDiverged("validation error of the initial model is not finite");
  }
  int best_epoch = 0;

  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> order(n);
  for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
    const double lr =
        spec.initial_learning_rate * std::pow(spec.lr_decay_factor, static_cast<double>(epoch - 1));
    for (std::size_t k = 0; k < n; ++k) order[k] = k;
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0, b = 0; start < n; start += batch, ++b) {
      const std::size_t stop = std::min(n, start + batch);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
      std::sort(idx.begin(), idx.end());
      const double weight = 1.0 / static_cast<double>(idx.size());
      std::vector<double> losses(idx.size());
      std::vector<Eigen::VectorXd> grads(idx.size());
      parallel_for(idx.size(), spec.workers, [&](std::size_t k) {
        ModelParameters g = zero_like(work);
        losses[k] = sample_loss(work, train_samples[idx[k]], weight, &g);
        grads[k] = flatten(g);
      });
      double loss = 0.0;
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
      for (std::size_t k = 0; k < idx.size(); ++k) {
        loss += losses[k] * weight;
        grad += grads[k];
      }
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw TrainingDiverged("non-finite loss (learning rate " + fmt_g(lr) + ", epoch " +
                               std::to_string(epoch) + ", batch " + std::to_string(b) + ")");
      }
      if (any_frozen) grad.array() *= mask.array();
      adam_step(theta, grad, adam, lr);
      unflatten(work, theta);
      epoch_loss += loss * static_cast<double>(idx.size());
    }
    const double mae = record(epoch, epoch_loss / static_cast<double>(n), lr);
    if (!std::isfinite(mae)) {
      throw TrainingDiverged("non-finite validation error (learning rate " + fmt_g(lr) +
                             ", epoch " + std::to_string(epoch) + ")");
    }
    if (mae < best) {
      best = mae;
      best_epoch = epoch;
      best_theta = theta;
    } else if (epoch - best_epoch >= spec.early_stop_patience) {
      break;
    }
  }

  TrainResult result;
  result.params = initial;
  unflatten(result.params, best_theta);
  // Energy offset fitted on the training labels, predictions taken unshifted.
  double acc = 0.0;
  int count = 0;
  for (const auto& s : train_samples) {
    if (!s.reference_energy) continue;
    SampleForward f = forward_sample(result.params, s);
    acc += (*s.reference_energy - f.atom_energy.sum()) / s.n_atoms;
    ++count;
  }
  result.params.energy_shift = count > 0 ? acc / count : 0.0;
  report.selected_epoch = best_epoch;
  report.final_val_force_mae = best;
  result.report = std::move(report);
  return result;
}

TrainResult train(const ModelParameters& initial, const std::vector<Configuration>& train_set,
                  const std::vector<Configuration>& validation_set, const TrainSpec& spec) {
  const auto tr = prepare_samples(initial.spec, train_set, spec.workers);
  const auto va = prepare_samples(initial.spec, validation_set, spec.workers);
  return train(initial, std::span<const PreparedSample>(tr), std::span<const PreparedSample>(va),
               spec);
}

SearchResult hyperparameter_search(const ModelParameters& initial,
                                   std::span<const PreparedSample> train_samples,
                                   std::span<const PreparedSample> validation_samples,
                                   const TrainSpec& spec) {
  if (spec.hyperparameter_grid.empty()) throw Error("hyperparameter grid is empty");
  const auto& grid = spec.hyperparameter_grid;
  std::vector<std::optional<TrainResult>> results(grid.size());
  std::vector<TrainReport> reports(grid.size());
  parallel_for(grid.size(), spec.workers, [&](std::size_t k) {
    TrainSpec s = spec;
    s.initial_learning_rate = grid[k].learning_rate;
    s.lr_decay_factor = grid[k].decay;
    s.workers = 1;
    try {
      results[k] = train(initial, train_samples, validation_samples, s);
      reports[k] = results[k]->report;
    } catch (const TrainingDiverged& e) {
      reports[k].seed = spec.seed;
      reports[k].grid_point = grid[k];
      reports[k].diverged = true;
      reports[k].diagnostic = e.what();
    }
  });
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!results[k]) continue;
    if (!best) {
      best = k;
      continue;
    }
    const double a = results[k]->report.final_val_force_mae;
    const double b = results[*best]->report.final_val_force_mae;
    if (a < b || (a == b && grid[k].learning_rate < grid[*best].learning_rate)) best = k;
  }
  if (!best) {
    std::string msg = "all hyperparameter candidates diverged:";
    for (const auto& r : reports) msg += "\n  " + r.diagnostic;
    throw Error(msg);
  }
  SearchResult out;
  out.best = std::move(*results[*best]);
  out.best_spec = spec;
  out.best_spec.initial_learning_rate = grid[*best].learning_rate;
  out.best_spec.lr_decay_factor = grid[*best].decay;
  out.candidates = std::move(reports);
  return out;
}

SearchResult hyperparameter_search(const ModelParameters& initial,
                                   const std::vector<Configuration>& train_set,
                                   const std::vector<Configuration>& validation_set,
                                   const TrainSpec& spec) {
  const auto tr = prepare_samples(initial.spec, train_set, spec.workers);
  const auto va = prepare_samples(initial.spec, validation_set, spec.workers);
  return hyperparameter_search(initial, std::span<const PreparedSample>(tr),
                               std::span<const PreparedSample>(va), spec);
}

namespace {

std::string index_hash(const Split& s) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  for (auto i : s.train) mix(i);
  mix(~0ULL);
  for (auto i : s.validation) mix(i);
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

Split make_splits(const std::vector<Configuration>& pool, std::size_t n_train,
                  std::size_t n_validation, std::uint64_t seed, bool stratify_by_temperature) {
  if (n_train + n_validation > pool.size()) {
    throw Error("pool of " + std::to_string(pool.size()) + " samples cannot supply " +
                std::to_string(n_train) + " training and " + std::to_string(n_validation) +
                " validation samples");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> groups;
  if (stratify_by_temperature) {
    std::map<std::pair<int, double>, std::vector<std::size_t>> by_tag;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      const auto& t = pool[k].temperature;
      by_tag[t ? std::make_pair(0, *t) : std::make_pair(1, 0.0)].push_back(k);
    }
    for (auto& [tag, idx] : by_tag) groups.push_back(std::move(idx));
  } else {
    groups.emplace_back(pool.size());
    for (std::size_t k = 0; k < pool.size(); ++k) groups[0][k] = k;
  }
  for (auto& g : groups) std::shuffle(g.begin(), g.end(), rng);
  std::shuffle(groups.begin(), groups.end(), rng);

  std::vector<std::size_t> drawn;
  std::vector<std::size_t> cursor(groups.size(), 0);
  const std::size_t need = n_train + n_validation;
  while (drawn.size() < need) {
    for (std::size_t g = 0; g < groups.size() && drawn.size() < need; ++g) {
      if (cursor[g] < groups[g].size()) drawn.push_back(groups[g][cursor[g]++]);
    }
  }
  Split s;
  s.train.assign(drawn.begin(), drawn.begin() + n_train);
  s.validation.assign(drawn.begin() + n_train, drawn.end());
  std::vector<bool> used(pool.size(), false);
  for (auto i : drawn) used[i] = true;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    if (!used[k]) s.rest.push_back(k);
  }
  s.id = index_hash(s);
  return s;
}

std::vector<Configuration> select(const std::vector<Configuration>& pool,
                                  const std::vector<std::size_t>& indices) {
  std::vector<Configuration> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(pool.at(i));
  return out;
}

void write_train_report(const TrainReport& report, const std::filesystem::path& path) {
  CsvTable t;
  t.meta("selected_epoch", fmt(report.selected_epoch));
  t.meta("final_val_force_mae_meV_A", fmt(report.final_val_force_mae));
  t.meta("seed", std::to_string(report.seed));
  t.meta("split_id", report.split_id);
  t.meta("learning_rate", fmt(report.grid_point.learning_rate));
  t.meta("lr_decay", fmt(report.grid_point.decay));
  t.meta("diverged", report.diverged ? "true" : "false");
  if (!report.diagnostic.empty()) t.meta("diagnostic", report.diagnostic);
  t.columns = {"epoch", "train_loss", "val_force_mae_meV_A", "val_force_mse", "learning_rate"};
  for (const auto& r : report.history) {
    t.add_row({fmt(r.epoch), fmt(r.train_loss), fmt(r.val_force_mae), fmt(r.val_force_mse),
               fmt(r.learning_rate)});
  }
  write_csv(t, path);
}

}  // namespace xfer
