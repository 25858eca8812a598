#include "support.hpp"

#include "xfer/trainer.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

using namespace xfer;
using xfer::test::jittered_diamond;

namespace {

ModelSpec tiny_spec() {
  ModelSpec s;
  s.cutoff = 4.0;
  s.n_radial_basis = 4;
  s.n_angular_basis = 3;
  s.n_angular_radial = 2;
  s.embedding_dim = 2;
  s.hidden_layer_widths = {8, 6};
  return s;
}

std::vector<Configuration> labelled(int n, std::uint64_t seed, double temp = 300.0) {
  const SWPotential sw(default_parameters(Species::from_symbol("Si")));
  std::vector<Configuration> out;
  for (int k = 0; k < n; ++k) {
    Configuration c = jittered_diamond("Si", 5.431, 1, 0.12, seed + k);
    const Evaluation ev = evaluate(sw, c);
    c.energy = ev.energy;
    c.forces = ev.forces;
    c.temperature = temp;
    out.push_back(std::move(c));
  }
  return out;
}

ModelParameters tiny_model(const std::vector<Configuration>& fit, std::uint64_t seed = 2) {
  return fit_input_scaling(init_parameters(tiny_spec(), {"Si"}, seed), fit);
}

double naive_loss(const ModelParameters& p, const std::vector<Configuration>& batch) {
  double acc = 0.0;
  for (const auto& c : batch) {
    const Forces f = predict_forces(p, c, build_neighbor_list(c, p.spec.cutoff));
    acc += (f - *c.forces).squaredNorm() / (3.0 * c.size());
  }
  return acc / batch.size();
}

}  // namespace

TEST_CASE("loss equals the explicit per-configuration average") {
  const auto data = labelled(3, 10);
  const ModelParameters p = tiny_model(data);
  CHECK(force_matching_loss(p, data) == doctest::Approx(naive_loss(p, data)).epsilon(1e-12));
  const auto prepared = prepare_samples(p.spec, data);
  CHECK(force_matching_loss(p, std::span<const PreparedSample>(prepared)) ==
        doctest::Approx(naive_loss(p, data)).epsilon(1e-12));
  for (std::size_t k = 0; k < data.size(); ++k) {
    const Forces a = predict_forces(p, prepared[k]);
    const Forces b = predict_forces(p, data[k], build_neighbor_list(data[k], p.spec.cutoff));
    CHECK((a - b).norm() < 1e-12 * (1.0 + b.norm()));
  }
}

TEST_CASE("loss gradient matches finite differences") {
  const auto data = labelled(2, 20);
  ModelParameters p = tiny_model(data);
  const auto prepared = prepare_samples(p.spec, data);
  const std::span<const PreparedSample> batch(prepared);
  const LossGradient lg = loss_and_gradient(p, batch);
  CHECK(lg.loss == doctest::Approx(naive_loss(p, data)).epsilon(1e-12));
  const Eigen::VectorXd theta = flatten(p);
  REQUIRE(lg.gradient.size() == theta.size());
  const double h = 1e-6;
  for (const auto& g : parameter_groups(p)) {
    for (Eigen::Index k = g.offset; k < g.offset + g.size; k += std::max<Eigen::Index>(1, g.size / 7)) {
      Eigen::VectorXd t = theta;
      t[k] += h;
      unflatten(p, t);
      const double up = force_matching_loss(p, batch);
      t[k] -= 2 * h;
      unflatten(p, t);
      const double dn = force_matching_loss(p, batch);
      CHECK(lg.gradient[k] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5).scale(1e-3));
    }
  }
  unflatten(p, theta);
  CHECK(loss_and_gradient(p, batch, 2).gradient.isApprox(lg.gradient, 1e-12));
}

TEST_CASE("first Adam step moves each coordinate by the learning rate") {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd g = (Eigen::VectorXd(4) << 0.5, -2.0, 1e-3, 0.0).finished();
  AdamState st;
  adam_step(theta, g, st, 0.01);
  for (int k = 0; k < 4; ++k) {
    CHECK(theta[k] == doctest::Approx(-0.01 * g[k] / (std::abs(g[k]) + kAdamEpsilon)).epsilon(1e-9));
  }
  CHECK(st.t == 1);
}

TEST_CASE("splits are disjoint, deterministic and stratified") {
  std::vector<Configuration> pool;
  for (double t : {300.0, 600.0, 900.0}) {
    for (int k = 0; k < 10; ++k) {
      Configuration c;
      c.temperature = t;
      pool.push_back(c);
    }
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Split s = make_splits(pool, 6, 9, seed, true);
    CHECK(s.train.size() == 6);
    CHECK(s.validation.size() == 9);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.validation.begin(), s.validation.end());
    all.insert(s.rest.begin(), s.rest.end());
    CHECK(all.size() == pool.size());
    CHECK(s.train.size() + s.validation.size() + s.rest.size() == pool.size());
    CHECK(std::is_sorted(s.rest.begin(), s.rest.end()));
    std::map<double, int> tr, va;
    for (auto i : s.train) ++tr[*pool[i].temperature];
    for (auto i : s.validation) ++va[*pool[i].temperature];
    for (double t : {300.0, 600.0, 900.0}) {
      CHECK(tr[t] == 2);
      CHECK(va[t] == 3);
    }
    const Split again = make_splits(pool, 6, 9, seed, true);
    CHECK(again.train == s.train);
    CHECK(again.id == s.id);
  }
  CHECK(make_splits(pool, 6, 9, 1, true).id != make_splits(pool, 6, 9, 2, true).id);
  CHECK_THROWS_AS(make_splits(pool, 20, 11, 0, false), Error);
}

TEST_CASE("training selects the best validation epoch and fits the energy shift") {
  const auto data = labelled(6, 30);
  const std::vector<Configuration> tr(data.begin(), data.begin() + 4), va(data.begin() + 4, data.end());
  const ModelParameters init = tiny_model(tr);
  TrainSpec spec;
  spec.max_epochs = 40;
  spec.early_stop_patience = 10;
  spec.initial_learning_rate = 3e-3;
  spec.batch_size = 2;
  const TrainResult r = train(init, tr, va, spec);
  const auto& h = r.report.history;
  REQUIRE(h.size() >= 2);
  CHECK(h.front().epoch == 0);
  auto best = std::min_element(h.begin(), h.end(),
                               [](const auto& a, const auto& b) { return a.val_force_mae < b.val_force_mae; });
  CHECK(r.report.selected_epoch == best->epoch);
  CHECK(r.report.final_val_force_mae == best->val_force_mae);
  CHECK(h.back().epoch - r.report.selected_epoch <= spec.early_stop_patience);
  CHECK(h.back().val_force_mae >= best->val_force_mae);
  const auto va_prep = prepare_samples(init.spec, va);
  CHECK(force_errors(r.params, va_prep).first == doctest::Approx(best->val_force_mae).epsilon(1e-10));
  CHECK(r.report.final_val_force_mae < h.front().val_force_mae);

  ModelParameters unshifted = r.params;
  unshifted.energy_shift = 0.0;
  CHECK(r.params.energy_shift == doctest::Approx(set_energy_shift(unshifted, tr).energy_shift).epsilon(1e-10));

  const TrainResult again = train(init, tr, va, spec);
  CHECK(flatten(again.params) == flatten(r.params));
}

TEST_CASE("frozen groups are untouched") {
  const auto data = labelled(4, 40);
  const std::vector<Configuration> tr(data.begin(), data.begin() + 3), va(data.begin() + 3, data.end());
  const ModelParameters init = tiny_model(tr);
  TrainSpec spec;
  spec.max_epochs = 10;
  spec.early_stop_patience = 100;
  spec.initial_learning_rate = 1e-2;
  spec.frozen_groups = {"embedding", "layer0"};
  const TrainResult r = train(init, tr, va, spec);
  REQUIRE(r.report.selected_epoch > 0);
  const Eigen::VectorXd a = flatten(init), b = flatten(r.params);
  for (const auto& g : parameter_groups(init)) {
    const bool same = a.segment(g.offset, g.size) == b.segment(g.offset, g.size);
    CHECK(same == (g.name == "embedding" || g.name == "layer0"));
  }
  spec.frozen_groups = {"layer7"};
  CHECK_THROWS_AS(train(init, tr, va, spec), Error);
}

TEST_CASE("grid ties go to the lower learning rate") {
  const auto data = labelled(3, 50);
  const std::vector<Configuration> tr(data.begin(), data.begin() + 2), va(data.begin() + 2, data.end());
  TrainSpec spec;
  spec.max_epochs = 0;  // every candidate keeps the initial model
  spec.hyperparameter_grid = {{1e-2, 1.0}, {1e-4, 1.0}, {1e-3, 1.0}};
  const SearchResult s = hyperparameter_search(tiny_model(tr), tr, va, spec);
  CHECK(s.best_spec.initial_learning_rate == 1e-4);
  CHECK(s.candidates.size() == 3);
}

TEST_CASE("divergence is contained per candidate") {
  const auto data = labelled(3, 60);
  const std::vector<Configuration> tr(data.begin(), data.begin() + 2), va(data.begin() + 2, data.end());
  TrainSpec spec;
  spec.max_epochs = 3;
  spec.hyperparameter_grid = {{1e300, 1.0}, {1e-3, 1.0}};
  const SearchResult s = hyperparameter_search(tiny_model(tr), tr, va, spec);
  CHECK(s.candidates[0].diverged);
  CHECK_FALSE(s.candidates[0].diagnostic.empty());
  CHECK_FALSE(s.candidates[1].diverged);
  CHECK(s.best_spec.initial_learning_rate == 1e-3);
  spec.hyperparameter_grid = {{1e300, 1.0}};
  CHECK_THROWS_AS(hyperparameter_search(tiny_model(tr), tr, va, spec), Error);
}

TEST_CASE("train spec validation") {
  TrainSpec s;
  CHECK_NOTHROW(s.validate());
  s.lr_decay_factor = 1.5;
  CHECK_THROWS_AS(s.validate(), Error);
  s = TrainSpec{};
  s.early_stop_patience = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  Configuration unlabeled = jittered_diamond("Si", 5.431, 1, 0.0, 0);
  CHECK_THROWS_AS(prepare_sample(tiny_spec(), unlabeled), Error);
}
