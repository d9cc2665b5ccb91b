#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "pdgibbs/math.hpp"
#include "pdgibbs/oracle.hpp"
#include "pdgibbs/variational.hpp"
#include "support.hpp"

using namespace pdgibbs;

namespace {

double max_abs_diff(const StateVectors& a, const StateVectors& b) {
  double d = 0.0;
  for (std::size_t v = 0; v < a.size(); ++v)
    for (std::size_t k = 0; k < a[v].size(); ++k) d = std::max(d, std::abs(a[v][k] - b[v][k]));
  return d;
}

/// KL(p(x | xi) p(theta | eta), p(x, theta)) by enumerating (x, theta).
double brute_joint_kl(const DualModel& dm, const MeanFieldState& s) {
  const Model& m = dm.base();
  const StateVectors q = primal_marginals(dm, s.xi);
  const double log_z = exact_log_z(m);
  // p(theta_i | eta) for every factor.
  std::vector<std::vector<double>> qt(dm.num_factors());
  for (std::size_t i = 0; i < dm.num_factors(); ++i) {
    const Factor& f = m.factors()[i];
    std::vector<double> lw(dm.dual_cardinality(i));
    for (std::size_t k = 0; k < lw.size(); ++k) {
      lw[k] = dm.dual(i).components[k].log_weight;
      for (std::size_t a = 0; a < m.cardinality(f.u); ++a) lw[k] += s.eta[f.u][a] * dm.dual(i).log_message(k, true, static_cast<int>(a));
      for (std::size_t b = 0; b < m.cardinality(f.v); ++b) lw[k] += s.eta[f.v][b] * dm.dual(i).log_message(k, false, static_cast<int>(b));
    }
    qt[i] = softmax(lw);
  }
  double kl = 0.0;
  for_each_state(m, [&](std::size_t, const State& x) {
    double log_qx = 0.0;
    for (VarId v = 0; v < m.num_variables(); ++v) log_qx += std::log(q[v][static_cast<std::size_t>(x[v])]);
    for_each_dual_state(dm, [&](std::size_t, const DualState& t) {
      double log_qt = 0.0;
      for (std::size_t i = 0; i < t.size(); ++i) log_qt += std::log(qt[i][static_cast<std::size_t>(t[i])]);
      const double lq = log_qx + log_qt;
      kl += std::exp(lq) * (lq - (log_dual_joint(dm, x, t) - log_z));
    });
  });
  return kl;
}

StateVectors random_eta(const Model& m, testing::Gen& g) {
  StateVectors eta(m.num_variables());
  for (VarId v = 0; v < m.num_variables(); ++v) {
    const double p = g.uniform(0.01, 0.99);
    eta[v] = {1.0 - p, p};
  }
  return eta;
}

}  // namespace

TEST_SUITE("variational") {

TEST_CASE("uncoupled model converges in one step") {
  Model m;
  m.add_variable({0.0, 0.8});
  m.add_variable({0.0, -0.3});
  m.add_variable({0.0, 0.0});
  m.add_factor(0, 1, Table{{1, 1}, {1, 1}});
  const DualModel dm(m);

  const MapState x1 = em_map_step(dm, initial_map_state(dm, State{0, 1, 1}));
  CHECK(x1.x == State{1, 0, 0});
  CHECK(em_map_step(dm, x1).x == x1.x);

  const MeanFieldState e1 = mean_field_step(dm, initial_mean_field(dm));
  CHECK(e1.eta[0][1] == doctest::Approx(sigmoid(0.8)).epsilon(1e-12));
  CHECK(e1.eta[1][1] == doctest::Approx(sigmoid(-0.3)).epsilon(1e-12));
  CHECK(e1.eta[2][1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(max_abs_diff(mean_field_step(dm, e1).eta, e1.eta) < 1e-12);
  // At the exact conditionals of an independent model the joint KL vanishes.
  CHECK(std::abs(joint_kl_objective(dm, e1)) < 1e-12);
}

TEST_CASE("EM-MAP on an attractive chain") {
  Model m;
  for (int v = 0; v < 5; ++v) m.add_variable({0.0, v == 0 ? 1.0 : 0.0});
  for (VarId v = 0; v + 1 < 5; ++v) m.add_factor(v, v + 1, ising_table(2.0));
  const DualModel dm(m);
  const MapRun em = run_em_map(dm);
  CHECK(em.converged);
  // EM stops at a fixed point, which need not be the global MAP.
  CHECK(em_map_step(dm, em.state).x == em.state.x);
  for (std::size_t t = 1; t < em.objective.size(); ++t) CHECK(em.objective[t] >= em.objective[t - 1] - 1e-12);

  // Keeping the chain as a tree recovers the exact MAP.
  const BlockPartition all{std::vector<char>(m.num_factors(), 1)};
  const MapRun tree = run_tree_map(dm, all);
  CHECK(tree.state.x == exact_map(m));
  CHECK(tree.state.x == State(5, 1));

  // Started at the optimum, EM stays there.
  const MapRun at = run_em_map(dm, {}, initial_map_state(dm, State(5, 1)));
  CHECK(at.state.x == State(5, 1));
}

TEST_CASE("EM-MAP objective never decreases") {
  testing::Gen g(107);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = g.binary_model(6, 8);
    const DualModel dm(m);
    MapState s = initial_map_state(dm, uniform_state(m, RngStreams(trial)));
    double prev = energy(m, s.x);
    for (int step = 0; step < 30; ++step) {
      s = em_map_step(dm, s);
      const double e = energy(m, s.x);
      CHECK(e >= prev - 1e-12);
      prev = e;
    }
    const MapRun run = run_em_map(dm);
    for (std::size_t t = 1; t < run.objective.size(); ++t) CHECK(run.objective[t] >= run.objective[t - 1] - 1e-12);
  }
}

TEST_CASE("joint KL closed form matches enumeration") {
  testing::Gen g(109);
  for (int trial = 0; trial < 10; ++trial) {
    const Model m = g.binary_model(3, 3);
    const DualModel dm(m);
    MeanFieldState s{random_eta(m, g), {}};
    s.xi = expected_messages(dm, s.eta);
    CHECK(std::abs(joint_kl_objective(dm, s) - brute_joint_kl(dm, s)) < 1e-10);
    s = mean_field_step(dm, s);
    CHECK(std::abs(joint_kl_objective(dm, s) - brute_joint_kl(dm, s)) < 1e-10);
    CHECK(std::abs(joint_kl_objective(dm, s, exact_log_z(m)) - joint_kl_objective(dm, s)) < 1e-14);
    CHECK(std::abs(joint_free_energy(dm, s) + exact_log_z(m) - joint_kl_objective(dm, s)) < 1e-12);
  }
}

TEST_CASE("mean-field descent and the joint KL bound") {
  testing::Gen g(113);
  for (int trial = 0; trial < 50; ++trial) {
    const Model m = g.binary_model(3, 2 + g.index(3));
    const DualModel dm(m);
    const double log_z = exact_log_z(m);
    MeanFieldState s = initial_mean_field(dm);
    if (trial % 2) s.eta = random_eta(m, g), s.xi = expected_messages(dm, s.eta);
    double prev = joint_kl_objective(dm, s, log_z);
    for (int step = 0; step < 200; ++step) {
      s = mean_field_step(dm, s);
      const double kl = joint_kl_objective(dm, s, log_z);
      CHECK(kl <= prev + 1e-9);
      CHECK(kl >= primal_kl(m, primal_marginals(dm, s.xi), log_z) - 1e-9);
      prev = kl;
    }
  }
}

TEST_CASE("single factor: the joint KL bound against a grid search") {
  Model m(std::vector<std::size_t>{2, 2});
  m.set_unary(0, {0.0, 0.3});
  m.add_factor(0, 1, ising_table(1.2));
  const DualModel dm(m);
  const double log_z = exact_log_z(m);
  double best_joint = 1e300, best_primal = 1e300;
  for (int i = 1; i < 100; ++i)
    for (int j = 1; j < 100; ++j) {
      MeanFieldState s;
      s.eta = {{1 - i / 100.0, i / 100.0}, {1 - j / 100.0, j / 100.0}};
      s.xi = expected_messages(dm, s.eta);
      best_joint = std::min(best_joint, joint_kl_objective(dm, s, log_z));
      best_primal = std::min(best_primal, primal_kl(m, {s.eta[0], s.eta[1]}, log_z));
    }
  CHECK(best_joint >= best_primal - 1e-9);
  const MeanFieldRun run = run_mean_field(dm);
  CHECK(run.converged);
  const double kl = primal_kl(m, primal_marginals(dm, run.state.xi), log_z);
  CHECK(kl >= 0.0);
  CHECK(std::isfinite(kl));
}

TEST_CASE("mean-field fixed points satisfy both update equations") {
  testing::Gen g(127);
  for (int trial = 0; trial < 10; ++trial) {
    const DualModel dm(g.binary_model(8, 10));
    const MeanFieldRun run = run_mean_field(dm);
    REQUIRE(run.converged);
    CHECK(max_abs_diff(run.state.eta, primal_marginals(dm, run.state.xi)) < 1e-8);
    CHECK(max_abs_diff(run.state.xi, expected_messages(dm, run.state.eta)) < 1e-8);
    for (std::size_t t = 1; t < run.objective.size(); ++t) CHECK(run.objective[t] <= run.objective[t - 1] + 1e-9);
  }
}

TEST_CASE("damping does not move the fixed point") {
  const DualModel dm(build_grid_ising(3, 3, 0.1, testing::grid_unaries(9, 2)));
  VariationalOptions plain, damped;
  damped.damping = 0.5;
  const MeanFieldRun a = run_mean_field(dm, plain), b = run_mean_field(dm, damped);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(std::abs(a.objective.back() - b.objective.back()) < 1e-6);
  CHECK(max_abs_diff(a.state.eta, b.state.eta) < 1e-6);
}

TEST_CASE("fine-tuning never worsens the primal bound") {
  const Model m = build_grid_ising(3, 3, 0.4, testing::grid_unaries(9, 12));
  const DualModel dm(m);
  VariationalOptions opts;
  opts.fine_tune = true;
  const MeanFieldRun run = run_mean_field(dm, opts);
  REQUIRE(run.fine_tuned);
  const double log_z = exact_log_z(m);
  CHECK(primal_kl(m, run.marginals(), log_z) <= primal_kl(m, primal_marginals(dm, run.state.xi), log_z) + 1e-12);
  CHECK(run.fine_tuned->free_energy == doctest::Approx(primal_free_energy(m, run.marginals())).epsilon(1e-12));
}

TEST_CASE("naive mean field") {
  Model m(std::vector<std::size_t>{2, 2});
  m.set_unary(0, {0.0, 0.5});
  const auto r = naive_mean_field(m, uniform_vectors(m));
  CHECK(r.converged);
  CHECK(r.q[0][1] == doctest::Approx(sigmoid(0.5)).epsilon(1e-12));
  CHECK(r.q[1][1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(primal_kl(m, r.q, exact_log_z(m))) < 1e-12);
}

TEST_CASE("tree variants reduce to the plain steps on an empty partition") {
  testing::Gen g(131);
  const DualModel dm(g.binary_model(6, 9));
  const BlockPartition none = empty_partition(dm.base());
  MapState ms = initial_map_state(dm);
  MeanFieldState fs = initial_mean_field(dm);
  fs.eta = random_eta(dm.base(), g);
  fs.xi = expected_messages(dm, fs.eta);
  for (int step = 0; step < 10; ++step) {
    const MapState a = em_map_step(dm, ms), b = tree_blocked_map_step(dm, ms, none);
    CHECK(a.x == b.x);
    CHECK(max_abs_diff(a.xi, b.xi) < 1e-12);
    const MeanFieldState c = mean_field_step(dm, fs), d = tree_blocked_mf_step(dm, fs, none);
    CHECK(max_abs_diff(c.eta, d.eta) < 1e-12);
    CHECK(max_abs_diff(c.xi, d.xi) < 1e-12);
    CHECK(std::abs(tree_free_energy(dm, c.eta, none) - joint_free_energy(dm, c)) < 1e-10);
    ms = a;
    fs = c;
  }
}

TEST_CASE("tree MAP on a tree is exact in one step") {
  testing::Gen g(137);
  for (int trial = 0; trial < 10; ++trial) {
    Model m;
    for (int v = 0; v < 6; ++v) m.add_variable({0.0, g.normal()});
    for (VarId v = 1; v < 6; ++v) m.add_factor(g.index(v), v, g.positive_table(2, 2));
    const DualModel dm(m);
    const BlockPartition all = random_spanning_forest(m, RngStreams(trial), 0);
    REQUIRE(all.retained_count() == 5);
    const MapState s = tree_blocked_map_step(dm, initial_map_state(dm), all);
    CHECK(energy(m, s.x) == doctest::Approx(energy(m, exact_map(m))).epsilon(1e-12));
    // Tree sum-product gives the exact marginals, so the bound is tight.
    const MeanFieldState f = tree_blocked_mf_step(dm, initial_mean_field(dm), all);
    CHECK(testing::max_marginal_error(f.eta, exact_summary(m).marginals) < 1e-12);
    CHECK(std::abs(tree_free_energy(dm, f.eta, all) + exact_log_z(m)) < 1e-10);
  }
}

TEST_CASE("tree-blocked objectives are monotone") {
  testing::Gen g(139);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = build_grid_ising(3, 3, g.uniform(0.1, 1.0), testing::grid_unaries(9, 200 + trial));
    const DualModel dm(m);
    const BlockPartition p = random_spanning_forest(m, RngStreams(trial), 0);
    const MapRun map = run_tree_map(dm, p);
    for (std::size_t t = 1; t < map.objective.size(); ++t) CHECK(map.objective[t] >= map.objective[t - 1] - 1e-12);
    const MeanFieldRun mf = run_tree_mean_field(dm, p);
    for (std::size_t t = 1; t < mf.objective.size(); ++t) CHECK(mf.objective[t] <= mf.objective[t - 1] + 1e-9);
    // The tree bound is an upper bound on -log Z.
    CHECK(mf.objective.back() >= -exact_log_z(m) - 1e-9);
  }
}

TEST_CASE("tree MAP beats plain EM-MAP on most grids") {
  int wins = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Model m = build_grid_ising(3, 3, 0.5, testing::grid_unaries(9, 1000 + trial, 1.0));
    const DualModel dm(m);
    const MapRun em = run_em_map(dm);
    const MapRun tree = run_tree_map(dm, random_spanning_forest(m, RngStreams(trial), 0));
    if (tree.objective.back() >= em.objective.back() - 1e-12) ++wins;
  }
  CHECK(wins >= 45);
}

TEST_CASE("equality bonds are rejected") {
  const DualModel sw = sw_dual_model(build_grid_ising(2, 2, 0.5));
  CHECK_THROWS_AS(run_em_map(sw), std::invalid_argument);
  CHECK_THROWS_AS(run_mean_field(sw), std::invalid_argument);
  CHECK_THROWS_AS(tree_blocked_map_step(sw, MapState{State(4, 0), zero_vectors(sw.base())}, empty_partition(sw.base())),
                  std::invalid_argument);
}

}  // TEST_SUITE
