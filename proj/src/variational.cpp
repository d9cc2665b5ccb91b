#include "pdgibbs/variational.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pdgibbs/forest.hpp"
#include "pdgibbs/math.hpp"
#include "pdgibbs/oracle.hpp"
#include "pdgibbs/parallel.hpp"

namespace pdgibbs {

namespace {

void require_product(const DualModel& dm) {
  if (!dm.has_equality()) return;
  for (std::size_t i = 0; i < dm.num_factors(); ++i)
    if (dm.dual(i).has_equality())
      throw std::invalid_argument(fmt::format(
          "variational updates need product-form duals; factor {} has an equality bond",
          dm.base().factors()[i].id.value));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double entropy_term(std::span<const double> q) {  // sum q log q
  double s = 0.0;
  for (double p : q)
    if (p > 0.0) s += p * std::log(p);
  return s;
}

/// p(theta_i | eta): softmax over k of log g_k + <eta_u, left_k> + <eta_v, right_k>.
std::vector<double> dual_posterior(const DualModel& dm, std::size_t i, const StateVectors& eta) {
  const FactorDual& d = dm.dual(i);
  const Factor& f = dm.base().factors()[i];
  std::vector<double> w(d.cardinality());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const DualComponent& c = d.components[k];
    w[k] = c.log_weight + dot(eta[f.u], c.log_left) + dot(eta[f.v], c.log_right);
  }
  softmax(w, w);
  return w;
}

std::vector<double> dual_posterior(const DualModel& dm, std::size_t i, std::span<const int> x) {
  const FactorDual& d = dm.dual(i);
  const Factor& f = dm.base().factors()[i];
  std::vector<double> w(d.cardinality());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = d.components[k].log_weight + d.log_component(k, x[f.u], x[f.v]);
  softmax(w, w);
  return w;
}

/// Adds sum_k post_k * r_k to the endpoints of factor i.
void add_expected_message(const DualModel& dm, std::size_t i, std::span<const double> post, StateVectors& xi) {
  const FactorDual& d = dm.dual(i);
  const Factor& f = dm.base().factors()[i];
  for (std::size_t k = 0; k < post.size(); ++k) {
    const DualComponent& c = d.components[k];
    for (std::size_t a = 0; a < xi[f.u].size(); ++a) xi[f.u][a] += post[k] * c.log_left[a];
    for (std::size_t b = 0; b < xi[f.v].size(); ++b) xi[f.v][b] += post[k] * c.log_right[b];
  }
}

template <class Conditioning>
StateVectors messages_over(const DualModel& dm, const Conditioning& given, std::span<const char> skip) {
  StateVectors xi = zero_vectors(dm.base());
  for (std::size_t i = 0; i < dm.num_factors(); ++i) {
    if (!skip.empty() && skip[i]) continue;
    add_expected_message(dm, i, dual_posterior(dm, i, given), xi);
  }
  return xi;
}

/// log h restricted to theta_1: unary plus the shifts of dualized factors.
StateVectors dualized_fields(const DualModel& dm, std::span<const char> retained) {
  const Model& base = dm.base();
  StateVectors field(base.num_variables());
  for (VarId v = 0; v < base.num_variables(); ++v) {
    field[v] = base.variable(v).unary;
    for (const Incidence& inc : base.incidences(v)) {
      if (retained[inc.factor_index]) continue;
      const FactorDual& d = dm.dual(inc.factor_index);
      const auto& shift = inc.is_u ? d.shift_u : d.shift_v;
      for (std::size_t k = 0; k < field[v].size(); ++k) field[v][k] += shift[k];
    }
  }
  return field;
}

FieldSet forest_fields(const Model& base, const StateVectors& field, const StateVectors& xi) {
  FieldSet fs(base);
  for (VarId v = 0; v < base.num_variables(); ++v) {
    auto w = fs[v];
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = field[v][k] + xi[v][k];
  }
  return fs;
}

void check_partition(const DualModel& dm, const BlockPartition& partition) {
  if (partition.retained.size() != dm.num_factors())
    throw std::invalid_argument(fmt::format("partition covers {} factors, model has {}",
                                            partition.retained.size(), dm.num_factors()));
}

double max_abs_change(const StateVectors& a, const StateVectors& b) {
  double delta = 0.0;
  for (std::size_t v = 0; v < a.size(); ++v)
    for (std::size_t k = 0; k < a[v].size(); ++k) delta = std::max(delta, std::abs(a[v][k] - b[v][k]));
  return delta;
}

}  // namespace

StateVectors uniform_vectors(const Model& model) {
  StateVectors q(model.num_variables());
  for (VarId v = 0; v < q.size(); ++v)
    q[v].assign(model.cardinality(v), 1.0 / static_cast<double>(model.cardinality(v)));
  return q;
}

StateVectors zero_vectors(const Model& model) {
  StateVectors q(model.num_variables());
  for (VarId v = 0; v < q.size(); ++v) q[v].assign(model.cardinality(v), 0.0);
  return q;
}

StateVectors expected_messages(const DualModel& dm, std::span<const int> x) {
  require_product(dm);
  dm.base().validate_state(x);
  return messages_over(dm, x, {});
}

StateVectors expected_messages(const DualModel& dm, const StateVectors& eta) {
  require_product(dm);
  return messages_over(dm, eta, {});
}

StateVectors primal_marginals(const DualModel& dm, const StateVectors& xi) {
  StateVectors q(dm.num_variables());
  parallel::for_each_index(q.size(), [&](std::size_t v) {
    const auto field = dm.field(v);
    std::vector<double> w(field.begin(), field.end());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += xi[v][k];
    q[v] = softmax(w);
  });
  return q;
}

MeanFieldState initial_mean_field(const DualModel& dm) {
  require_product(dm);
  return MeanFieldState{uniform_vectors(dm.base()), zero_vectors(dm.base())};
}

MapState initial_map_state(const DualModel& dm) {
  require_product(dm);
  const StateVectors xi0 = messages_over(dm, uniform_vectors(dm.base()), {});
  State x(dm.num_variables());
  for (VarId v = 0; v < x.size(); ++v) {
    const auto field = dm.field(v);
    std::vector<double> w(field.begin(), field.end());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += xi0[v][k];
    x[v] = static_cast<int>(argmax_lowest(w));
  }
  return initial_map_state(dm, std::move(x));
}

MapState initial_map_state(const DualModel& dm, State x0) {
  StateVectors xi = expected_messages(dm, x0);
  return MapState{std::move(x0), std::move(xi)};
}

MapState em_map_step(const DualModel& dm, const MapState& state) {
  require_product(dm);
  MapState next;
  next.x.resize(dm.num_variables());
  parallel::for_each_index(next.x.size(), [&](std::size_t v) {
    const auto field = dm.field(v);
    std::vector<double> w(field.begin(), field.end());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += state.xi[v][k];
    next.x[v] = static_cast<int>(argmax_lowest(w));
  });
  next.xi = messages_over(dm, next.x, {});
  return next;
}

MeanFieldState mean_field_step(const DualModel& dm, const MeanFieldState& state, double damping) {
  require_product(dm);
  if (!(damping >= 0.0 && damping < 1.0)) throw std::invalid_argument("damping must lie in [0, 1)");
  MeanFieldState next;
  next.eta = primal_marginals(dm, state.xi);
  if (damping > 0.0)
    for (std::size_t v = 0; v < next.eta.size(); ++v)
      for (std::size_t k = 0; k < next.eta[v].size(); ++k)
        next.eta[v][k] = (1.0 - damping) * next.eta[v][k] + damping * state.eta[v][k];
  next.xi = messages_over(dm, next.eta, {});
  return next;
}

double joint_free_energy(const DualModel& dm, const MeanFieldState& state) {
  require_product(dm);
  const StateVectors qx = primal_marginals(dm, state.xi);
  double f = 0.0;
  for (VarId v = 0; v < qx.size(); ++v) f += entropy_term(qx[v]) - dot(qx[v], dm.field(v));
  for (std::size_t i = 0; i < dm.num_factors(); ++i) {
    const std::vector<double> qt = dual_posterior(dm, i, state.eta);
    const Factor& fac = dm.base().factors()[i];
    f += entropy_term(qt);
    for (std::size_t k = 0; k < qt.size(); ++k) {
      const DualComponent& c = dm.dual(i).components[k];
      f -= qt[k] * (c.log_weight + dot(qx[fac.u], c.log_left) + dot(qx[fac.v], c.log_right));
    }
  }
  return f;
}

double joint_kl_objective(const DualModel& dm, const MeanFieldState& state) {
  return joint_kl_objective(dm, state, exact_log_z(dm.base(), std::size_t{1} << 20));
}

double joint_kl_objective(const DualModel& dm, const MeanFieldState& state, double log_z) {
  return joint_free_energy(dm, state) + log_z;
}

double primal_free_energy(const Model& model, const StateVectors& q) {
  double f = 0.0;
  for (VarId v = 0; v < model.num_variables(); ++v)
    f += entropy_term(q[v]) - dot(q[v], model.variable(v).unary);
  for (const Factor& fac : model.factors())
    for (std::size_t a = 0; a < fac.table.rows(); ++a)
      for (std::size_t b = 0; b < fac.table.cols(); ++b)
        f -= q[fac.u][a] * q[fac.v][b] * fac.log_value(static_cast<int>(a), static_cast<int>(b));
  return f;
}

double primal_kl(const Model& model, const StateVectors& q, double log_z) {
  return primal_free_energy(model, q) + log_z;
}

// ---------------------------------------------------------------------------

MapState tree_blocked_map_step(const DualModel& dm, const MapState& state, const BlockPartition& partition) {
  require_product(dm);
  check_partition(dm, partition);
  const Model& base = dm.base();
  const Forest forest(base, partition.retained);
  const StateVectors xi1 = messages_over(dm, std::span<const int>(state.x), partition.retained);
  const FieldSet fs = forest_fields(base, dualized_fields(dm, partition.retained), xi1);
  MapState next;
  next.x = forest.max_assignment(base, fs);
  next.xi = messages_over(dm, next.x, {});
  return next;
}

MeanFieldState tree_blocked_mf_step(const DualModel& dm, const MeanFieldState& state,
                                    const BlockPartition& partition) {
  require_product(dm);
  check_partition(dm, partition);
  const Model& base = dm.base();
  const Forest forest(base, partition.retained);
  const StateVectors xi1 = messages_over(dm, state.eta, partition.retained);
  const FieldSet fs = forest_fields(base, dualized_fields(dm, partition.retained), xi1);
  MeanFieldState next;
  next.eta = forest.marginals(base, fs).node;
  next.xi = messages_over(dm, next.eta, {});
  return next;
}

double tree_free_energy(const DualModel& dm, const StateVectors& eta, const BlockPartition& partition) {
  require_product(dm);
  check_partition(dm, partition);
  const Model& base = dm.base();
  const Forest forest(base, partition.retained);
  StateVectors xi1 = zero_vectors(base);
  double theta_terms = 0.0;
  for (std::size_t i = 0; i < dm.num_factors(); ++i) {
    if (partition.retained[i]) continue;
    const std::vector<double> qt = dual_posterior(dm, i, eta);
    add_expected_message(dm, i, qt, xi1);
    theta_terms += entropy_term(qt);
    for (std::size_t k = 0; k < qt.size(); ++k) theta_terms -= qt[k] * dm.dual(i).components[k].log_weight;
  }
  // With q(x) proportional to exp(field_1 + xi_1) times the retained tables, the
  // x-dependent parts of E[log q(x)] and E[log p~(x, theta_1)] cancel up to
  // the forest's log partition.
  const FieldSet fs = forest_fields(base, dualized_fields(dm, partition.retained), xi1);
  return theta_terms - forest.marginals(base, fs).log_partition;
}

// ---------------------------------------------------------------------------

NaiveMeanFieldResult naive_mean_field(const Model& model, StateVectors init, double tolerance,
                                      std::size_t max_iterations) {
  NaiveMeanFieldResult r;
  r.q = std::move(init);
  if (r.q.size() != model.num_variables()) throw std::invalid_argument("initial marginals do not match the model");
  std::vector<double> w;
  for (r.iterations = 0; r.iterations < max_iterations;) {
    double delta = 0.0;
    for (VarId v = 0; v < model.num_variables(); ++v) {
      const auto& unary = model.variable(v).unary;
      w.assign(unary.begin(), unary.end());
      for (const Incidence& inc : model.incidences(v)) {
        const Factor& f = model.factors()[inc.factor_index];
        const auto& other = inc.is_u ? r.q[f.v] : r.q[f.u];
        for (std::size_t k = 0; k < w.size(); ++k)
          for (std::size_t b = 0; b < other.size(); ++b)
            w[k] += other[b] * (inc.is_u ? f.log_value(static_cast<int>(k), static_cast<int>(b))
                                         : f.log_value(static_cast<int>(b), static_cast<int>(k)));
      }
      softmax(w, w);
      for (std::size_t k = 0; k < w.size(); ++k) delta = std::max(delta, std::abs(w[k] - r.q[v][k]));
      r.q[v] = w;
    }
    ++r.iterations;
    if (delta < tolerance) {
      r.converged = true;
      break;
    }
  }
  r.free_energy = primal_free_energy(model, r.q);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

template <class Step>
MapRun drive_map(const DualModel& dm, const VariationalOptions& options, MapState state, Step step) {
  MapRun run;
  run.objective.push_back(energy(dm.base(), state.x));
  while (run.iterations < options.max_iterations) {
    MapState next = step(state);
    ++run.iterations;
    std::size_t changed = 0;
    for (std::size_t v = 0; v < next.x.size(); ++v) changed += next.x[v] != state.x[v];
    run.final_delta = static_cast<double>(changed);
    run.objective.push_back(energy(dm.base(), next.x));
    state = std::move(next);
    if (changed == 0) {
      run.converged = true;
      break;
    }
  }
  run.state = std::move(state);
  return run;
}

template <class Step, class Objective>
MeanFieldRun drive_mean_field(const DualModel& dm, const VariationalOptions& options, Step step,
                              Objective objective) {
  MeanFieldRun run;
  MeanFieldState state = initial_mean_field(dm);
  run.objective.push_back(objective(state));
  while (run.iterations < options.max_iterations) {
    MeanFieldState next = step(state);
    ++run.iterations;
    run.final_delta = max_abs_change(next.eta, state.eta);
    run.objective.push_back(objective(next));
    state = std::move(next);
    if (run.final_delta < options.tolerance) {
      run.converged = true;
      break;
    }
  }
  run.state = std::move(state);
  if (options.fine_tune) run.fine_tuned = naive_mean_field(dm.base(), run.state.eta, options.tolerance, options.max_iterations);
  return run;
}

}  // namespace

StateVectors MeanFieldRun::marginals() const { return fine_tuned ? fine_tuned->q : state.eta; }

MapRun run_em_map(const DualModel& dm, const VariationalOptions& options, std::optional<MapState> init) {
  MapState start = init ? std::move(*init) : initial_map_state(dm);
  return drive_map(dm, options, std::move(start), [&](const MapState& s) { return em_map_step(dm, s); });
}

MapRun run_tree_map(const DualModel& dm, const BlockPartition& partition, const VariationalOptions& options,
                    std::optional<MapState> init) {
  MapState start = init ? std::move(*init) : initial_map_state(dm);
  return drive_map(dm, options, std::move(start),
                   [&](const MapState& s) { return tree_blocked_map_step(dm, s, partition); });
}

MeanFieldRun run_mean_field(const DualModel& dm, const VariationalOptions& options) {
  return drive_mean_field(
      dm, options, [&](const MeanFieldState& s) { return mean_field_step(dm, s, options.damping); },
      [&](const MeanFieldState& s) { return joint_free_energy(dm, s); });
}

MeanFieldRun run_tree_mean_field(const DualModel& dm, const BlockPartition& partition,
                                 const VariationalOptions& options) {
  return drive_mean_field(
      dm, options, [&](const MeanFieldState& s) { return tree_blocked_mf_step(dm, s, partition); },
      [&](const MeanFieldState& s) { return tree_free_energy(dm, s.eta, partition); });
}

}  // namespace pdgibbs
