#include "pdgibbs/sampling.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "pdgibbs/forest.hpp"
#include "pdgibbs/math.hpp"
#include "pdgibbs/parallel.hpp"
#include "pdgibbs/union_find.hpp"

namespace pdgibbs {

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::Sequential:
      return "sequential";
    case SamplerKind::PrimalDual:
      return "primal-dual";
    case SamplerKind::SwendsenWang:
      return "swendsen-wang";
    case SamplerKind::BlockedTree:
      return "blocked-tree";
  }
  return "unknown";
}

SamplerKind parse_sampler_kind(std::string_view name) {
  if (name == "sequential" || name == "gibbs") return SamplerKind::Sequential;
  if (name == "primal-dual" || name == "pd") return SamplerKind::PrimalDual;
  if (name == "swendsen-wang" || name == "sw") return SamplerKind::SwendsenWang;
  if (name == "blocked-tree" || name == "blocked") return SamplerKind::BlockedTree;
  throw std::invalid_argument(fmt::format("unknown sampler '{}'", name));
}

SweepStats sweep_stats(const Model& model, std::span<const int> state) {
  SweepStats stats;
  stats.energy = energy(model, state);
  if (!state.empty()) {
    double total = 0.0;
    for (int s : state) total += s;
    stats.magnetization = total / static_cast<double>(state.size());
  }
  return stats;
}

State uniform_state(const Model& model, const RngStreams& rng, std::uint64_t entity) {
  State x(model.num_variables());
  for (VarId v = 0; v < x.size(); ++v) {
    Stream s = rng.stream(StreamPurpose::Init, v, entity);
    x[v] = static_cast<int>(s.below(model.cardinality(v)));
  }
  return x;
}

namespace {

void conditional_log_weights(const Model& model, std::span<const int> state, VarId v, std::vector<double>& w) {
  const auto& unary = model.variable(v).unary;
  w.assign(unary.begin(), unary.end());
  for (const Incidence& inc : model.incidences(v)) {
    const Factor& f = model.factors()[inc.factor_index];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const int s = static_cast<int>(k);
      w[k] += inc.is_u ? f.log_value(s, state[f.v]) : f.log_value(state[f.u], s);
    }
  }
}

}  // namespace

std::vector<double> conditional_prob(const Model& model, std::span<const int> state, VarId v) {
  if (v >= model.num_variables())
    throw std::out_of_range(fmt::format("unknown variable {} (model has {})", v, model.num_variables()));
  model.validate_state(state);
  std::vector<double> w;
  conditional_log_weights(model, state, v, w);
  return softmax(w);
}

void gibbs_site_update(const Model& model, State& state, VarId v, Stream& stream) {
  thread_local std::vector<double> w;
  conditional_log_weights(model, state, v, w);
  state[v] = static_cast<int>(sample_log_categorical(w, stream.uniform()));
}

void sequential_gibbs_sweep_in_place(const Model& model, State& state, const RngStreams& rng,
                                     std::uint64_t sweep) {
  for (VarId v = 0; v < model.num_variables(); ++v) {
    Stream s = rng.stream(StreamPurpose::Sequential, v, sweep);
    gibbs_site_update(model, state, v, s);
  }
}

State sequential_gibbs_sweep(const Model& model, const State& state, const RngStreams& rng, std::uint64_t sweep) {
  model.validate_state(state);
  State next = state;
  sequential_gibbs_sweep_in_place(model, next, rng, sweep);
  return next;
}

// ---------------------------------------------------------------------------

namespace {

void check_dual_state(const DualModel& dm, std::span<const int> theta) {
  if (theta.size() != dm.num_factors())
    throw std::invalid_argument(
        fmt::format("dual state has {} entries for {} factors", theta.size(), dm.num_factors()));
  for (std::size_t i = 0; i < theta.size(); ++i)
    if (theta[i] < 0 || static_cast<std::size_t>(theta[i]) >= dm.dual_cardinality(i))
      throw std::invalid_argument(fmt::format("dual state {} out of range for factor {}", theta[i],
                                              dm.base().factors()[i].id.value));
}

/// field(v) plus the messages of the selected dual components.
void primal_log_weights(const DualModel& dm, std::span<const int> theta, VarId v, std::vector<double>& w) {
  const auto field = dm.field(v);
  w.assign(field.begin(), field.end());
  for (const Incidence& inc : dm.base().incidences(v)) {
    const FactorDual& d = dm.dual(inc.factor_index);
    const auto k = static_cast<std::size_t>(theta[inc.factor_index]);
    for (std::size_t s = 0; s < w.size(); ++s) w[s] += d.log_message(k, inc.is_u, static_cast<int>(s));
  }
}

}  // namespace

std::vector<double> dual_conditional(const DualModel& dm, std::size_t factor_index, std::span<const int> x) {
  const FactorDual& d = dm.dual(factor_index);
  const Factor& f = dm.base().factors()[factor_index];
  std::vector<double> w(d.cardinality());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = d.components[k].log_weight + d.log_component(k, x[f.u], x[f.v]);
  return softmax(w);
}

void sample_primal(const DualModel& dm, std::span<const int> theta, const RngStreams& rng, std::uint64_t sweep,
                   State& out) {
  const std::size_t n = dm.num_variables();
  out.resize(n);
  if (!dm.has_equality()) {
    parallel::for_each_index(n, [&](std::size_t v) {
      thread_local std::vector<double> w;
      primal_log_weights(dm, theta, v, w);
      Stream s = rng.stream(StreamPurpose::Primal, v, sweep);
      out[v] = static_cast<int>(sample_log_categorical(w, s.uniform()));
    });
    return;
  }

  UnionFind uf(n);
  const auto factors = dm.base().factors();
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const FactorDual& d = dm.dual(i);
    if (d.components[static_cast<std::size_t>(theta[i])].kind == ComponentKind::Equality)
      uf.unite(factors[i].u, factors[i].v);
  }
  // Group members by cluster root (counting sort keeps each group in index order).
  std::vector<std::size_t> root(n), start(n + 1, 0), members(n);
  for (VarId v = 0; v < n; ++v) {
    root[v] = uf.find(v);
    ++start[root[v] + 1];
  }
  std::partial_sum(start.begin(), start.end(), start.begin());
  std::vector<std::size_t> cursor(start.begin(), start.end() - 1);
  for (VarId v = 0; v < n; ++v) members[cursor[root[v]]++] = v;
  std::vector<std::size_t> roots;
  for (VarId v = 0; v < n; ++v)
    if (root[v] == v) roots.push_back(v);

  parallel::for_each_index(roots.size(), [&](std::size_t c) {
    thread_local std::vector<double> w, total;
    const std::size_t r = roots[c];
    const std::size_t first = start[r], last = start[r + 1];
    total.assign(dm.base().cardinality(members[first]), 0.0);
    for (std::size_t m = first; m < last; ++m) {
      primal_log_weights(dm, theta, members[m], w);
      if (w.size() != total.size())
        throw std::invalid_argument("equality bond joins variables of different cardinality");
      for (std::size_t k = 0; k < w.size(); ++k) total[k] += w[k];
    }
    Stream s = rng.stream(StreamPurpose::Primal, members[first], sweep);
    const int k = static_cast<int>(sample_log_categorical(total, s.uniform()));
    for (std::size_t m = first; m < last; ++m) out[members[m]] = k;
  });
}

void sample_dual(const DualModel& dm, std::span<const int> x, const RngStreams& rng, std::uint64_t sweep,
                 DualState& out, StreamPurpose purpose) {
  const auto factors = dm.base().factors();
  out.resize(factors.size());
  parallel::for_each_index(factors.size(), [&](std::size_t i) {
    thread_local std::vector<double> w;
    const FactorDual& d = dm.dual(i);
    const Factor& f = factors[i];
    w.resize(d.cardinality());
    for (std::size_t k = 0; k < w.size(); ++k)
      w[k] = d.components[k].log_weight + d.log_component(k, x[f.u], x[f.v]);
    Stream s = rng.stream(purpose, f.id.value, sweep);
    out[i] = static_cast<int>(sample_log_categorical(w, s.uniform()));
  });
}

DualState initial_dual(const DualModel& dm, std::span<const int> x, const RngStreams& rng) {
  dm.base().validate_state(x);
  DualState theta;
  sample_dual(dm, x, rng, 0, theta, StreamPurpose::InitDual);
  return theta;
}

void pd_sweep_in_place(const DualModel& dm, State& x, DualState& theta, const RngStreams& rng,
                       std::uint64_t sweep) {
  sample_primal(dm, theta, rng, sweep, x);
  sample_dual(dm, x, rng, sweep, theta);
}

SweepResult pd_sweep(const DualModel& dm, const State& x, const DualState& theta, const RngStreams& rng,
                     std::uint64_t sweep) {
  dm.base().validate_state(x);
  check_dual_state(dm, theta);
  SweepResult r{x, theta, {}};
  pd_sweep_in_place(dm, r.state, r.dual, rng, sweep);
  r.stats = sweep_stats(dm.base(), r.state);
  return r;
}

// ---------------------------------------------------------------------------

DualModel sw_dual_model(const Model& model) {
  return DualModel(model, DualizeOptions{DualizationScheme::SwendsenWang, std::nullopt, 1e-12});
}

void sw_sweep_in_place(const DualModel& sw_model, State& x, DualState& bonds, const RngStreams& rng,
                       std::uint64_t sweep) {
  sample_dual(sw_model, x, rng, sweep, bonds);
  sample_primal(sw_model, bonds, rng, sweep, x);
}

State sw_sweep(const Model& model, const State& x, const RngStreams& rng, std::uint64_t sweep) {
  model.validate_state(x);
  const DualModel sw = sw_dual_model(model);
  State next = x;
  DualState bonds;
  sw_sweep_in_place(sw, next, bonds, rng, sweep);
  return next;
}

std::size_t count_clusters(const DualModel& dm, std::span<const int> theta) {
  check_dual_state(dm, theta);
  UnionFind uf(dm.num_variables());
  std::size_t clusters = dm.num_variables();
  const auto factors = dm.base().factors();
  for (std::size_t i = 0; i < factors.size(); ++i)
    if (dm.dual(i).components[static_cast<std::size_t>(theta[i])].kind == ComponentKind::Equality &&
        uf.unite(factors[i].u, factors[i].v))
      --clusters;
  return clusters;
}

// ---------------------------------------------------------------------------

std::size_t BlockPartition::retained_count() const {
  return static_cast<std::size_t>(std::count(retained.begin(), retained.end(), char{1}));
}

std::vector<FactorId> BlockPartition::retained_ids(const Model& model) const {
  std::vector<FactorId> ids;
  for (std::size_t i = 0; i < retained.size(); ++i)
    if (retained[i]) ids.push_back(model.factors()[i].id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

BlockPartition empty_partition(const Model& model) { return BlockPartition{std::vector<char>(model.num_factors(), 0)}; }

BlockPartition random_spanning_forest(const Model& model, const RngStreams& rng, std::uint64_t sweep) {
  // Shuffle in id order so the result does not depend on dense slot layout.
  std::vector<std::size_t> order = model.indices_by_id();
  Stream s = rng.stream(StreamPurpose::Partition, 0, sweep);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[s.below(i)]);
  BlockPartition p = empty_partition(model);
  UnionFind uf(model.num_variables());
  for (std::size_t idx : order) {
    const Factor& f = model.factors()[idx];
    if (uf.unite(f.u, f.v)) p.retained[idx] = 1;
  }
  return p;
}

void blocked_tree_sweep_in_place(const DualModel& dm, State& x, DualState& theta, const BlockPartition& partition,
                                 const RngStreams& rng, std::uint64_t sweep) {
  const Model& base = dm.base();
  if (partition.retained.size() != base.num_factors())
    throw std::invalid_argument(fmt::format("partition covers {} factors, model has {}",
                                            partition.retained.size(), base.num_factors()));
  for (std::size_t i = 0; i < base.num_factors(); ++i)
    if (!partition.retained[i] && dm.dual(i).has_equality())
      throw std::invalid_argument(fmt::format(
          "blocked sampling needs product-form duals; factor {} has an equality bond", base.factors()[i].id.value));
  const Forest forest(base, partition.retained);

  // Same summation order as DualModel::field followed by messages, so an
  // empty retained set reproduces sample_primal exactly.
  FieldSet fields(base);
  for (VarId v = 0; v < base.num_variables(); ++v) {
    auto w = fields[v];
    const auto& unary = base.variable(v).unary;
    std::copy(unary.begin(), unary.end(), w.begin());
    for (const Incidence& inc : base.incidences(v)) {
      if (partition.retained[inc.factor_index]) continue;
      const FactorDual& d = dm.dual(inc.factor_index);
      const auto& shift = inc.is_u ? d.shift_u : d.shift_v;
      for (std::size_t k = 0; k < w.size(); ++k) w[k] += shift[k];
    }
    for (const Incidence& inc : base.incidences(v)) {
      if (partition.retained[inc.factor_index]) continue;
      const FactorDual& d = dm.dual(inc.factor_index);
      const auto k = static_cast<std::size_t>(theta[inc.factor_index]);
      for (std::size_t s = 0; s < w.size(); ++s) w[s] += d.log_message(k, inc.is_u, static_cast<int>(s));
    }
  }
  forest.sample(base, fields, rng, sweep, x);
  sample_dual(dm, x, rng, sweep, theta);
}

SweepResult blocked_tree_sweep(const DualModel& dm, const State& x, const DualState& theta,
                               const BlockPartition& partition, const RngStreams& rng, std::uint64_t sweep) {
  dm.base().validate_state(x);
  check_dual_state(dm, theta);
  SweepResult r{x, theta, {}};
  blocked_tree_sweep_in_place(dm, r.state, r.dual, partition, rng, sweep);
  r.stats = sweep_stats(dm.base(), r.state);
  return r;
}

// ---------------------------------------------------------------------------

SamplerModels prepare_sampler(const Model& model, SamplerKind kind) {
  SamplerModels m;
  m.model = std::make_shared<const Model>(model);
  switch (kind) {
    case SamplerKind::Sequential:
      break;
    case SamplerKind::PrimalDual:
    case SamplerKind::BlockedTree:
      m.dual = std::make_shared<const DualModel>(model);
      break;
    case SamplerKind::SwendsenWang:
      m.dual = std::make_shared<const DualModel>(sw_dual_model(model));
      break;
  }
  return m;
}

Chain::Chain(SamplerModels models, SamplerKind kind, RngStreams rng, State initial)
    : models_(std::move(models)), kind_(kind), rng_(rng), x_(std::move(initial)) {
  models_.model->validate_state(x_);
  if (kind_ != SamplerKind::Sequential) {
    if (!models_.dual) throw std::invalid_argument("dual-based sampler needs a dual model");
    theta_ = initial_dual(*models_.dual, x_, rng_);
  }
}

void Chain::sweep() {
  ++sweep_;
  switch (kind_) {
    case SamplerKind::Sequential:
      sequential_gibbs_sweep_in_place(*models_.model, x_, rng_, sweep_);
      break;
    case SamplerKind::PrimalDual:
      pd_sweep_in_place(*models_.dual, x_, theta_, rng_, sweep_);
      break;
    case SamplerKind::SwendsenWang:
      sw_sweep_in_place(*models_.dual, x_, theta_, rng_, sweep_);
      break;
    case SamplerKind::BlockedTree:
      blocked_tree_sweep_in_place(*models_.dual, x_, theta_, random_spanning_forest(*models_.model, rng_, sweep_),
                                  rng_, sweep_);
      break;
  }
}

void Chain::site_update() {
  if (kind_ != SamplerKind::Sequential) throw std::logic_error("site updates apply to the sequential sampler only");
  const std::size_t n = models_.model->num_variables();
  if (n == 0) return;
  const VarId v = sites_done_ % n;
  Stream s = rng_.stream(StreamPurpose::Sequential, v, sites_done_ / n + 1);
  gibbs_site_update(*models_.model, x_, v, s);
  ++sites_done_;
  if (sites_done_ % n == 0) ++sweep_;
}

}  // namespace pdgibbs
