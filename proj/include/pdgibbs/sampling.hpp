#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "pdgibbs/duality.hpp"
#include "pdgibbs/model.hpp"
#include "pdgibbs/rng.hpp"

namespace pdgibbs {

enum class SamplerKind { Sequential, PrimalDual, SwendsenWang, BlockedTree };

std::string_view to_string(SamplerKind kind);
SamplerKind parse_sampler_kind(std::string_view name);

struct SweepStats {
  double energy = 0.0;
  double magnetization = 0.0;  // mean state index
};

SweepStats sweep_stats(const Model& model, std::span<const int> state);

struct SweepResult {
  State state;
  DualState dual;
  SweepStats stats;
};

/// Independent uniform state, variable v drawn from stream (Init, v, entity).
State uniform_state(const Model& model, const RngStreams& rng, std::uint64_t entity = 0);

// ---------------------------------------------------------------------------
// Sequential single-site Gibbs.

/// Full conditional of v given every other variable.
std::vector<double> conditional_prob(const Model& model, std::span<const int> state, VarId v);

void gibbs_site_update(const Model& model, State& state, VarId v, Stream& stream);

/// Visits variables in index order; v uses stream (Sequential, v, sweep).
void sequential_gibbs_sweep_in_place(const Model& model, State& state, const RngStreams& rng,
                                     std::uint64_t sweep);
State sequential_gibbs_sweep(const Model& model, const State& state, const RngStreams& rng,
                             std::uint64_t sweep);

// ---------------------------------------------------------------------------
// Primal-dual half-steps. Each reads only the other block, so every entry is
// drawn independently and in parallel.

/// p(theta_i | x) for one factor, normalized.
std::vector<double> dual_conditional(const DualModel& dm, std::size_t factor_index, std::span<const int> x);

/// x ~ p(x | theta). Variables joined by active equality bonds form clusters
/// that share one draw from stream (Primal, smallest member, sweep); without
/// bonds every variable is its own cluster.
void sample_primal(const DualModel& dm, std::span<const int> theta, const RngStreams& rng,
                   std::uint64_t sweep, State& out);

/// theta ~ p(theta | x); factor i uses stream (purpose, id_i, sweep).
void sample_dual(const DualModel& dm, std::span<const int> x, const RngStreams& rng, std::uint64_t sweep,
                 DualState& out, StreamPurpose purpose = StreamPurpose::Dual);

/// theta_0 ~ p(theta | x_0), the chain's starting dual state.
DualState initial_dual(const DualModel& dm, std::span<const int> x, const RngStreams& rng);

/// x-half then theta-half.
void pd_sweep_in_place(const DualModel& dm, State& x, DualState& theta, const RngStreams& rng,
                       std::uint64_t sweep);
SweepResult pd_sweep(const DualModel& dm, const State& x, const DualState& theta, const RngStreams& rng,
                     std::uint64_t sweep);

// ---------------------------------------------------------------------------
// Swendsen-Wang: the primal-dual sweep of the equality-bond dual, run
// bonds-first so it maps a state to a state.

DualModel sw_dual_model(const Model& model);
void sw_sweep_in_place(const DualModel& sw_model, State& x, DualState& bonds, const RngStreams& rng,
                       std::uint64_t sweep);
State sw_sweep(const Model& model, const State& x, const RngStreams& rng, std::uint64_t sweep);

/// Number of clusters induced by the active equality bonds of `theta`.
std::size_t count_clusters(const DualModel& dm, std::span<const int> theta);

// ---------------------------------------------------------------------------
// Blocked sampling over a forest of retained factors.

/// Factors flagged as retained are kept exact; the rest (theta_1) are dualized.
struct BlockPartition {
  std::vector<char> retained;  // per dense factor index

  std::size_t retained_count() const;
  std::vector<FactorId> retained_ids(const Model& model) const;
};

BlockPartition empty_partition(const Model& model);

/// Kruskal over a uniformly shuffled factor order (stream (Partition, 0,
/// sweep)); the result is a maximal spanning forest.
BlockPartition random_spanning_forest(const Model& model, const RngStreams& rng, std::uint64_t sweep);

/// x ~ p(x | theta_1) exactly on the forest, then all of theta ~ p(theta | x).
/// Requires product-form duals on every dualized factor.
void blocked_tree_sweep_in_place(const DualModel& dm, State& x, DualState& theta,
                                 const BlockPartition& partition, const RngStreams& rng, std::uint64_t sweep);
SweepResult blocked_tree_sweep(const DualModel& dm, const State& x, const DualState& theta,
                               const BlockPartition& partition, const RngStreams& rng, std::uint64_t sweep);

// ---------------------------------------------------------------------------
// Chains.

/// Models a sampler needs: the primal model and, for dual-based samplers,
/// the matching dual model (Swendsen-Wang bonds for SwendsenWang).
struct SamplerModels {
  std::shared_ptr<const Model> model;
  std::shared_ptr<const DualModel> dual;
};

SamplerModels prepare_sampler(const Model& model, SamplerKind kind);

/// One Markov chain. Sweep t of the chain uses sweep index t (from 1), so a
/// chain is a pure function of its streams and initial state.
class Chain {
 public:
  Chain(SamplerModels models, SamplerKind kind, RngStreams rng, State initial);

  void sweep();
  /// One single-site update of the sequential sampler, cycling through variables.
  void site_update();

  SamplerKind kind() const { return kind_; }
  const State& state() const { return x_; }
  const DualState& dual() const { return theta_; }
  std::uint64_t sweeps_done() const { return sweep_; }
  const Model& model() const { return *models_.model; }

 private:
  SamplerModels models_;
  SamplerKind kind_;
  RngStreams rng_;
  State x_;
  DualState theta_;
  std::uint64_t sweep_ = 0;
  std::uint64_t sites_done_ = 0;
};

}  // namespace pdgibbs
