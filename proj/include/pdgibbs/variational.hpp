#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pdgibbs/duality.hpp"
#include "pdgibbs/model.hpp"
#include "pdgibbs/sampling.hpp"

namespace pdgibbs {

/// Per-variable vectors over states. For a binary variable, index 1 of an
/// expectation vector is E[x_v].
using StateVectors = std::vector<std::vector<double>>;

/// eta: expected one-hot encoding of x under p(x | xi), one distribution per
/// variable. xi: aggregated expected dual messages landing on each variable.
struct MeanFieldState {
  StateVectors eta;
  StateVectors xi;
};

struct MapState {
  State x;
  StateVectors xi;
};

// All routines below need product-form duals and throw std::invalid_argument
// for equality bonds.

/// xi = E[r(theta) | x], with theta ~ p(theta | x).
StateVectors expected_messages(const DualModel& dm, std::span<const int> x);
/// xi = E[r(theta)] under p(theta | eta), the dual conditional with s(x) replaced by eta.
StateVectors expected_messages(const DualModel& dm, const StateVectors& eta);

/// q_v = softmax(field_v + xi_v): the marginals of p(x | xi).
StateVectors primal_marginals(const DualModel& dm, const StateVectors& xi);

StateVectors uniform_vectors(const Model& model);
StateVectors zero_vectors(const Model& model);

/// eta uniform, xi = 0.
MeanFieldState initial_mean_field(const DualModel& dm);
/// x = argmax of field + E[r | eta uniform], then xi = E[r | x].
MapState initial_map_state(const DualModel& dm);
/// x = x0, xi = E[r | x0].
MapState initial_map_state(const DualModel& dm, State x0);

/// x_v = argmax(field_v + xi_v) (ties to the lowest state), then xi = E[r | x].
MapState em_map_step(const DualModel& dm, const MapState& state);

/// eta = (1 - damping) softmax(field + xi) + damping eta, then xi = E[r | eta].
MeanFieldState mean_field_step(const DualModel& dm, const MeanFieldState& state, double damping = 0.0);

/// KL(p(x | xi) p(theta | eta), p(x, theta)) minus log Z. Needs no enumeration.
double joint_free_energy(const DualModel& dm, const MeanFieldState& state);
/// KL(p(x | xi) p(theta | eta), p(x, theta)), using the exact log Z (x-space
/// capped at 2^20 states).
double joint_kl_objective(const DualModel& dm, const MeanFieldState& state);
double joint_kl_objective(const DualModel& dm, const MeanFieldState& state, double log_z);

/// E_q[log q] - E_q[log p~] for a fully factorized q over the primal model.
double primal_free_energy(const Model& model, const StateVectors& q);
/// KL(q, p(x)) = primal_free_energy + log Z.
double primal_kl(const Model& model, const StateVectors& q, double log_z);

// ---------------------------------------------------------------------------
// Tree-blocked variants. Retained factors stay exact; only theta_1 (the rest)
// is treated variationally. xi_1 is recomputed from the current x or eta.

MapState tree_blocked_map_step(const DualModel& dm, const MapState& state, const BlockPartition& partition);
MeanFieldState tree_blocked_mf_step(const DualModel& dm, const MeanFieldState& state,
                                    const BlockPartition& partition);

/// KL(q(x) q(theta_1), p(x, theta_1)) - log Z, where q(theta_1) = p(theta_1 | eta)
/// and q(x) is the forest distribution given q(theta_1).
double tree_free_energy(const DualModel& dm, const StateVectors& eta, const BlockPartition& partition);

// ---------------------------------------------------------------------------
// Coordinate-ascent mean field directly on p(x).

struct NaiveMeanFieldResult {
  StateVectors q;
  std::size_t iterations = 0;
  bool converged = false;
  double free_energy = 0.0;
};

NaiveMeanFieldResult naive_mean_field(const Model& model, StateVectors init, double tolerance = 1e-10,
                                      std::size_t max_iterations = 10000);

// ---------------------------------------------------------------------------
// Drivers.

struct VariationalOptions {
  double tolerance = 1e-8;  // max-norm change of eta
  std::size_t max_iterations = 10000;
  double damping = 0.0;
  bool fine_tune = false;  // finish mean field with coordinate ascent on p(x)
};

struct MapRun {
  MapState state;
  std::vector<double> objective;  // log p~(x) per iterate, starting with the initial state
  std::size_t iterations = 0;
  bool converged = false;
  double final_delta = 0.0;  // variables changed by the last step
};

struct MeanFieldRun {
  MeanFieldState state;
  std::vector<double> objective;  // free energy per iterate, starting with the initial state
  std::size_t iterations = 0;
  bool converged = false;
  double final_delta = 0.0;
  std::optional<NaiveMeanFieldResult> fine_tuned;
  StateVectors marginals() const;  // fine-tuned when present, else eta
};

MapRun run_em_map(const DualModel& dm, const VariationalOptions& options = {},
                  std::optional<MapState> init = std::nullopt);
MapRun run_tree_map(const DualModel& dm, const BlockPartition& partition, const VariationalOptions& options = {},
                    std::optional<MapState> init = std::nullopt);
MeanFieldRun run_mean_field(const DualModel& dm, const VariationalOptions& options = {});
MeanFieldRun run_tree_mean_field(const DualModel& dm, const BlockPartition& partition,
                                 const VariationalOptions& options = {});

}  // namespace pdgibbs
