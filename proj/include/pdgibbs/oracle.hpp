#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "pdgibbs/duality.hpp"
#include "pdgibbs/model.hpp"

namespace pdgibbs {

inline constexpr std::size_t kDefaultStateCap = std::size_t{1} << 22;

/// Number of joint states; throws std::length_error when above `cap`.
std::size_t state_space_size(const Model& model, std::size_t cap = kDefaultStateCap);

/// Visits every state in mixed-radix order with variable 0 most significant,
/// i.e. lexicographic order. The index passed is the state's rank.
void for_each_state(const Model& model, const std::function<void(std::size_t, const State&)>& visit,
                    std::size_t cap = kDefaultStateCap);

/// Rank of a state in enumeration order.
std::size_t state_rank(const Model& model, std::span<const int> state);

struct ExactSummary {
  double log_z = 0.0;
  std::vector<std::vector<double>> marginals;  // per variable
  std::vector<Table> pairwise;                 // per dense factor index, p(x_u, x_v)
  std::vector<double> joint;                   // p(x) by rank; empty unless requested
};

double exact_log_z(const Model& model, std::size_t cap = kDefaultStateCap);
ExactSummary exact_summary(const Model& model, bool keep_joint = false, std::size_t cap = kDefaultStateCap);

/// Most probable state; ties resolve to the lexicographically smallest.
State exact_map(const Model& model, std::size_t cap = kDefaultStateCap);

/// Number of dual joint states (one component index per factor).
std::size_t dual_space_size(const DualModel& dm, std::size_t cap = kDefaultStateCap);

/// Visits every dual state, factor 0 (dense order) most significant.
void for_each_dual_state(const DualModel& dm, const std::function<void(std::size_t, const DualState&)>& visit,
                         std::size_t cap = kDefaultStateCap);

/// log p~(x, theta) = sum_v field_v(x_v) + sum_i [log g_i(theta_i) + log comp_{theta_i}(x_u, x_v)].
double log_dual_joint(const DualModel& dm, std::span<const int> x, std::span<const int> theta);

/// Exhaustive summary of p(x, theta).
struct DualJointSummary {
  double log_z = 0.0;               // log of sum over (x, theta)
  std::vector<double> p_x;          // by x rank
  std::vector<double> p_theta;      // by theta rank
  std::vector<double> joint;        // p(x, theta) at [x_rank * |theta space| + theta_rank]; optional
  std::size_t x_states = 0;
  std::size_t theta_states = 0;
  double mutual_information = 0.0;  // I(x, theta)
  double expected_kl = 0.0;         // E_theta KL(p(x | theta), p(x))
  double expected_log_v = 0.0;      // E_{p(x, theta)} log V
  double expected_v_ratio = 0.0;    // E_{p(x, theta)} V / Z
};

/// Enumerates (x, theta). The joint space must fit within `cap`.
DualJointSummary exact_dual_joint(const DualModel& dm, bool keep_joint = false, std::size_t cap = kDefaultStateCap);

/// KL(p, q) for distributions over the same finite set; 0 log 0 = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

}  // namespace pdgibbs
