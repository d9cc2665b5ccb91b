#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace pdgibbs {

using VarId = std::size_t;

/// Stable factor handle. Ids are never reused within one model's lifetime.
struct FactorId {
  std::uint64_t value = 0;
  friend auto operator<=>(const FactorId&, const FactorId&) = default;
};

/// Assignment of a state index to every variable.
using State = std::vector<int>;

/// Clamped variables and their fixed states.
using Evidence = std::map<VarId, int>;

/// Dense row-major matrix of unnormalized probabilities.
class Table {
 public:
  Table() = default;
  Table(std::size_t rows, std::size_t cols, std::vector<double> values);
  Table(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  std::span<const double> values() const { return values_; }

  double max_entry() const;
  double min_entry() const;
  Table transposed() const;

  friend bool operator==(const Table&, const Table&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Table ising_table(double beta);
/// Potts table: 1 on the diagonal, e^{-w} elsewhere.
Table potts_table(std::size_t n_states, double w);

struct Variable {
  std::size_t cardinality = 2;
  std::vector<double> unary;  // log-potentials, one per state
};

struct Factor {
  FactorId id;
  VarId u = 0;
  VarId v = 0;
  Table table;
  std::vector<double> log_table;  // cached log of `table`, row-major

  double log_value(int xu, int xv) const {
    return log_table[static_cast<std::size_t>(xu) * table.cols() + static_cast<std::size_t>(xv)];
  }
};

/// One entry of a variable's adjacency: the factor's dense index and whether
/// the variable is the factor's first (u) endpoint.
struct Incidence {
  std::size_t factor_index;
  bool is_u;
};

/// Discrete pairwise Markov random field with strictly positive factors.
///
/// Factors live in a dense array. Removing a factor moves the last factor
/// into the vacated slot, so dense indices are only stable between edits;
/// FactorId is the stable handle. Edits touch only the two endpoints'
/// adjacency lists, which `edit_operations()` counts.
class Model {
 public:
  Model() = default;
  explicit Model(std::vector<std::size_t> cardinalities);

  VarId add_variable(std::vector<double> unary);
  void set_unary(VarId v, std::vector<double> unary);

  FactorId add_factor(VarId u, VarId v, Table table);
  /// Inserts under a caller-chosen id, which must be >= next_factor_id().
  FactorId add_factor_with_id(FactorId id, VarId u, VarId v, Table table);
  void remove_factor(FactorId id);

  std::size_t num_variables() const { return variables_.size(); }
  std::size_t num_factors() const { return factors_.size(); }

  const Variable& variable(VarId v) const;
  std::size_t cardinality(VarId v) const { return variables_[v].cardinality; }
  std::span<const Variable> variables() const { return variables_; }

  bool contains(FactorId id) const { return index_.contains(id.value); }
  const Factor& factor(FactorId id) const { return factors_[factor_index(id)]; }
  std::size_t factor_index(FactorId id) const;
  std::span<const Factor> factors() const { return factors_; }
  /// Dense indices ordered by factor id.
  std::vector<std::size_t> indices_by_id() const;

  std::span<const Incidence> incidences(VarId v) const { return adjacency_[v]; }
  std::vector<FactorId> incident_factors(VarId v) const;

  FactorId next_factor_id() const { return FactorId{next_id_}; }
  std::uint64_t edit_operations() const { return edit_operations_; }

  void validate_state(std::span<const int> state) const;

 private:
  std::vector<Variable> variables_;
  std::vector<Factor> factors_;
  std::vector<std::vector<Incidence>> adjacency_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::uint64_t next_id_ = 0;
  std::uint64_t edit_operations_ = 0;
};

/// Log of the unnormalized probability of `state`.
double energy(const Model& model, std::span<const int> state);

/// Height x width binary grid with 4-neighbourhood Ising factors. `unaries`
/// holds the state-1 log-potential per variable (row-major); empty means zero.
Model build_grid_ising(std::size_t height, std::size_t width, double beta,
                       std::span<const double> unaries = {});

/// Binary model with k * n_vars factors on distinct pairs. Unary state-1
/// log-potentials and all four log-table entries are standard normal.
Model build_random_graph(std::size_t n_vars, std::size_t k, std::uint64_t seed);

/// Fully connected binary Ising model with zero unaries.
Model build_full_ising(std::size_t n_vars, double beta);

/// Result of absorbing evidence: a model over the free variables only.
struct ClampedModel {
  Model model;
  std::vector<VarId> original_ids;               // new id -> original id
  std::vector<std::optional<VarId>> reduced_ids;  // original id -> new id
  double log_constant = 0.0;  // clamped unaries plus fully clamped factors

  /// Lifts a reduced state back to the original variables.
  State expand(std::span<const int> reduced, const Evidence& evidence) const;
};

ClampedModel clamp(const Model& model, const Evidence& evidence);

}  // namespace pdgibbs

template <>
struct std::hash<pdgibbs::FactorId> {
  std::size_t operator()(const pdgibbs::FactorId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};
