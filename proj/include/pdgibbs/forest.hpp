#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pdgibbs/model.hpp"
#include "pdgibbs/rng.hpp"

namespace pdgibbs {

/// Per-variable log-potential vectors stored contiguously.
class FieldSet {
 public:
  FieldSet() = default;
  explicit FieldSet(const Model& model);

  std::span<double> operator[](VarId v) { return {values_.data() + offset_[v], offset_[v + 1] - offset_[v]}; }
  std::span<const double> operator[](VarId v) const {
    return {values_.data() + offset_[v], offset_[v + 1] - offset_[v]};
  }
  std::size_t size() const { return offset_.empty() ? 0 : offset_.size() - 1; }
  void fill(double value);

 private:
  std::vector<std::size_t> offset_;
  std::vector<double> values_;
};

/// Marginals of a forest-structured distribution.
struct ForestMarginals {
  std::vector<std::vector<double>> node;  // per variable
  std::vector<Table> edge;                // per dense factor index; empty unless retained
  double log_partition = 0.0;
};

/// Exact inference on the subgraph formed by a set of retained factors, with
/// arbitrary per-variable log-potentials. Trees are rooted at their smallest
/// variable and processed in breadth-first order.
class Forest {
 public:
  /// Throws std::invalid_argument when the retained factors contain a cycle.
  Forest(const Model& model, std::span<const char> retained);

  std::size_t num_trees() const { return trees_.size(); }

  /// Exact joint sample. Tree t draws from stream (Primal, root, sweep).
  void sample(const Model& model, const FieldSet& fields, const RngStreams& rng, std::uint64_t sweep,
              State& out) const;

  /// Max-product assignment; ties resolve to the lowest state.
  State max_assignment(const Model& model, const FieldSet& fields) const;

  ForestMarginals marginals(const Model& model, const FieldSet& fields) const;

 private:
  struct Node {
    VarId var;
    std::size_t parent;        // position within the tree; unused for the root
    std::size_t factor_index;  // factor joining this node to its parent
    bool parent_is_u;          // parent sits on the factor's u side
  };

  double edge_log(const Model& model, const Node& node, int x_parent, int x_child) const {
    const Factor& f = model.factors()[node.factor_index];
    return node.parent_is_u ? f.log_value(x_parent, x_child) : f.log_value(x_child, x_parent);
  }

  std::vector<std::vector<Node>> trees_;
};

}  // namespace pdgibbs
