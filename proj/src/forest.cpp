#include "pdgibbs/forest.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <stdexcept>

#include "pdgibbs/math.hpp"
#include "pdgibbs/parallel.hpp"
#include "pdgibbs/union_find.hpp"

namespace pdgibbs {

FieldSet::FieldSet(const Model& model) : offset_(model.num_variables() + 1, 0) {
  for (VarId v = 0; v < model.num_variables(); ++v) offset_[v + 1] = offset_[v] + model.cardinality(v);
  values_.assign(offset_.back(), 0.0);
}

void FieldSet::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

Forest::Forest(const Model& model, std::span<const char> retained) {
  if (retained.size() != model.num_factors())
    throw std::invalid_argument(
        fmt::format("retained mask has {} entries for {} factors", retained.size(), model.num_factors()));
  UnionFind uf(model.num_variables());
  for (std::size_t i = 0; i < retained.size(); ++i) {
    if (!retained[i]) continue;
    const Factor& f = model.factors()[i];
    if (!uf.unite(f.u, f.v))
      throw std::invalid_argument(fmt::format("retained factors contain a cycle through factor {}", f.id.value));
  }

  std::vector<char> seen(model.num_variables(), 0);
  for (VarId root = 0; root < model.num_variables(); ++root) {
    if (seen[root]) continue;
    std::vector<Node> tree;
    tree.push_back(Node{root, 0, 0, false});
    seen[root] = 1;
    for (std::size_t pos = 0; pos < tree.size(); ++pos) {
      const VarId var = tree[pos].var;
      for (const Incidence& inc : model.incidences(var)) {
        if (!retained[inc.factor_index]) continue;
        const Factor& f = model.factors()[inc.factor_index];
        const VarId other = inc.is_u ? f.v : f.u;
        if (seen[other]) continue;
        seen[other] = 1;
        tree.push_back(Node{other, pos, inc.factor_index, inc.is_u});
      }
    }
    trees_.push_back(std::move(tree));
  }
}

namespace {

/// Flat per-node storage of state vectors for one tree.
struct NodeBuffer {
  std::vector<std::size_t> offset;
  std::vector<double> data;

  template <class Nodes>
  NodeBuffer(const Model& model, const Nodes& nodes) : offset(nodes.size() + 1, 0) {
    for (std::size_t i = 0; i < nodes.size(); ++i) offset[i + 1] = offset[i] + model.cardinality(nodes[i].var);
    data.assign(offset.back(), 0.0);
  }
  std::span<double> operator[](std::size_t i) { return {data.data() + offset[i], offset[i + 1] - offset[i]}; }
};

}  // namespace

void Forest::sample(const Model& model, const FieldSet& fields, const RngStreams& rng, std::uint64_t sweep,
                    State& out) const {
  out.resize(model.num_variables());
  parallel::for_each_index(trees_.size(), [&](std::size_t t) {
    const auto& nodes = trees_[t];
    NodeBuffer belief(model, nodes);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      auto src = fields[nodes[i].var];
      std::copy(src.begin(), src.end(), belief[i].begin());
    }
    std::vector<double> scratch;
    for (std::size_t i = nodes.size(); i-- > 1;) {
      const Node& node = nodes[i];
      auto child = belief[i];
      auto parent = belief[node.parent];
      scratch.resize(child.size());
      for (std::size_t xp = 0; xp < parent.size(); ++xp) {
        for (std::size_t xc = 0; xc < child.size(); ++xc)
          scratch[xc] = child[xc] + edge_log(model, node, static_cast<int>(xp), static_cast<int>(xc));
        parent[xp] += log_sum_exp(scratch);
      }
    }
    Stream stream = rng.stream(StreamPurpose::Primal, nodes.front().var, sweep);
    out[nodes.front().var] = static_cast<int>(sample_log_categorical(belief[0], stream.uniform()));
    for (std::size_t i = 1; i < nodes.size(); ++i) {
      const Node& node = nodes[i];
      const int xp = out[nodes[node.parent].var];
      auto child = belief[i];
      scratch.resize(child.size());
      for (std::size_t xc = 0; xc < child.size(); ++xc)
        scratch[xc] = child[xc] + edge_log(model, node, xp, static_cast<int>(xc));
      out[node.var] = static_cast<int>(sample_log_categorical(scratch, stream.uniform()));
    }
  });
}

State Forest::max_assignment(const Model& model, const FieldSet& fields) const {
  State out(model.num_variables(), 0);
  for (const auto& nodes : trees_) {
    NodeBuffer belief(model, nodes);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      auto src = fields[nodes[i].var];
      std::copy(src.begin(), src.end(), belief[i].begin());
    }
    // best[i][xp]: child state maximizing the message into parent state xp.
    std::vector<std::vector<int>> best(nodes.size());
    for (std::size_t i = nodes.size(); i-- > 1;) {
      const Node& node = nodes[i];
      auto child = belief[i];
      auto parent = belief[node.parent];
      best[i].resize(parent.size());
      for (std::size_t xp = 0; xp < parent.size(); ++xp) {
        double top = kNegInf;
        int arg = 0;
        for (std::size_t xc = 0; xc < child.size(); ++xc) {
          const double s = child[xc] + edge_log(model, node, static_cast<int>(xp), static_cast<int>(xc));
          if (s > top) {
            top = s;
            arg = static_cast<int>(xc);
          }
        }
        parent[xp] += top;
        best[i][xp] = arg;
      }
    }
    out[nodes.front().var] = static_cast<int>(argmax_lowest(belief[0]));
    for (std::size_t i = 1; i < nodes.size(); ++i)
      out[nodes[i].var] = best[i][static_cast<std::size_t>(out[nodes[nodes[i].parent].var])];
  }
  return out;
}

ForestMarginals Forest::marginals(const Model& model, const FieldSet& fields) const {
  ForestMarginals result;
  result.node.resize(model.num_variables());
  result.edge.resize(model.num_factors());
  for (const auto& nodes : trees_) {
    NodeBuffer up(model, nodes);
    std::vector<std::vector<double>> to_parent(nodes.size());  // over parent states
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      auto src = fields[nodes[i].var];
      std::copy(src.begin(), src.end(), up[i].begin());
    }
    std::vector<double> scratch;
    for (std::size_t i = nodes.size(); i-- > 1;) {
      const Node& node = nodes[i];
      auto child = up[i];
      auto parent = up[node.parent];
      to_parent[i].resize(parent.size());
      scratch.resize(child.size());
      for (std::size_t xp = 0; xp < parent.size(); ++xp) {
        for (std::size_t xc = 0; xc < child.size(); ++xc)
          scratch[xc] = child[xc] + edge_log(model, node, static_cast<int>(xp), static_cast<int>(xc));
        to_parent[i][xp] = log_sum_exp(scratch);
        parent[xp] += to_parent[i][xp];
      }
    }
    const double log_z = log_sum_exp(up[0]);
    result.log_partition += log_z;

    NodeBuffer full(model, nodes);
    std::copy(up[0].begin(), up[0].end(), full[0].begin());
    for (std::size_t i = 1; i < nodes.size(); ++i) {
      const Node& node = nodes[i];
      auto parent_full = full[node.parent];
      auto child_up = up[i];
      std::vector<double> cavity(parent_full.size());
      for (std::size_t xp = 0; xp < cavity.size(); ++xp)
        cavity[xp] = to_parent[i][xp] == kNegInf ? kNegInf : parent_full[xp] - to_parent[i][xp];
      const Factor& f = model.factors()[node.factor_index];
      Table pair(f.table.rows(), f.table.cols(), std::vector<double>(f.table.rows() * f.table.cols(), 0.0));
      auto child_full = full[i];
      scratch.resize(cavity.size());
      for (std::size_t xc = 0; xc < child_up.size(); ++xc) {
        for (std::size_t xp = 0; xp < cavity.size(); ++xp) {
          const double lp = cavity[xp] + edge_log(model, node, static_cast<int>(xp), static_cast<int>(xc));
          scratch[xp] = lp;
          const double q = std::exp(lp + child_up[xc] - log_z);
          if (node.parent_is_u)
            pair(xp, xc) = q;
          else
            pair(xc, xp) = q;
        }
        child_full[xc] = child_up[xc] + log_sum_exp(scratch);
      }
      result.edge[node.factor_index] = std::move(pair);
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) result.node[nodes[i].var] = softmax(full[i]);
  }
  return result;
}

}  // namespace pdgibbs
