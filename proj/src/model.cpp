#include "pdgibbs/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include <fmt/format.h>

namespace pdgibbs {

Table::Table(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_)
    throw std::invalid_argument(
        fmt::format("table has {} entries, expected {}x{}", values_.size(), rows_, cols_));
}

Table::Table(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  for (const auto& row : rows) {
    if (row.size() != cols_) throw std::invalid_argument("ragged table literal");
    values_.insert(values_.end(), row.begin(), row.end());
  }
}

double Table::max_entry() const { return *std::max_element(values_.begin(), values_.end()); }

double Table::min_entry() const { return *std::min_element(values_.begin(), values_.end()); }

Table Table::transposed() const {
  std::vector<double> t(values_.size());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t[c * rows_ + r] = values_[r * cols_ + c];
  return Table(cols_, rows_, std::move(t));
}

Table ising_table(double beta) { return potts_table(2, beta); }

Table potts_table(std::size_t n_states, double w) {
  const double off = std::exp(-w);
  std::vector<double> values(n_states * n_states, off);
  for (std::size_t k = 0; k < n_states; ++k) values[k * n_states + k] = 1.0;
  return Table(n_states, n_states, std::move(values));
}

Model::Model(std::vector<std::size_t> cardinalities) {
  for (std::size_t card : cardinalities) add_variable(std::vector<double>(card, 0.0));
}

VarId Model::add_variable(std::vector<double> unary) {
  if (unary.size() < 2) throw std::invalid_argument("variable cardinality must be >= 2");
  for (double a : unary)
    if (!std::isfinite(a)) throw std::invalid_argument("unary log-potentials must be finite");
  const std::size_t card = unary.size();
  variables_.push_back(Variable{card, std::move(unary)});
  adjacency_.emplace_back();
  return variables_.size() - 1;
}

void Model::set_unary(VarId v, std::vector<double> unary) {
  const Variable& var = variable(v);
  if (unary.size() != var.cardinality)
    throw std::invalid_argument(fmt::format("variable {} expects {} unary entries", v, var.cardinality));
  for (double a : unary)
    if (!std::isfinite(a)) throw std::invalid_argument("unary log-potentials must be finite");
  variables_[v].unary = std::move(unary);
}

const Variable& Model::variable(VarId v) const {
  if (v >= variables_.size()) throw std::out_of_range(fmt::format("unknown variable {}", v));
  return variables_[v];
}

FactorId Model::add_factor(VarId u, VarId v, Table table) {
  return add_factor_with_id(FactorId{next_id_}, u, v, std::move(table));
}

FactorId Model::add_factor_with_id(FactorId id, VarId u, VarId v, Table table) {
  if (id.value < next_id_)
    throw std::invalid_argument(fmt::format("factor id {} is not fresh", id.value));
  if (u >= variables_.size() || v >= variables_.size())
    throw std::out_of_range(fmt::format("factor {} scope ({}, {}) names an unknown variable", id.value, u, v));
  if (u == v) throw std::invalid_argument(fmt::format("factor {} has scope ({}, {}) with u == v", id.value, u, v));
  if (table.rows() != variables_[u].cardinality || table.cols() != variables_[v].cardinality)
    throw std::invalid_argument(fmt::format("factor {} table is {}x{}, scope needs {}x{}", id.value,
                                            table.rows(), table.cols(), variables_[u].cardinality,
                                            variables_[v].cardinality));
  for (double t : table.values())
    if (!(t > 0.0) || !std::isfinite(t))
      throw std::invalid_argument(fmt::format("factor {}: table entries must be finite and > 0", id.value));

  std::vector<double> logs(table.values().size());
  std::transform(table.values().begin(), table.values().end(), logs.begin(),
                 [](double t) { return std::log(t); });
  const std::size_t index = factors_.size();
  factors_.push_back(Factor{id, u, v, std::move(table), std::move(logs)});
  adjacency_[u].push_back(Incidence{index, true});
  adjacency_[v].push_back(Incidence{index, false});
  index_.emplace(id.value, index);
  next_id_ = id.value + 1;
  edit_operations_ += 2;
  return id;
}

void Model::remove_factor(FactorId id) {
  const std::size_t index = factor_index(id);
  const std::size_t last = factors_.size() - 1;

  auto drop = [this](VarId var, std::size_t idx) {
    auto& adj = adjacency_[var];
    for (std::size_t k = 0; k < adj.size(); ++k) {
      ++edit_operations_;
      if (adj[k].factor_index == idx) {
        adj.erase(adj.begin() + static_cast<std::ptrdiff_t>(k));
        return;
      }
    }
  };
  auto relabel = [this](VarId var, std::size_t from, std::size_t to) {
    for (auto& inc : adjacency_[var]) {
      ++edit_operations_;
      if (inc.factor_index == from) {
        inc.factor_index = to;
        return;
      }
    }
  };

  drop(factors_[index].u, index);
  drop(factors_[index].v, index);
  if (index != last) {
    relabel(factors_[last].u, last, index);
    relabel(factors_[last].v, last, index);
    factors_[index] = std::move(factors_[last]);
    index_[factors_[index].id.value] = index;
  }
  factors_.pop_back();
  index_.erase(id.value);
}

std::size_t Model::factor_index(FactorId id) const {
  auto it = index_.find(id.value);
  if (it == index_.end()) throw std::out_of_range(fmt::format("unknown factor id {}", id.value));
  return it->second;
}

std::vector<std::size_t> Model::indices_by_id() const {
  std::vector<std::size_t> order(factors_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [this](std::size_t a, std::size_t b) { return factors_[a].id < factors_[b].id; });
  return order;
}

std::vector<FactorId> Model::incident_factors(VarId v) const {
  std::vector<FactorId> ids;
  for (const auto& inc : adjacency_.at(v)) ids.push_back(factors_[inc.factor_index].id);
  return ids;
}

void Model::validate_state(std::span<const int> state) const {
  if (state.size() != variables_.size())
    throw std::invalid_argument(
        fmt::format("state has {} entries, model has {} variables", state.size(), variables_.size()));
  for (std::size_t v = 0; v < state.size(); ++v)
    if (state[v] < 0 || static_cast<std::size_t>(state[v]) >= variables_[v].cardinality)
      throw std::invalid_argument(fmt::format("state of variable {} is {}, outside [0, {})", v,
                                              state[v], variables_[v].cardinality));
}

double energy(const Model& model, std::span<const int> state) {
  model.validate_state(state);
  double e = 0.0;
  for (std::size_t v = 0; v < state.size(); ++v) e += model.variables()[v].unary[state[v]];
  for (const Factor& f : model.factors()) e += f.log_value(state[f.u], state[f.v]);
  return e;
}

Model build_grid_ising(std::size_t height, std::size_t width, double beta,
                       std::span<const double> unaries) {
  if (height == 0 || width == 0) throw std::invalid_argument("grid dimensions must be >= 1");
  const std::size_t n = height * width;
  if (!unaries.empty() && unaries.size() != n)
    throw std::invalid_argument(fmt::format("expected {} unaries, got {}", n, unaries.size()));
  Model model;
  for (std::size_t i = 0; i < n; ++i) model.add_variable({0.0, unaries.empty() ? 0.0 : unaries[i]});
  const Table table = ising_table(beta);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t i = r * width + c;
      if (c + 1 < width) model.add_factor(i, i + 1, table);
      if (r + 1 < height) model.add_factor(i, i + width, table);
    }
  }
  return model;
}

Model build_random_graph(std::size_t n_vars, std::size_t k, std::uint64_t seed) {
  if (n_vars < 2) throw std::invalid_argument("random graph needs at least 2 variables");
  const std::size_t max_pairs = n_vars * (n_vars - 1) / 2;
  if (k * n_vars > max_pairs)
    throw std::invalid_argument(
        fmt::format("k = {} needs {} distinct pairs, only {} exist", k, k * n_vars, max_pairs));

  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, n_vars - 1);

  Model model;
  for (std::size_t i = 0; i < n_vars; ++i) model.add_variable({0.0, normal(gen)});

  std::set<std::pair<std::size_t, std::size_t>> used;
  while (used.size() < k * n_vars) {
    std::size_t a = pick(gen);
    std::size_t b = pick(gen);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (!used.emplace(a, b).second) continue;
    std::vector<double> values(4);
    for (double& t : values) t = std::exp(normal(gen));
    model.add_factor(a, b, Table(2, 2, std::move(values)));
  }
  return model;
}

Model build_full_ising(std::size_t n_vars, double beta) {
  if (n_vars < 2) throw std::invalid_argument("fully connected model needs at least 2 variables");
  Model model(std::vector<std::size_t>(n_vars, 2));
  const Table table = ising_table(beta);
  for (std::size_t a = 0; a < n_vars; ++a)
    for (std::size_t b = a + 1; b < n_vars; ++b) model.add_factor(a, b, table);
  return model;
}

State ClampedModel::expand(std::span<const int> reduced, const Evidence& evidence) const {
  State full(reduced_ids.size(), 0);
  for (std::size_t v = 0; v < reduced_ids.size(); ++v) {
    if (reduced_ids[v]) {
      full[v] = reduced[*reduced_ids[v]];
    } else {
      full[v] = evidence.at(v);
    }
  }
  return full;
}

ClampedModel clamp(const Model& model, const Evidence& evidence) {
  for (const auto& [v, x] : evidence) {
    if (v >= model.num_variables())
      throw std::out_of_range(fmt::format("cannot clamp unknown variable {}", v));
    if (x < 0 || static_cast<std::size_t>(x) >= model.cardinality(v))
      throw std::invalid_argument(fmt::format("evidence state {} for variable {} out of range", x, v));
  }

  ClampedModel out;
  out.reduced_ids.assign(model.num_variables(), std::nullopt);
  std::vector<std::vector<double>> unaries;
  for (VarId v = 0; v < model.num_variables(); ++v) {
    const auto& var = model.variables()[v];
    if (auto it = evidence.find(v); it != evidence.end()) {
      out.log_constant += var.unary[it->second];
    } else {
      out.reduced_ids[v] = out.original_ids.size();
      out.original_ids.push_back(v);
      unaries.push_back(var.unary);
    }
  }

  for (std::size_t index : model.indices_by_id()) {
    const Factor& f = model.factors()[index];
    const auto eu = evidence.find(f.u);
    const auto ev = evidence.find(f.v);
    const bool cu = eu != evidence.end();
    const bool cv = ev != evidence.end();
    if (cu && cv) {
      out.log_constant += f.log_value(eu->second, ev->second);
    } else if (cu) {
      auto& un = unaries[*out.reduced_ids[f.v]];
      for (std::size_t k = 0; k < un.size(); ++k) un[k] += f.log_value(eu->second, static_cast<int>(k));
    } else if (cv) {
      auto& un = unaries[*out.reduced_ids[f.u]];
      for (std::size_t k = 0; k < un.size(); ++k) un[k] += f.log_value(static_cast<int>(k), ev->second);
    }
  }

  for (auto& un : unaries) out.model.add_variable(std::move(un));
  for (std::size_t index : model.indices_by_id()) {
    const Factor& f = model.factors()[index];
    if (evidence.contains(f.u) || evidence.contains(f.v)) continue;
    out.model.add_factor_with_id(f.id, *out.reduced_ids[f.u], *out.reduced_ids[f.v], f.table);
  }
  return out;
}

}  // namespace pdgibbs
