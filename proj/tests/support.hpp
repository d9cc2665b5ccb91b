#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pdgibbs/duality.hpp"
#include "pdgibbs/model.hpp"
#include "pdgibbs/oracle.hpp"

namespace testing {

using namespace pdgibbs;

/// Hand-rolled generators; every instance comes from one seeded engine.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  Mat2 positive_mat2() {
    Mat2 m;
    for (auto& row : m.m)
      for (double& x : row) x = std::exp(normal());
    return m;
  }

  Mat2 symmetric_psd_mat2() {
    for (;;) {
      Mat2 m = positive_mat2();
      m(1, 0) = m(0, 1);
      if (m.det() >= 0) return m;
    }
  }

  Table positive_table(std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = std::exp(normal());
    return Table(rows, cols, std::move(v));
  }

  /// Binary model with random unaries and `n_factors` random positive factors
  /// (repeated pairs allowed).
  Model binary_model(std::size_t n_vars, std::size_t n_factors) {
    Model m;
    for (std::size_t v = 0; v < n_vars; ++v) m.add_variable({0.0, normal()});
    for (std::size_t f = 0; f < n_factors; ++f) {
      const std::size_t u = index(n_vars);
      std::size_t w = index(n_vars - 1);
      if (w >= u) ++w;
      m.add_factor(u, w, positive_table(2, 2));
    }
    return m;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline std::vector<double> grid_unaries(std::size_t n, std::uint64_t seed, double scale = 0.5) {
  Gen g(seed);
  std::vector<double> u(n);
  for (double& x : u) x = scale * g.normal();
  return u;
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

/// Largest absolute difference between per-variable marginals.
inline double max_marginal_error(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  double err = 0.0;
  for (std::size_t v = 0; v < a.size(); ++v)
    for (std::size_t k = 0; k < a[v].size(); ++k) err = std::max(err, std::abs(a[v][k] - b[v][k]));
  return err;
}

/// Accumulates empirical marginals and the joint histogram over states.
class Histogram {
 public:
  explicit Histogram(const Model& model) : model_(model), marg_(model.num_variables()) {
    for (VarId v = 0; v < marg_.size(); ++v) marg_[v].assign(model.cardinality(v), 0.0);
    joint_.assign(state_space_size(model), 0.0);
  }

  void add(const State& x) {
    for (VarId v = 0; v < x.size(); ++v) marg_[v][static_cast<std::size_t>(x[v])] += 1.0;
    joint_[state_rank(model_, x)] += 1.0;
    ++n_;
  }

  std::vector<std::vector<double>> marginals() const {
    auto m = marg_;
    for (auto& row : m)
      for (double& x : row) x /= static_cast<double>(n_);
    return m;
  }

  std::vector<double> joint() const {
    auto j = joint_;
    for (double& x : j) x /= static_cast<double>(n_);
    return j;
  }

 private:
  const Model& model_;
  std::vector<std::vector<double>> marg_;
  std::vector<double> joint_;
  std::size_t n_ = 0;
};

}  // namespace testing
