#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pdgibbs/model.hpp"

namespace pdgibbs {

/// 2x2 matrix, zero-based: m[row][col].
struct Mat2 {
  double m[2][2] = {{0, 0}, {0, 0}};

  double operator()(int r, int c) const { return m[r][c]; }
  double& operator()(int r, int c) { return m[r][c]; }
  double det() const { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }
  Mat2 transposed() const { return Mat2{{{m[0][0], m[1][0]}, {m[0][1], m[1][1]}}}; }
  friend Mat2 operator*(const Mat2& a, const Mat2& b);
  friend bool operator==(const Mat2&, const Mat2&) = default;
};

Mat2 to_mat2(const Table& table);

// ---------------------------------------------------------------------------
// Positive factorization of 2x2 tables.

struct SymmetricFactorization {
  Mat2 b;      // P = B B^T
  double phi;  // rotation angle in [0, pi/4]
};

/// Factors a symmetric, strictly positive P with det P >= 0 as P = B B^T
/// with B >= 0 entrywise (strictly positive whenever P is). B's rows are
/// sqrt(p11) (cos phi, sin phi) and sqrt(p22) (sin phi, cos phi).
SymmetricFactorization symmetric_factor(const Mat2& p);

struct PositiveFactorization {
  Mat2 b;
  Mat2 c;  // P = B C^T
};

/// Strictly positive factorization of any strictly positive 2x2 matrix:
/// row-swap when det < 0, rescale rows to make it symmetric, factor the
/// symmetric matrix, then undo the rescaling and swap on the left factor.
PositiveFactorization factorize_positive(const Mat2& p);

// ---------------------------------------------------------------------------
// Binary dual parameters.

/// Parameters of a binary factor's dual: h(x) = e^{alpha1 x1 + alpha2 x2},
/// g(theta) = e^{q theta}, r(theta) = theta (beta1, beta2).
struct DualFactor {
  double alpha1 = 0;
  double alpha2 = 0;
  double q = 0;
  double beta1 = 0;
  double beta2 = 0;
};

DualFactor dual_params(const Mat2& b, const Mat2& c);

/// sum over theta of h(x) g(theta) e^{<x, r(theta)>}, for every (x1, x2).
/// Proportional to the table the parameters were derived from.
Mat2 marginalize_dual(const DualFactor& d);

// ---------------------------------------------------------------------------
// Mixtures of rank-one terms.

enum class ComponentKind {
  Product,   // weight * left(x_u) * right(x_v)
  Equality,  // weight * left(x_u) * [x_u == x_v]; `right` unused
};

struct MixtureComponent {
  ComponentKind kind = ComponentKind::Product;
  double weight = 0;
  std::vector<double> left;
  std::vector<double> right;
};

/// Additive decomposition of a factor table into nonnegative terms, each
/// selected by one state of the factor's dual variable.
struct RankOneMixture {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<MixtureComponent> components;

  std::vector<double> weights() const;
  Table reconstruct() const;
};

/// Swendsen-Wang split of a Potts table (1 on the diagonal, e^{-w} off it)
/// into an independence term of weight e^{-w} and an equality bond of weight
/// 1 - e^{-w}. Requires w > 0.
RankOneMixture sw_decompose(double w, std::size_t n_states);

/// Partial Swendsen-Wang split of the Ising table: the [[1-a, e^{-w}],
/// [e^{-w}, 1-a]] term is positively factorized into two product components
/// and a*I becomes an equality bond. Requires 0 < a <= 1 - e^{-w}.
RankOneMixture higdon_decompose(double w, double alpha);

inline double default_higdon_alpha(double w) { return 0.5 * (1.0 - std::exp(-w)); }

/// A constant component carrying the table minimum, plus one indicator
/// component per entry above it. The constant term keeps every state
/// reachable under p(x | theta), which pure indicators would not.
RankOneMixture entrywise_mixture(const Table& table);

/// Detects the Potts form c * potts_table(n, w); returns w when it matches.
std::optional<double> potts_coupling(const Table& table, double rel_tol = 1e-12);

// ---------------------------------------------------------------------------
// Per-factor dual in log domain, as consumed by samplers and estimators.

struct DualComponent {
  ComponentKind kind = ComponentKind::Product;
  double log_weight = 0;
  std::vector<double> log_left;   // over states of u (Equality: the diagonal)
  std::vector<double> log_right;  // over states of v (empty for Equality)
};

/// Dual of one factor:
///   table(a, b) = exp(shift_u[a] + shift_v[b]) * sum_k exp(log_weight_k) * comp_k(a, b).
/// The shifts are the factor's h_i, absorbed into per-variable fields.
struct FactorDual {
  std::vector<double> shift_u;
  std::vector<double> shift_v;
  std::vector<DualComponent> components;
  std::optional<DualFactor> params;  // set on the binary factorization path

  std::size_t cardinality() const { return components.size(); }
  bool has_equality() const;

  /// log of comp_k(a, b), i.e. the k-th term without its weight or shifts.
  double log_component(std::size_t k, int a, int b) const;
  /// Message comp_k contributes to the u (is_u) or v endpoint, state s.
  double log_message(std::size_t k, bool is_u, int s) const;
};

enum class DualizationScheme {
  Factorized,    // 2x2 positive factorization; Potts via SW; other tables entrywise
  SwendsenWang,  // every factor must have Potts form with w > 0
  Higdon,        // binary Potts factors via partial SW, others as Factorized
};

struct DualizeOptions {
  DualizationScheme scheme = DualizationScheme::Factorized;
  std::optional<double> higdon_alpha;  // default: (1 - e^{-w}) / 2
  /// Entries below this fraction of the table maximum count as zero.
  double zero_threshold = 1e-12;
};

FactorDual dualize_factor(const Factor& factor, const DualizeOptions& options = {});
FactorDual factor_dual_from(const DualFactor& params, const PositiveFactorization& bc);
FactorDual factor_dual_from(const RankOneMixture& mixture, double log_scale);

/// A model augmented with one dual variable per factor.
///
/// Per-factor duals are kept parallel to the base model's dense factor array.
/// `field(v)` is log h restricted to v: the unary plus every absorbed shift.
class DualModel {
 public:
  explicit DualModel(Model base, DualizeOptions options = {});
  /// Uses the given duals (dense factor order) after checking that each one
  /// reconstructs its table up to a constant, relative error `tolerance`.
  DualModel(Model base, std::vector<FactorDual> duals, DualizeOptions options = {}, double tolerance = 1e-9);

  const Model& base() const { return base_; }
  const DualizeOptions& options() const { return options_; }
  std::size_t num_variables() const { return base_.num_variables(); }
  std::size_t num_factors() const { return duals_.size(); }

  const FactorDual& dual(std::size_t index) const { return duals_[index]; }
  std::span<const FactorDual> duals() const { return duals_; }
  std::size_t dual_cardinality(std::size_t index) const { return duals_[index].cardinality(); }
  std::span<const double> field(VarId v) const { return fields_[v]; }

  bool has_equality() const { return equality_factors_ > 0; }

  /// Adds a factor and dualizes only it. Cost is O(deg(u) + deg(v)).
  FactorId add_factor(VarId u, VarId v, Table table);
  /// Removes a factor. When `theta` is given it is kept parallel to the
  /// dense factor order (same move-last-into-slot rule as Model).
  void remove_factor(FactorId id, std::vector<int>* theta = nullptr);

  /// Work done refreshing per-variable fields, for locality checks.
  std::uint64_t field_operations() const { return field_operations_; }

 private:
  void refresh_field(VarId v);

  Model base_;
  DualizeOptions options_;
  std::vector<FactorDual> duals_;
  std::vector<std::vector<double>> fields_;
  std::size_t equality_factors_ = 0;
  std::uint64_t field_operations_ = 0;
};

DualModel dualize_model(const Model& model, DualizeOptions options = {});

/// table(a, b) recovered from a dual by summing out theta.
Table reconstruct_table(const FactorDual& dual);

/// Assignment of a component index to every factor's dual variable, in dense
/// factor order.
using DualState = std::vector<int>;

}  // namespace pdgibbs
