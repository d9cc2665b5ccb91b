#include "pdgibbs/duality.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "pdgibbs/math.hpp"

namespace pdgibbs {

namespace {

bool all_positive(const Mat2& p) {
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      if (!(p(r, c) > 0.0) || !std::isfinite(p(r, c))) return false;
  return true;
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

std::vector<double> logs_of(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), safe_log);
  return out;
}

// Symmetric factorization once the cosine argument is known to be in [0, 1].
SymmetricFactorization factor_with_cosine(double p11, double p22, double a) {
  a = std::clamp(a, 0.0, 1.0);
  const double plus = std::sqrt(1.0 + a);
  const double minus = std::sqrt(1.0 - a);
  const double cos_phi = 0.5 * (plus + minus);
  // (plus - minus) / 2 rewritten to avoid cancellation when a is small.
  const double sin_phi = a / (plus + minus);
  const double phi = std::numbers::pi / 4.0 - 0.5 * std::acos(a);
  const double r1 = std::sqrt(p11);
  const double r2 = std::sqrt(p22);
  return SymmetricFactorization{Mat2{{{r1 * cos_phi, r1 * sin_phi}, {r2 * sin_phi, r2 * cos_phi}}}, phi};
}

}  // namespace

Mat2 operator*(const Mat2& a, const Mat2& b) {
  Mat2 out;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) out(r, c) = a(r, 0) * b(0, c) + a(r, 1) * b(1, c);
  return out;
}

Mat2 to_mat2(const Table& table) {
  if (table.rows() != 2 || table.cols() != 2)
    throw std::invalid_argument(fmt::format("expected a 2x2 table, got {}x{}", table.rows(), table.cols()));
  return Mat2{{{table(0, 0), table(0, 1)}, {table(1, 0), table(1, 1)}}};
}

SymmetricFactorization symmetric_factor(const Mat2& p) {
  if (!all_positive(p)) throw std::invalid_argument("symmetric_factor: entries must be > 0");
  const double scale = std::max({p(0, 0), p(0, 1), p(1, 0), p(1, 1)});
  if (std::abs(p(0, 1) - p(1, 0)) > 1e-12 * scale)
    throw std::invalid_argument("symmetric_factor: matrix is not symmetric");
  const double off = 0.5 * (p(0, 1) + p(1, 0));
  const double a = off / std::sqrt(p(0, 0) * p(1, 1));
  if (a > 1.0 + 1e-12) throw std::invalid_argument("symmetric_factor: determinant is negative");
  return factor_with_cosine(p(0, 0), p(1, 1), a);
}

PositiveFactorization factorize_positive(const Mat2& p) {
  if (!all_positive(p)) throw std::invalid_argument("factorize_positive: entries must be finite and > 0");

  const bool swapped = p.det() < 0.0;
  Mat2 q = p;
  if (swapped) std::swap(q.m[0], q.m[1]);

  // diag(1/q12, 1/q21) * q = [[q11/q12, 1], [1, q22/q21]], symmetric with the
  // same determinant sign. Roundoff near det = 0 is absorbed by the clamp.
  const double m11 = q(0, 0) / q(0, 1);
  const double m22 = q(1, 1) / q(1, 0);
  const SymmetricFactorization sym = factor_with_cosine(m11, m22, 1.0 / std::sqrt(m11 * m22));

  PositiveFactorization out;
  out.c = sym.b;
  out.b = sym.b;
  for (int c = 0; c < 2; ++c) {
    out.b(0, c) *= q(0, 1);
    out.b(1, c) *= q(1, 0);
  }
  if (swapped) std::swap(out.b.m[0], out.b.m[1]);
  return out;
}

DualFactor dual_params(const Mat2& b, const Mat2& c) {
  if (!all_positive(b) || !all_positive(c))
    throw std::invalid_argument("dual_params: factor entries must be > 0");
  return DualFactor{
      std::log(b(1, 0) / b(0, 0)),
      std::log(c(1, 0) / c(0, 0)),
      std::log(b(0, 1) * c(0, 1) / (b(0, 0) * c(0, 0))),
      std::log(b(1, 1) * b(0, 0) / (b(0, 1) * b(1, 0))),
      std::log(c(1, 1) * c(0, 0) / (c(0, 1) * c(1, 0))),
  };
}

Mat2 marginalize_dual(const DualFactor& d) {
  Mat2 out;
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2) {
      const double h = d.alpha1 * x1 + d.alpha2 * x2;
      const double on = d.q + d.beta1 * x1 + d.beta2 * x2;
      out(x1, x2) = std::exp(h) * (1.0 + std::exp(on));
    }
  return out;
}

std::vector<double> RankOneMixture::weights() const {
  std::vector<double> w;
  for (const auto& comp : components) w.push_back(comp.weight);
  return w;
}

Table RankOneMixture::reconstruct() const {
  Table out(rows, cols, std::vector<double>(rows * cols, 0.0));
  for (const auto& comp : components) {
    for (std::size_t a = 0; a < rows; ++a) {
      for (std::size_t b = 0; b < cols; ++b) {
        if (comp.kind == ComponentKind::Product) {
          out(a, b) += comp.weight * comp.left[a] * comp.right[b];
        } else if (a == b) {
          out(a, b) += comp.weight * comp.left[a];
        }
      }
    }
  }
  return out;
}

RankOneMixture sw_decompose(double w, std::size_t n_states) {
  if (!(w > 0.0)) throw std::invalid_argument(fmt::format("sw_decompose: coupling w = {} must be > 0", w));
  if (n_states < 2) throw std::invalid_argument("sw_decompose: need at least 2 states");
  const std::vector<double> ones(n_states, 1.0);
  RankOneMixture mix{n_states, n_states, {}};
  mix.components.push_back({ComponentKind::Product, std::exp(-w), ones, ones});
  mix.components.push_back({ComponentKind::Equality, -std::expm1(-w), ones, {}});
  return mix;
}

RankOneMixture higdon_decompose(double w, double alpha) {
  if (!(w > 0.0)) throw std::invalid_argument(fmt::format("higdon_decompose: coupling w = {} must be > 0", w));
  const double bond_max = -std::expm1(-w);
  if (!(alpha > 0.0) || alpha > bond_max * (1.0 + 1e-12))
    throw std::invalid_argument(
        fmt::format("higdon_decompose: alpha = {} outside (0, {}]", alpha, bond_max));
  alpha = std::min(alpha, bond_max);

  const double off = std::exp(-w);
  const double diag = std::max(1.0 - alpha, off);
  const PositiveFactorization bc = factorize_positive(Mat2{{{diag, off}, {off, diag}}});

  RankOneMixture mix{2, 2, {}};
  for (int k = 0; k < 2; ++k) {
    std::vector<double> left{bc.b(0, k), bc.b(1, k)};
    std::vector<double> right{bc.c(0, k), bc.c(1, k)};
    const double lmax = std::max(left[0], left[1]);
    const double rmax = std::max(right[0], right[1]);
    for (double& x : left) x /= lmax;
    for (double& x : right) x /= rmax;
    mix.components.push_back({ComponentKind::Product, lmax * rmax, std::move(left), std::move(right)});
  }
  mix.components.push_back({ComponentKind::Equality, alpha, {1.0, 1.0}, {}});
  return mix;
}

RankOneMixture entrywise_mixture(const Table& table) {
  const double floor = table.min_entry();
  RankOneMixture mix{table.rows(), table.cols(), {}};
  mix.components.push_back(
      {ComponentKind::Product, floor, std::vector<double>(table.rows(), 1.0), std::vector<double>(table.cols(), 1.0)});
  for (std::size_t a = 0; a < table.rows(); ++a) {
    for (std::size_t b = 0; b < table.cols(); ++b) {
      const double excess = table(a, b) - floor;
      if (!(excess > 0.0)) continue;
      std::vector<double> left(table.rows(), 0.0);
      std::vector<double> right(table.cols(), 0.0);
      left[a] = 1.0;
      right[b] = 1.0;
      mix.components.push_back({ComponentKind::Product, excess, std::move(left), std::move(right)});
    }
  }
  return mix;
}

std::optional<double> potts_coupling(const Table& table, double rel_tol) {
  const std::size_t n = table.rows();
  if (n < 2 || table.cols() != n) return std::nullopt;
  const double diag = table(0, 0);
  const double off = table(0, 1);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double ref = a == b ? diag : off;
      if (std::abs(table(a, b) - ref) > rel_tol * ref) return std::nullopt;
    }
  }
  return std::log(diag / off);
}

bool FactorDual::has_equality() const {
  return std::any_of(components.begin(), components.end(),
                     [](const DualComponent& c) { return c.kind == ComponentKind::Equality; });
}

double FactorDual::log_component(std::size_t k, int a, int b) const {
  const DualComponent& comp = components[k];
  if (comp.kind == ComponentKind::Product) return comp.log_left[a] + comp.log_right[b];
  return a == b ? comp.log_left[a] : kNegInf;
}

double FactorDual::log_message(std::size_t k, bool is_u, int s) const {
  const DualComponent& comp = components[k];
  if (comp.kind == ComponentKind::Product) return is_u ? comp.log_left[s] : comp.log_right[s];
  // The bond's diagonal weight is charged once, to the u endpoint; the
  // equality itself is enforced by clustering.
  return is_u ? comp.log_left[s] : 0.0;
}

FactorDual factor_dual_from(const DualFactor& params, const PositiveFactorization& bc) {
  FactorDual dual;
  dual.shift_u = {0.0, params.alpha1};
  dual.shift_v = {0.0, params.alpha2};
  dual.components.push_back(
      {ComponentKind::Product, std::log(bc.b(0, 0) * bc.c(0, 0)), {0.0, 0.0}, {0.0, 0.0}});
  dual.components.push_back({ComponentKind::Product, std::log(bc.b(0, 1) * bc.c(0, 1)),
                             {0.0, params.beta1}, {0.0, params.beta2}});
  dual.params = params;
  return dual;
}

FactorDual factor_dual_from(const RankOneMixture& mixture, double log_scale) {
  FactorDual dual;
  dual.shift_u.assign(mixture.rows, 0.0);
  dual.shift_v.assign(mixture.cols, 0.0);
  for (const auto& comp : mixture.components) {
    if (!(comp.weight > 0.0)) throw std::invalid_argument("mixture component weight must be > 0");
    DualComponent dc;
    dc.kind = comp.kind;
    dc.log_weight = std::log(comp.weight) + log_scale;
    dc.log_left = logs_of(comp.left);
    if (comp.kind == ComponentKind::Product) dc.log_right = logs_of(comp.right);
    dual.components.push_back(std::move(dc));
  }
  return dual;
}

FactorDual dualize_factor(const Factor& factor, const DualizeOptions& options) {
  const Table& table = factor.table;
  if (table.min_entry() < options.zero_threshold * table.max_entry())
    throw std::invalid_argument(
        fmt::format("factor {}: table has effectively zero entries (min {} vs max {})", factor.id.value,
                    table.min_entry(), table.max_entry()));

  const std::optional<double> w = potts_coupling(table);
  const bool ferromagnetic_potts = w && *w > 0.0;

  switch (options.scheme) {
    case DualizationScheme::SwendsenWang:
      if (!ferromagnetic_potts)
        throw std::invalid_argument(
            fmt::format("factor {} is not a ferromagnetic Potts factor; Swendsen-Wang needs w > 0",
                        factor.id.value));
      return factor_dual_from(sw_decompose(*w, table.rows()), std::log(table(0, 0)));
    case DualizationScheme::Higdon:
      if (ferromagnetic_potts && table.rows() == 2) {
        const double alpha = options.higdon_alpha.value_or(default_higdon_alpha(*w));
        return factor_dual_from(higdon_decompose(*w, alpha), std::log(table(0, 0)));
      }
      break;
    case DualizationScheme::Factorized:
      break;
  }

  if (table.rows() == 2 && table.cols() == 2) {
    const PositiveFactorization bc = factorize_positive(to_mat2(table));
    return factor_dual_from(dual_params(bc.b, bc.c), bc);
  }
  if (ferromagnetic_potts) return factor_dual_from(sw_decompose(*w, table.rows()), std::log(table(0, 0)));
  return factor_dual_from(entrywise_mixture(table), 0.0);
}

DualModel::DualModel(Model base, DualizeOptions options) : base_(std::move(base)), options_(options) {
  duals_.reserve(base_.num_factors());
  for (const Factor& f : base_.factors()) {
    duals_.push_back(dualize_factor(f, options_));
    if (duals_.back().has_equality()) ++equality_factors_;
  }
  fields_.resize(base_.num_variables());
  for (VarId v = 0; v < base_.num_variables(); ++v) refresh_field(v);
}

Table reconstruct_table(const FactorDual& dual) {
  const std::size_t rows = dual.shift_u.size(), cols = dual.shift_v.size();
  Table t(rows, cols, std::vector<double>(rows * cols, 0.0));
  std::vector<double> terms(dual.cardinality());
  for (std::size_t a = 0; a < rows; ++a) {
    for (std::size_t b = 0; b < cols; ++b) {
      for (std::size_t k = 0; k < terms.size(); ++k)
        terms[k] = dual.components[k].log_weight + dual.log_component(k, static_cast<int>(a), static_cast<int>(b));
      t(a, b) = std::exp(dual.shift_u[a] + dual.shift_v[b] + log_sum_exp(terms));
    }
  }
  return t;
}

DualModel::DualModel(Model base, std::vector<FactorDual> duals, DualizeOptions options, double tolerance)
    : base_(std::move(base)), options_(options), duals_(std::move(duals)) {
  if (duals_.size() != base_.num_factors())
    throw std::invalid_argument(
        fmt::format("{} duals given for {} factors", duals_.size(), base_.num_factors()));
  for (std::size_t i = 0; i < duals_.size(); ++i) {
    const Factor& f = base_.factors()[i];
    const FactorDual& d = duals_[i];
    const auto fail = [&](const std::string& why) {
      return std::invalid_argument(fmt::format("dual of factor {}: {}", f.id.value, why));
    };
    if (d.shift_u.size() != f.table.rows() || d.shift_v.size() != f.table.cols()) throw fail("shape mismatch");
    if (d.components.empty()) throw fail("no components");
    for (const DualComponent& c : d.components) {
      if (c.log_left.size() != f.table.rows()) throw fail("left vector has the wrong length");
      if (c.kind == ComponentKind::Product && c.log_right.size() != f.table.cols())
        throw fail("right vector has the wrong length");
      if (c.kind == ComponentKind::Equality && f.table.rows() != f.table.cols())
        throw fail("equality bond on a non-square table");
    }
    const Table t = reconstruct_table(d);
    const double c = t(0, 0) / f.table(0, 0);
    for (std::size_t a = 0; a < t.rows(); ++a)
      for (std::size_t b = 0; b < t.cols(); ++b)
        if (!(std::abs(t(a, b) - c * f.table(a, b)) <= tolerance * c * f.table(a, b)))
          throw fail(fmt::format("does not reconstruct the table at ({}, {})", a, b));
    if (d.has_equality()) ++equality_factors_;
  }
  fields_.resize(base_.num_variables());
  for (VarId v = 0; v < base_.num_variables(); ++v) refresh_field(v);
}

void DualModel::refresh_field(VarId v) {
  auto& field = fields_[v];
  field = base_.variable(v).unary;
  for (const Incidence& inc : base_.incidences(v)) {
    const FactorDual& d = duals_[inc.factor_index];
    const auto& shift = inc.is_u ? d.shift_u : d.shift_v;
    for (std::size_t k = 0; k < field.size(); ++k) field[k] += shift[k];
    ++field_operations_;
  }
  ++field_operations_;
}

FactorId DualModel::add_factor(VarId u, VarId v, Table table) {
  const FactorId id = base_.add_factor(u, v, std::move(table));
  try {
    duals_.push_back(dualize_factor(base_.factor(id), options_));
  } catch (...) {
    base_.remove_factor(id);
    throw;
  }
  if (duals_.back().has_equality()) ++equality_factors_;
  refresh_field(u);
  refresh_field(v);
  return id;
}

void DualModel::remove_factor(FactorId id, std::vector<int>* theta) {
  const std::size_t index = base_.factor_index(id);
  const std::size_t last = duals_.size() - 1;
  const VarId u = base_.factors()[index].u;
  const VarId v = base_.factors()[index].v;
  if (theta && theta->size() != duals_.size())
    throw std::invalid_argument("dual state does not match the model's factor count");

  if (duals_[index].has_equality()) --equality_factors_;
  base_.remove_factor(id);
  if (index != last) {
    duals_[index] = std::move(duals_[last]);
    if (theta) (*theta)[index] = (*theta)[last];
  }
  duals_.pop_back();
  if (theta) theta->pop_back();
  refresh_field(u);
  refresh_field(v);
}

DualModel dualize_model(const Model& model, DualizeOptions options) { return DualModel(model, options); }

}  // namespace pdgibbs
