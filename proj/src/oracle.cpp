#include "pdgibbs/oracle.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

#include "pdgibbs/math.hpp"

namespace pdgibbs {

namespace {

std::size_t checked_product(std::span<const std::size_t> radices, std::size_t cap, const char* what) {
  std::size_t total = 1;
  for (std::size_t r : radices) {
    if (r != 0 && total > cap / r)
      throw std::length_error(fmt::format("{} exceeds the enumeration cap of {} states", what, cap));
    total *= r;
  }
  if (total > cap) throw std::length_error(fmt::format("{} exceeds the enumeration cap of {} states", what, cap));
  return total;
}

std::vector<std::size_t> variable_radices(const Model& model) {
  std::vector<std::size_t> r(model.num_variables());
  for (VarId v = 0; v < r.size(); ++v) r[v] = model.cardinality(v);
  return r;
}

std::vector<std::size_t> dual_radices(const DualModel& dm) {
  std::vector<std::size_t> r(dm.num_factors());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = dm.dual_cardinality(i);
  return r;
}

void odometer(std::span<const std::size_t> radices, std::size_t total,
              const std::function<void(std::size_t, const std::vector<int>&)>& visit) {
  std::vector<int> digits(radices.size(), 0);
  for (std::size_t rank = 0; rank < total; ++rank) {
    visit(rank, digits);
    for (std::size_t i = digits.size(); i-- > 0;) {
      if (static_cast<std::size_t>(++digits[i]) < radices[i]) break;
      digits[i] = 0;
    }
  }
}

}  // namespace

std::size_t state_space_size(const Model& model, std::size_t cap) {
  return checked_product(variable_radices(model), cap, "model state space");
}

void for_each_state(const Model& model, const std::function<void(std::size_t, const State&)>& visit,
                    std::size_t cap) {
  const auto radices = variable_radices(model);
  odometer(radices, checked_product(radices, cap, "model state space"), visit);
}

std::size_t state_rank(const Model& model, std::span<const int> state) {
  model.validate_state(state);
  std::size_t rank = 0;
  for (VarId v = 0; v < state.size(); ++v) rank = rank * model.cardinality(v) + static_cast<std::size_t>(state[v]);
  return rank;
}

double exact_log_z(const Model& model, std::size_t cap) {
  double log_z = kNegInf;
  for_each_state(model, [&](std::size_t, const State& x) { log_z = log_add(log_z, energy(model, x)); }, cap);
  return log_z;
}

ExactSummary exact_summary(const Model& model, bool keep_joint, std::size_t cap) {
  const std::size_t total = state_space_size(model, cap);
  std::vector<double> log_p(total);
  for_each_state(model, [&](std::size_t rank, const State& x) { log_p[rank] = energy(model, x); }, cap);

  ExactSummary s;
  s.log_z = log_sum_exp(log_p);
  s.marginals.resize(model.num_variables());
  for (VarId v = 0; v < model.num_variables(); ++v) s.marginals[v].assign(model.cardinality(v), 0.0);
  s.pairwise.reserve(model.num_factors());
  for (const Factor& f : model.factors())
    s.pairwise.emplace_back(f.table.rows(), f.table.cols(), std::vector<double>(f.table.values().size(), 0.0));
  if (keep_joint) s.joint.resize(total);

  for_each_state(model, [&](std::size_t rank, const State& x) {
    const double p = std::exp(log_p[rank] - s.log_z);
    if (keep_joint) s.joint[rank] = p;
    for (VarId v = 0; v < x.size(); ++v) s.marginals[v][static_cast<std::size_t>(x[v])] += p;
    for (std::size_t i = 0; i < model.num_factors(); ++i) {
      const Factor& f = model.factors()[i];
      s.pairwise[i](static_cast<std::size_t>(x[f.u]), static_cast<std::size_t>(x[f.v])) += p;
    }
  }, cap);
  return s;
}

State exact_map(const Model& model, std::size_t cap) {
  State best;
  double top = kNegInf;
  for_each_state(model, [&](std::size_t, const State& x) {
    const double e = energy(model, x);
    if (best.empty() || e > top) {
      top = e;
      best = x;
    }
  }, cap);
  return best;
}

std::size_t dual_space_size(const DualModel& dm, std::size_t cap) {
  return checked_product(dual_radices(dm), cap, "dual state space");
}

void for_each_dual_state(const DualModel& dm, const std::function<void(std::size_t, const DualState&)>& visit,
                         std::size_t cap) {
  const auto radices = dual_radices(dm);
  odometer(radices, checked_product(radices, cap, "dual state space"), visit);
}

double log_dual_joint(const DualModel& dm, std::span<const int> x, std::span<const int> theta) {
  double total = 0.0;
  for (VarId v = 0; v < dm.num_variables(); ++v) total += dm.field(v)[static_cast<std::size_t>(x[v])];
  const auto factors = dm.base().factors();
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const FactorDual& d = dm.dual(i);
    const auto k = static_cast<std::size_t>(theta[i]);
    total += d.components[k].log_weight + d.log_component(k, x[factors[i].u], x[factors[i].v]);
  }
  return total;
}

DualJointSummary exact_dual_joint(const DualModel& dm, bool keep_joint, std::size_t cap) {
  DualJointSummary s;
  s.x_states = state_space_size(dm.base(), cap);
  s.theta_states = dual_space_size(dm, cap);
  if (s.theta_states != 0 && s.x_states > cap / s.theta_states)
    throw std::length_error(fmt::format("joint (x, theta) space exceeds the enumeration cap of {} states", cap));
  const std::size_t nt = s.theta_states;

  std::vector<DualState> thetas(nt);
  for_each_dual_state(dm, [&](std::size_t rank, const DualState& t) { thetas[rank] = t; }, cap);

  std::vector<double> log_joint(s.x_states * nt);
  for_each_state(dm.base(), [&](std::size_t xr, const State& x) {
    for (std::size_t tr = 0; tr < nt; ++tr) log_joint[xr * nt + tr] = log_dual_joint(dm, x, thetas[tr]);
  }, cap);
  s.log_z = log_sum_exp(log_joint);

  // Marginals in log domain, normalized.
  std::vector<double> log_px(s.x_states, kNegInf), log_pt(nt, kNegInf);
  for (std::size_t xr = 0; xr < s.x_states; ++xr) {
    for (std::size_t tr = 0; tr < nt; ++tr) {
      const double l = log_joint[xr * nt + tr];
      log_px[xr] = log_add(log_px[xr], l);
      log_pt[tr] = log_add(log_pt[tr], l);
    }
  }
  for (double& l : log_px) l -= s.log_z;
  for (double& l : log_pt) l -= s.log_z;
  s.p_x.resize(s.x_states);
  s.p_theta.resize(nt);
  for (std::size_t xr = 0; xr < s.x_states; ++xr) s.p_x[xr] = std::exp(log_px[xr]);
  for (std::size_t tr = 0; tr < nt; ++tr) s.p_theta[tr] = std::exp(log_pt[tr]);
  if (keep_joint) s.joint.resize(log_joint.size());

  for (std::size_t xr = 0; xr < s.x_states; ++xr) {
    for (std::size_t tr = 0; tr < nt; ++tr) {
      const double lj = log_joint[xr * nt + tr] - s.log_z;
      const double p = std::exp(lj);
      if (keep_joint) s.joint[xr * nt + tr] = p;
      if (lj == kNegInf) continue;
      // log V - log Z = log p(x) + log p(theta) - log p(x, theta).
      const double log_ratio = log_px[xr] + log_pt[tr] - lj;
      s.mutual_information -= p * log_ratio;
      s.expected_log_v += p * (log_ratio + s.log_z);
      s.expected_v_ratio += std::exp(log_px[xr] + log_pt[tr]);
    }
  }

  // E_theta KL(p(x | theta), p(x)), accumulated per theta from conditionals.
  for (std::size_t tr = 0; tr < nt; ++tr) {
    if (log_pt[tr] == kNegInf) continue;
    double kl = 0.0;
    for (std::size_t xr = 0; xr < s.x_states; ++xr) {
      const double lc = log_joint[xr * nt + tr] - s.log_z - log_pt[tr];  // log p(x | theta)
      if (lc == kNegInf) continue;
      kl += std::exp(lc) * (lc - log_px[xr]);
    }
    s.expected_kl += s.p_theta[tr] * kl;
  }
  return s;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

}  // namespace pdgibbs
