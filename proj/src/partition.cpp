#include "pdgibbs/partition.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pdgibbs/math.hpp"
#include "pdgibbs/oracle.hpp"
#include "pdgibbs/union_find.hpp"

namespace pdgibbs {

double big_g(const DualModel& dm, std::span<const int> x) {
  dm.base().validate_state(x);
  double total = 0.0;
  std::vector<double> w;
  const auto factors = dm.base().factors();
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const FactorDual& d = dm.dual(i);
    w.resize(d.cardinality());
    for (std::size_t k = 0; k < w.size(); ++k)
      w[k] = d.components[k].log_weight + d.log_component(k, x[factors[i].u], x[factors[i].v]);
    total += log_sum_exp(w);
  }
  return total;
}

double big_h(const DualModel& dm, std::span<const int> theta) {
  if (theta.size() != dm.num_factors()) throw std::invalid_argument("dual state does not match the model");
  const Model& base = dm.base();
  const std::size_t n = base.num_variables();
  // Per-variable log weights: field plus selected messages.
  std::vector<std::vector<double>> weight(n);
  for (VarId v = 0; v < n; ++v) {
    const auto field = dm.field(v);
    weight[v].assign(field.begin(), field.end());
    for (const Incidence& inc : base.incidences(v)) {
      const FactorDual& d = dm.dual(inc.factor_index);
      const auto k = static_cast<std::size_t>(theta[inc.factor_index]);
      for (std::size_t s = 0; s < weight[v].size(); ++s)
        weight[v][s] += d.log_message(k, inc.is_u, static_cast<int>(s));
    }
  }
  UnionFind uf(n);
  const auto factors = base.factors();
  for (std::size_t i = 0; i < factors.size(); ++i)
    if (dm.dual(i).components[static_cast<std::size_t>(theta[i])].kind == ComponentKind::Equality)
      uf.unite(factors[i].u, factors[i].v);
  std::vector<std::vector<double>> cluster(n);
  for (VarId v = 0; v < n; ++v) {
    auto& acc = cluster[uf.find(v)];
    if (acc.empty()) acc.assign(weight[v].size(), 0.0);
    if (acc.size() != weight[v].size()) throw std::invalid_argument("equality bond joins unequal cardinalities");
    for (std::size_t s = 0; s < acc.size(); ++s) acc[s] += weight[v][s];
  }
  double total = 0.0;
  for (const auto& acc : cluster)
    if (!acc.empty()) total += log_sum_exp(acc);
  return total;
}

double inner_product(const DualModel& dm, std::span<const int> x, std::span<const int> theta) {
  double total = 0.0;
  const auto factors = dm.base().factors();
  for (std::size_t i = 0; i < factors.size(); ++i)
    total += dm.dual(i).log_component(static_cast<std::size_t>(theta[i]), x[factors[i].u], x[factors[i].v]);
  return total;
}

double log_v(const DualModel& dm, std::span<const int> x, std::span<const int> theta) {
  return big_g(dm, x) + big_h(dm, theta) - inner_product(dm, x, theta);
}

BatchMeans batch_means(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 4) throw std::invalid_argument(fmt::format("batch means needs at least 4 values, got {}", n));
  BatchMeans r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  r.batch_size = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  r.batches = n / r.batch_size;
  std::vector<double> means(r.batches);
  for (std::size_t b = 0; b < r.batches; ++b) {
    double s = 0.0;
    for (std::size_t j = 0; j < r.batch_size; ++j) s += values[b * r.batch_size + j];
    means[b] = s / static_cast<double>(r.batch_size);
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(r.batches);
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  r.std_error = std::sqrt(ss / static_cast<double>(r.batches - 1) / static_cast<double>(r.batches));
  return r;
}

LogZEstimate estimate_log_z_lower(const DualModel& dm, const EstimateOptions& options) {
  const std::size_t burn_in = options.burn_in.value_or(options.n_sweeps / 10);
  if (options.n_sweeps <= burn_in || options.n_sweeps - burn_in < 4)
    throw std::invalid_argument(fmt::format("{} sweeps leave fewer than 4 samples after a burn-in of {}",
                                            options.n_sweeps, burn_in));
  if (options.sampler == SamplerKind::SwendsenWang)
    for (std::size_t i = 0; i < dm.num_factors(); ++i)
      if (!dm.dual(i).has_equality())
        throw std::invalid_argument("Swendsen-Wang estimation needs the bond dual of every factor");

  const RngStreams rng(options.seed);
  const Model& base = dm.base();
  State x = uniform_state(base, rng);
  DualState theta = initial_dual(dm, x, rng);

  std::vector<double> samples;
  samples.reserve(options.n_sweeps - burn_in);
  for (std::uint64_t t = 1; t <= options.n_sweeps; ++t) {
    switch (options.sampler) {
      case SamplerKind::Sequential:
        sequential_gibbs_sweep_in_place(base, x, rng, t);
        sample_dual(dm, x, rng, t, theta);
        break;
      case SamplerKind::PrimalDual:
        pd_sweep_in_place(dm, x, theta, rng, t);
        break;
      case SamplerKind::SwendsenWang:
        sw_sweep_in_place(dm, x, theta, rng, t);
        break;
      case SamplerKind::BlockedTree:
        blocked_tree_sweep_in_place(dm, x, theta, random_spanning_forest(base, rng, t), rng, t);
        break;
    }
    if (t > burn_in) samples.push_back(log_v(dm, x, theta));
  }

  LogZEstimate est;
  const BatchMeans bm = batch_means(samples);
  est.mean_log_v = bm.mean;
  est.std_error = bm.std_error;
  est.n_samples = samples.size();
  est.burn_in = burn_in;
  const double n = static_cast<double>(samples.size());
  est.log_mean_v = log_sum_exp(samples) - std::log(n);
  double ss = 0.0;
  for (double s : samples) ss += (s - bm.mean) * (s - bm.mean);
  est.log_v_variance = ss / (n - 1.0);
  // Var(V) / E[V]^2 = E[V^2] / E[V]^2 - 1, evaluated in log domain.
  std::vector<double> doubled(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) doubled[i] = 2.0 * samples[i];
  const double log_m2 = log_sum_exp(doubled) - std::log(n);
  est.v_relative_variance = std::max(0.0, std::expm1(log_m2 - 2.0 * est.log_mean_v)) * n / (n - 1.0);
  return est;
}

MutualInformationCheck mutual_information_check(const DualModel& dm, std::size_t restarts, std::uint64_t seed) {
  const DualJointSummary joint = exact_dual_joint(dm);
  MutualInformationCheck r;
  r.mutual_information = joint.mutual_information;
  r.expected_kl = joint.expected_kl;

  const Model& base = dm.base();
  const double log_z = exact_log_z(base);
  const RngStreams rng(seed);
  r.min_kl = std::numeric_limits<double>::infinity();
  for (std::size_t attempt = 0; attempt < std::max<std::size_t>(restarts, 1); ++attempt) {
    StateVectors init = uniform_vectors(base);
    if (attempt > 0) {
      for (VarId v = 0; v < init.size(); ++v) {
        Stream s = rng.stream(StreamPurpose::Init, v, attempt);
        double total = 0.0;
        for (double& q : init[v]) total += (q = s.uniform() + 1e-3);
        for (double& q : init[v]) q /= total;
      }
    }
    const NaiveMeanFieldResult mf = naive_mean_field(base, std::move(init), 1e-12, 100000);
    const double kl = primal_kl(base, mf.q, log_z);
    if (kl < r.min_kl) {
      r.min_kl = kl;
      r.best_q = mf.q;
    }
  }
  return r;
}

}  // namespace pdgibbs
