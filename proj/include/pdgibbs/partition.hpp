#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pdgibbs/duality.hpp"
#include "pdgibbs/sampling.hpp"
#include "pdgibbs/variational.hpp"

namespace pdgibbs {

/// log G(x) = sum_i log sum_k g_i(k) comp_k(x_u, x_v).
double big_g(const DualModel& dm, std::span<const int> x);

/// log H(theta) = log sum_x h(x) e^{<s(x), r(theta)>}. Variables joined by
/// active equality bonds share one state, so the sum runs per cluster.
double big_h(const DualModel& dm, std::span<const int> theta);

/// <s(x), r(theta)>: the sum of selected component log-values. -inf when x
/// violates an active equality bond.
double inner_product(const DualModel& dm, std::span<const int> x, std::span<const int> theta);

/// log V(x, theta) = log G(x) + log H(theta) - <s(x), r(theta)>.
double log_v(const DualModel& dm, std::span<const int> x, std::span<const int> theta);

struct BatchMeans {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t batch_size = 0;
  std::size_t batches = 0;
};

/// Mean with a batch-means standard error, batch size floor(sqrt(n)).
/// Needs at least 4 values.
BatchMeans batch_means(std::span<const double> values);

struct LogZEstimate {
  double mean_log_v = 0.0;  // lower-bound estimate of log Z
  double std_error = 0.0;   // batch means
  std::size_t n_samples = 0;
  std::size_t burn_in = 0;
  double log_mean_v = 0.0;         // log of the sample mean of V
  double log_v_variance = 0.0;     // sample variance of log V
  double v_relative_variance = 0.0;  // sample variance of V over its squared mean
};

struct EstimateOptions {
  SamplerKind sampler = SamplerKind::PrimalDual;
  std::size_t n_sweeps = 10000;
  std::optional<std::size_t> burn_in;  // default: 10% of n_sweeps
  std::uint64_t seed = 0;
};

/// Runs the sampler on (x, theta) and averages log V over post-burn-in sweeps.
/// The sequential sampler draws theta ~ p(theta | x) after each sweep. For
/// SwendsenWang, `dm` must hold the bond dual.
LogZEstimate estimate_log_z_lower(const DualModel& dm, const EstimateOptions& options);

struct MutualInformationCheck {
  double mutual_information = 0.0;  // I(x, theta)
  double expected_kl = 0.0;         // E_theta KL(p(x | theta), p(x))
  double min_kl = 0.0;              // best found min over xi of KL(p(x | xi), p(x))
  StateVectors best_q;              // marginals of the minimizer
};

/// Exact I(x, theta) and E_theta KL by enumeration; min_xi KL by coordinate
/// descent from `restarts` starting points (uniform, then random).
MutualInformationCheck mutual_information_check(const DualModel& dm, std::size_t restarts = 10,
                                                std::uint64_t seed = 0);

}  // namespace pdgibbs
