#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pdgibbs/model.hpp"
#include "pdgibbs/sampling.hpp"

namespace pdgibbs {

/// Potential scale reduction over the first `n` values of each chain:
/// sqrt(((n-1)/n W + B/n) / W), W the mean within-chain variance and B n
/// times the variance of the chain means. W = 0 gives +inf when B > 0 and
/// 1 when B = 0.
double psrf(std::span<const std::vector<double>> chains, std::size_t n);
double psrf(std::span<const std::vector<double>> chains);

/// Same statistic from per-chain means and (n-1)-normalized variances.
double psrf_from_moments(std::span<const double> means, std::span<const double> variances, std::size_t n);

enum class IterationUnit { Sweep, SingleSiteUpdate };

std::string_view to_string(IterationUnit unit);

struct PsrfSeries {
  std::size_t stride = 10;  // iterations between evaluations
  IterationUnit unit = IterationUnit::Sweep;
  std::vector<double> values;  // evaluation k covers the first (k + 1) * stride iterations

  std::size_t iterations_at(std::size_t index) const { return (index + 1) * stride; }
};

/// First index from which every later value is below `threshold`; empty when
/// the series ends at or above it (censored).
std::optional<std::size_t> mixing_time(std::span<const double> series, double threshold);
std::optional<std::size_t> mixing_time(const PsrfSeries& series, double threshold);

/// Mixing time converted to iterations, i.e. iterations_at(index).
std::optional<std::size_t> mixing_iterations(const PsrfSeries& series, double threshold);

struct ChainTrace {
  std::uint64_t seed = 0;
  std::vector<double> energy;          // per iteration
  std::vector<std::vector<int>> states;  // per iteration; empty unless kept

  std::size_t iterations() const { return energy.size(); }
};

struct RunOptions {
  std::size_t chains = 10;
  std::size_t max_iterations = 1000;
  std::size_t stride = 10;
  IterationUnit unit = IterationUnit::Sweep;
  bool track_variables = true;
  bool discard_first_half = false;
  bool keep_traces = false;  // energy traces
  bool keep_states = false;  // full per-iteration states (memory heavy)
  std::uint64_t seed = 0;
};

struct RunResult {
  std::vector<ChainTrace> traces;  // empty unless keep_traces
  PsrfSeries energy_psrf;
  PsrfSeries variable_psrf;  // max over variables; empty values when not tracked
  PsrfSeries psrf;           // reported: max of the two
};

/// m chains from independent uniform initial states, chain c seeded with
/// RngStreams(seed).derive(c). Single-site units apply to the sequential
/// sampler only.
RunResult run_chains(const Model& model, SamplerKind kind, const RunOptions& options);

/// CSV with header `chain,sweep,energy[,v0..]`.
void write_trace_csv(std::ostream& out, std::span<const ChainTrace> traces);
/// CSV with header `sweep,psrf`.
void write_psrf_csv(std::ostream& out, const PsrfSeries& series);

}  // namespace pdgibbs
