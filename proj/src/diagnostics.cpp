#include "pdgibbs/diagnostics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "pdgibbs/model_io.hpp"
#include "pdgibbs/parallel.hpp"

namespace pdgibbs {

double psrf_from_moments(std::span<const double> means, std::span<const double> variances, std::size_t n) {
  const std::size_t m = means.size();
  if (m < 2 || variances.size() != m) throw std::invalid_argument("psrf needs at least two chains");
  if (n < 2) throw std::invalid_argument("psrf needs at least two values per chain");
  double w = 0.0, grand = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    w += variances[c];
    grand += means[c];
  }
  w /= static_cast<double>(m);
  grand /= static_cast<double>(m);
  double spread = 0.0;
  for (double mu : means) spread += (mu - grand) * (mu - grand);
  const double nn = static_cast<double>(n);
  const double b = nn * spread / static_cast<double>(m - 1);
  if (w <= 0.0) return b > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  return std::sqrt(((nn - 1.0) / nn * w + b / nn) / w);
}

double psrf(std::span<const std::vector<double>> chains, std::size_t n) {
  std::vector<double> means, variances;
  for (const auto& chain : chains) {
    if (chain.size() < n) throw std::invalid_argument("psrf window exceeds a chain's length");
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += chain[i];
    mu /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (chain[i] - mu) * (chain[i] - mu);
    means.push_back(mu);
    variances.push_back(n > 1 ? ss / static_cast<double>(n - 1) : 0.0);
  }
  return psrf_from_moments(means, variances, n);
}

double psrf(std::span<const std::vector<double>> chains) {
  if (chains.empty()) throw std::invalid_argument("psrf needs at least two chains");
  std::size_t n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  return psrf(chains, n);
}

std::string_view to_string(IterationUnit unit) {
  return unit == IterationUnit::Sweep ? "sweep" : "single-site-update";
}

std::optional<std::size_t> mixing_time(std::span<const double> series, double threshold) {
  std::size_t start = series.size();
  while (start > 0 && series[start - 1] < threshold) --start;
  if (start == series.size()) return std::nullopt;
  return start;
}

std::optional<std::size_t> mixing_time(const PsrfSeries& series, double threshold) {
  return mixing_time(std::span<const double>(series.values), threshold);
}

std::optional<std::size_t> mixing_iterations(const PsrfSeries& series, double threshold) {
  const auto index = mixing_time(series, threshold);
  if (!index) return std::nullopt;
  return series.iterations_at(*index);
}

namespace {

/// Cumulative sums at one evaluation point. Energy is shifted by the chain's
/// first value so constant chains give exactly zero variance; the shift is
/// restored in the mean.
struct Snapshot {
  double e1 = 0.0;
  double e2 = 0.0;
  std::vector<std::int64_t> x1;
  std::vector<std::int64_t> x2;
};

struct ChainRecord {
  double shift = 0.0;  // added back to the energy mean
  std::vector<Snapshot> snapshots;
  ChainTrace trace;
};

double local_energy(const Model& model, std::span<const int> x, VarId v) {
  double e = model.variable(v).unary[static_cast<std::size_t>(x[v])];
  for (const Incidence& inc : model.incidences(v)) {
    const Factor& f = model.factors()[inc.factor_index];
    e += f.log_value(x[f.u], x[f.v]);
  }
  return e;
}

ChainRecord run_one(const SamplerModels& models, SamplerKind kind, const RunOptions& options, std::size_t c) {
  const Model& model = *models.model;
  const RngStreams rng = RngStreams(options.seed).derive(c);
  Chain chain(models, kind, rng, uniform_state(model, rng));
  const std::size_t n_vars = model.num_variables();

  ChainRecord rec;
  rec.trace.seed = rng.seed();
  Snapshot acc;
  if (options.track_variables) {
    acc.x1.assign(n_vars, 0);
    acc.x2.assign(n_vars, 0);
  }
  double e = energy(model, chain.state());
  double shift = 0.0;
  for (std::size_t t = 0; t < options.max_iterations; ++t) {
    if (options.unit == IterationUnit::SingleSiteUpdate) {
      const VarId site = static_cast<VarId>(t % n_vars);
      const double before = local_energy(model, chain.state(), site);
      chain.site_update();
      e += local_energy(model, chain.state(), site) - before;
    } else {
      chain.sweep();
      e = energy(model, chain.state());
    }
    if (t == 0) shift = rec.shift = e;
    const double d = e - shift;
    acc.e1 += d;
    acc.e2 += d * d;
    if (options.track_variables) {
      const State& x = chain.state();
      for (VarId v = 0; v < n_vars; ++v) {
        acc.x1[v] += x[v];
        acc.x2[v] += static_cast<std::int64_t>(x[v]) * x[v];
      }
    }
    if (options.keep_traces) rec.trace.energy.push_back(e);
    if (options.keep_states) rec.trace.states.push_back(chain.state());
    if ((t + 1) % options.stride == 0) rec.snapshots.push_back(acc);
  }
  return rec;
}

Snapshot window(const ChainRecord& rec, std::size_t k, bool discard_first_half, std::size_t& start_iter,
                std::size_t stride) {
  Snapshot s = rec.snapshots[k];
  start_iter = 0;
  if (!discard_first_half) return s;
  const std::size_t j = (k + 1) / 2;  // evaluations dropped
  if (j == 0) return s;
  const Snapshot& base = rec.snapshots[j - 1];
  start_iter = j * stride;
  s.e1 -= base.e1;
  s.e2 -= base.e2;
  for (std::size_t v = 0; v < s.x1.size(); ++v) {
    s.x1[v] -= base.x1[v];
    s.x2[v] -= base.x2[v];
  }
  return s;
}

}  // namespace

RunResult run_chains(const Model& model, SamplerKind kind, const RunOptions& options) {
  if (options.chains < 2) throw std::invalid_argument("run_chains needs at least two chains");
  if (options.stride == 0) throw std::invalid_argument("evaluation stride must be positive");
  if (options.unit == IterationUnit::SingleSiteUpdate && kind != SamplerKind::Sequential)
    throw std::invalid_argument("single-site units apply to the sequential sampler only");
  if (options.unit == IterationUnit::SingleSiteUpdate && model.num_variables() == 0)
    throw std::invalid_argument("single-site units need at least one variable");

  const SamplerModels models = prepare_sampler(model, kind);
  std::vector<ChainRecord> records(options.chains);
  parallel::for_each_task(options.chains, [&](std::size_t c) { records[c] = run_one(models, kind, options, c); });

  RunResult result;
  for (PsrfSeries* s : {&result.energy_psrf, &result.variable_psrf, &result.psrf}) {
    s->stride = options.stride;
    s->unit = options.unit;
  }
  const std::size_t evals = options.max_iterations / options.stride;
  const std::size_t m = options.chains;
  const std::size_t n_vars = model.num_variables();
  std::vector<double> means(m), vars(m);
  std::vector<Snapshot> win(m);
  for (std::size_t k = 0; k < evals; ++k) {
    std::size_t start = 0;
    for (std::size_t c = 0; c < m; ++c) win[c] = window(records[c], k, options.discard_first_half, start, options.stride);
    const std::size_t n = (k + 1) * options.stride - start;
    if (n < 2) {
      const double inf = std::numeric_limits<double>::infinity();
      result.energy_psrf.values.push_back(inf);
      if (options.track_variables) result.variable_psrf.values.push_back(inf);
      result.psrf.values.push_back(inf);
      continue;
    }
    const double nn = static_cast<double>(n);
    for (std::size_t c = 0; c < m; ++c) {
      means[c] = win[c].e1 / nn + records[c].shift;
      vars[c] = std::max(0.0, (win[c].e2 - win[c].e1 * win[c].e1 / nn) / (nn - 1.0));
    }
    const double r_energy = psrf_from_moments(means, vars, n);
    result.energy_psrf.values.push_back(r_energy);
    double reported = r_energy;
    if (options.track_variables) {
      double r_vars = 0.0;
      for (VarId v = 0; v < n_vars; ++v) {
        for (std::size_t c = 0; c < m; ++c) {
          const std::int64_t s1 = win[c].x1[v], s2 = win[c].x2[v];
          const auto ni = static_cast<std::int64_t>(n);
          means[c] = static_cast<double>(s1) / nn;
          vars[c] = static_cast<double>(ni * s2 - s1 * s1) / (nn * (nn - 1.0));
        }
        r_vars = std::max(r_vars, psrf_from_moments(means, vars, n));
      }
      result.variable_psrf.values.push_back(r_vars);
      reported = std::max(reported, r_vars);
    }
    result.psrf.values.push_back(reported);
  }
  if (options.keep_traces || options.keep_states)
    for (auto& r : records) result.traces.push_back(std::move(r.trace));
  return result;
}

void write_trace_csv(std::ostream& out, std::span<const ChainTrace> traces) {
  std::size_t n_vars = 0;
  for (const auto& t : traces)
    if (!t.states.empty()) n_vars = t.states.front().size();
  out << "chain,sweep,energy";
  for (std::size_t v = 0; v < n_vars; ++v) out << ",v" << v;
  out << '\n';
  for (std::size_t c = 0; c < traces.size(); ++c) {
    const ChainTrace& t = traces[c];
    for (std::size_t i = 0; i < t.energy.size(); ++i) {
      out << c << ',' << i + 1 << ',' << format_double(t.energy[i]);
      if (n_vars > 0 && i < t.states.size())
        for (int s : t.states[i]) out << ',' << s;
      out << '\n';
    }
  }
}

void write_psrf_csv(std::ostream& out, const PsrfSeries& series) {
  out << "sweep,psrf\n";
  for (std::size_t k = 0; k < series.values.size(); ++k)
    out << series.iterations_at(k) << ',' << format_double(series.values[k]) << '\n';
}

}  // namespace pdgibbs
