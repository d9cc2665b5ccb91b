#include "pdgibbs/cli.hpp"

#include <fmt/format.h>

#include <ostream>
#include <stdexcept>

#include "pdgibbs/model_io.hpp"
#include "pdgibbs/oracle.hpp"
#include "pdgibbs/partition.hpp"
#include "pdgibbs/variational.hpp"

namespace pdgibbs::cli {

ExperimentKind parse_experiment(const std::string& name) {
  if (name == "grid") return ExperimentKind::Grid;
  if (name == "random") return ExperimentKind::Random;
  if (name == "full") return ExperimentKind::Full;
  if (name == "file") return ExperimentKind::File;
  throw std::invalid_argument(fmt::format("unknown experiment '{}' (grid, random, full, file)", name));
}

void ExperimentConfig::validate() const {
  if (!(psrf_threshold > 1.0)) throw std::invalid_argument("psrf threshold must be > 1");
  if (chains < 2) throw std::invalid_argument("need at least 2 chains");
  if (stride == 0 || max_sweeps < stride) throw std::invalid_argument("max sweeps must cover at least one stride");
  if (beta_steps == 0) throw std::invalid_argument("beta steps must be >= 1");
  if (beta_max < beta_min) throw std::invalid_argument("beta max must be >= beta min");
  if (samplers.empty()) throw std::invalid_argument("no samplers selected");
  if (experiment == ExperimentKind::File && model_path.empty())
    throw std::invalid_argument("file experiment needs a model path");
  if (experiment != ExperimentKind::File && size < 2) throw std::invalid_argument("size must be >= 2");
  if (experiment == ExperimentKind::Random && k_values.empty()) throw std::invalid_argument("no k values");
}

std::vector<double> ExperimentConfig::betas() const {
  std::vector<double> out;
  if (beta_steps == 1) return {beta_min};
  for (std::size_t i = 0; i < beta_steps; ++i)
    out.push_back(beta_min + (beta_max - beta_min) * static_cast<double>(i) / static_cast<double>(beta_steps - 1));
  return out;
}

namespace {

void mixing_rows_for(const Model& model, const std::string& coupling, const ExperimentConfig& config,
                     bool single_site_sequential, std::vector<MixingRow>& rows) {
  for (SamplerKind kind : config.samplers) {
    RunOptions opts;
    opts.chains = config.chains;
    opts.stride = config.stride;
    opts.seed = config.seed;
    opts.unit = single_site_sequential && kind == SamplerKind::Sequential ? IterationUnit::SingleSiteUpdate
                                                                          : IterationUnit::Sweep;
    opts.max_iterations =
        opts.unit == IterationUnit::SingleSiteUpdate ? config.max_sweeps * model.num_variables() : config.max_sweeps;
    const RunResult run = run_chains(model, kind, opts);
    const auto it = mixing_iterations(run.psrf, config.psrf_threshold);
    rows.push_back(MixingRow{kind, coupling, it.value_or(opts.max_iterations), !it.has_value(), opts.unit});
  }
}

}  // namespace

std::vector<MixingRow> run_mixing(const ExperimentConfig& config) {
  config.validate();
  std::vector<MixingRow> rows;
  switch (config.experiment) {
    case ExperimentKind::Grid:
      for (double beta : config.betas())
        mixing_rows_for(build_grid_ising(config.size, config.size, beta), format_double(beta), config, false, rows);
      break;
    case ExperimentKind::Full:
      for (double beta : config.betas())
        mixing_rows_for(build_full_ising(config.size, beta), format_double(beta), config, true, rows);
      break;
    case ExperimentKind::Random:
      for (std::size_t k : config.k_values)
        mixing_rows_for(build_random_graph(config.size, k, config.seed), std::to_string(k), config, false, rows);
      break;
    case ExperimentKind::File:
      mixing_rows_for(load_model(config.model_path), "", config, false, rows);
      break;
  }
  return rows;
}

void write_mixing_csv(std::ostream& out, const std::vector<MixingRow>& rows) {
  out << kMixingSchema << '\n' << "sampler,coupling,mixing_index,censored,iteration_unit\n";
  for (const MixingRow& r : rows)
    out << to_string(r.sampler) << ',' << r.coupling << ',' << r.mixing_index << ',' << (r.censored ? 1 : 0) << ','
        << to_string(r.unit) << '\n';
}

void cmd_mixing(const ExperimentConfig& config, std::ostream& out) { write_mixing_csv(out, run_mixing(config)); }

// ---------------------------------------------------------------------------

void cmd_sample(const SampleConfig& config, std::ostream& out) {
  cmd_sample(load_model(config.model_path), config, out);
}

void cmd_sample(const Model& model, const SampleConfig& config, std::ostream& out) {
  const RngStreams rng(config.seed);
  Chain chain(prepare_sampler(model, config.sampler), config.sampler, rng, uniform_state(model, rng));
  out << kSampleSchema << '\n' << "sweep,energy,magnetization\n";
  for (std::size_t t = 1; t <= config.sweeps; ++t) {
    chain.sweep();
    const SweepStats s = sweep_stats(model, chain.state());
    out << t << ',' << format_double(s.energy) << ',' << format_double(s.magnetization) << '\n';
  }
  out << "#final_state=";
  for (std::size_t v = 0; v < chain.state().size(); ++v) out << (v ? " " : "") << chain.state()[v];
  out << '\n';
}

// ---------------------------------------------------------------------------

namespace {

std::optional<double> exact_log_z_if_small(const Model& model, std::size_t cap) {
  try {
    state_space_size(model, cap);
  } catch (const std::length_error&) {
    return std::nullopt;
  }
  return exact_log_z(model, cap);
}

}  // namespace

void cmd_logz(const LogzConfig& config, std::ostream& out) { cmd_logz(load_model(config.model_path), config, out); }

void cmd_logz(const Model& model, const LogzConfig& config, std::ostream& out) {
  const DualModel dm =
      config.sampler == SamplerKind::SwendsenWang ? sw_dual_model(model) : DualModel(model);
  EstimateOptions opts;
  opts.sampler = config.sampler;
  opts.n_sweeps = config.sweeps;
  opts.burn_in = config.burn_in;
  opts.seed = config.seed;
  const LogZEstimate est = estimate_log_z_lower(dm, opts);
  const auto exact = exact_log_z_if_small(model, config.exact_cap);

  out << kLogzSchema << '\n' << "quantity,value\n";
  out << "sampler," << to_string(config.sampler) << '\n';
  out << "sweeps," << config.sweeps << '\n';
  out << "burn_in," << est.burn_in << '\n';
  out << "n_samples," << est.n_samples << '\n';
  out << "mean_log_v," << format_double(est.mean_log_v) << '\n';
  out << "std_error," << format_double(est.std_error) << '\n';
  out << "log_mean_v," << format_double(est.log_mean_v) << '\n';
  out << "log_v_variance," << format_double(est.log_v_variance) << '\n';
  out << "v_relative_variance," << format_double(est.v_relative_variance) << '\n';
  if (exact) {
    out << "exact_log_z," << format_double(*exact) << '\n';
    out << "gap," << format_double(*exact - est.mean_log_v) << '\n';
  } else {
    out << "exact_log_z,unavailable\n";
    out << "gap,unavailable\n";
  }
}

// ---------------------------------------------------------------------------

InferMethod parse_infer_method(const std::string& name) {
  if (name == "map-em") return InferMethod::MapEm;
  if (name == "mean-field") return InferMethod::MeanField;
  if (name == "tree-map") return InferMethod::TreeMap;
  if (name == "tree-mf") return InferMethod::TreeMf;
  throw std::invalid_argument(fmt::format("unknown method '{}' (map-em, mean-field, tree-map, tree-mf)", name));
}

const char* to_string(InferMethod method) {
  switch (method) {
    case InferMethod::MapEm:
      return "map-em";
    case InferMethod::MeanField:
      return "mean-field";
    case InferMethod::TreeMap:
      return "tree-map";
    case InferMethod::TreeMf:
      return "tree-mf";
  }
  return "unknown";
}

InferOutcome cmd_infer(const InferConfig& config, std::ostream& out) {
  return cmd_infer(load_model(config.model_path), config, out);
}

InferOutcome cmd_infer(const Model& model, const InferConfig& config, std::ostream& out) {
  const DualModel dm(model);
  VariationalOptions opts;
  opts.tolerance = config.tolerance;
  opts.max_iterations = config.max_iterations;
  opts.damping = config.damping;
  opts.fine_tune = config.fine_tune;
  const bool tree = config.method == InferMethod::TreeMap || config.method == InferMethod::TreeMf;
  const BlockPartition partition =
      tree ? random_spanning_forest(model, RngStreams(config.seed), 0) : empty_partition(model);
  const bool is_map = config.method == InferMethod::MapEm || config.method == InferMethod::TreeMap;

  auto row = [&](const char* record, const std::string& key, const std::string& value) {
    out << record << ',' << key << ',' << value << '\n';
  };
  out << kInferSchema << '\n' << "record,key,value\n";
  row("summary", "method", to_string(config.method));
  if (tree) row("summary", "retained_factors", std::to_string(partition.retained_count()));

  std::optional<std::size_t> exact_ok;
  try {
    exact_ok = state_space_size(model, config.exact_cap);
  } catch (const std::length_error&) {
  }

  InferOutcome outcome;
  if (is_map) {
    const MapRun run = tree ? run_tree_map(dm, partition, opts) : run_em_map(dm, opts);
    outcome = {run.converged, run.final_delta};
    row("summary", "iterations", std::to_string(run.iterations));
    row("summary", "converged", run.converged ? "1" : "0");
    row("summary", "final_delta", format_double(run.final_delta));
    row("summary", "energy", format_double(run.objective.back()));
    for (std::size_t i = 0; i < run.objective.size(); ++i)
      row("objective", std::to_string(i), format_double(run.objective[i]));
    for (std::size_t v = 0; v < run.state.x.size(); ++v) row("state", std::to_string(v), std::to_string(run.state.x[v]));
    if (exact_ok) {
      const double best = energy(model, exact_map(model, config.exact_cap));
      row("exact", "map_energy", format_double(best));
      row("exact", "gap", format_double(best - run.objective.back()));
    }
  } else {
    const MeanFieldRun run = tree ? run_tree_mean_field(dm, partition, opts) : run_mean_field(dm, opts);
    outcome = {run.converged, run.final_delta};
    row("summary", "iterations", std::to_string(run.iterations));
    row("summary", "converged", run.converged ? "1" : "0");
    row("summary", "final_delta", format_double(run.final_delta));
    row("summary", "free_energy", format_double(run.objective.back()));
    if (run.fine_tuned) {
      row("summary", "fine_tune_iterations", std::to_string(run.fine_tuned->iterations));
      row("summary", "fine_tune_free_energy", format_double(run.fine_tuned->free_energy));
    }
    for (std::size_t i = 0; i < run.objective.size(); ++i)
      row("objective", std::to_string(i), format_double(run.objective[i]));
    const StateVectors q = run.marginals();
    for (std::size_t v = 0; v < q.size(); ++v)
      for (std::size_t k = 0; k < q[v].size(); ++k)
        row("marginal", fmt::format("{}:{}", v, k), format_double(q[v][k]));
    if (exact_ok) {
      const double log_z = exact_log_z(model, config.exact_cap);
      row("exact", "log_z", format_double(log_z));
      row("exact", "kl_bound", format_double(run.objective.back() + log_z));
    }
  }
  return outcome;
}

// ---------------------------------------------------------------------------

void cmd_generate(const GenerateConfig& config, std::ostream& out) {
  switch (config.experiment) {
    case ExperimentKind::Grid:
      write_model(out, build_grid_ising(config.size, config.size, config.beta));
      return;
    case ExperimentKind::Random:
      write_model(out, build_random_graph(config.size, config.k, config.seed));
      return;
    case ExperimentKind::Full:
      write_model(out, build_full_ising(config.size, config.beta));
      return;
    case ExperimentKind::File:
      break;
  }
  throw std::invalid_argument("generate supports grid, random and full");
}

}  // namespace pdgibbs::cli
