#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pdgibbs/diagnostics.hpp"
#include "pdgibbs/model.hpp"
#include "pdgibbs/sampling.hpp"

namespace pdgibbs::cli {

// Every CSV starts with a `#schema=<name>.v<N>` line; the header follows.
inline constexpr const char* kMixingSchema = "#schema=mixing.v1";
inline constexpr const char* kSampleSchema = "#schema=sample.v1";
inline constexpr const char* kLogzSchema = "#schema=logz.v1";
inline constexpr const char* kInferSchema = "#schema=infer.v1";

enum class ExperimentKind { Grid, Random, Full, File };

ExperimentKind parse_experiment(const std::string& name);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::Grid;
  std::size_t size = 16;  // grid side, or variable count for random/full
  double beta_min = 0.1;
  double beta_max = 0.5;
  std::size_t beta_steps = 5;
  std::vector<std::size_t> k_values{2, 4, 8};
  std::vector<SamplerKind> samplers{SamplerKind::Sequential, SamplerKind::PrimalDual};
  std::size_t chains = 10;
  std::size_t max_sweeps = 2000;
  std::size_t stride = 10;
  double psrf_threshold = 1.01;
  std::uint64_t seed = 0;
  std::string model_path;  // File experiment

  void validate() const;
  std::vector<double> betas() const;
};

struct MixingRow {
  SamplerKind sampler;
  std::string coupling;  // formatted beta or k; empty for a model file
  std::size_t mixing_index;  // iterations; max_sweeps when censored
  bool censored;
  IterationUnit unit;
};

/// One row per (coupling, sampler), in coupling order then sampler order.
std::vector<MixingRow> run_mixing(const ExperimentConfig& config);
void write_mixing_csv(std::ostream& out, const std::vector<MixingRow>& rows);
void cmd_mixing(const ExperimentConfig& config, std::ostream& out);

struct SampleConfig {
  std::string model_path;
  SamplerKind sampler = SamplerKind::PrimalDual;
  std::size_t sweeps = 1000;
  std::uint64_t seed = 0;
};

/// Header `sweep,energy,magnetization`, then `#final_state=` with the last state.
void cmd_sample(const SampleConfig& config, std::ostream& out);
void cmd_sample(const Model& model, const SampleConfig& config, std::ostream& out);

struct LogzConfig {
  std::string model_path;
  SamplerKind sampler = SamplerKind::PrimalDual;
  std::size_t sweeps = 10000;
  std::optional<std::size_t> burn_in;
  std::uint64_t seed = 0;
  std::size_t exact_cap = std::size_t{1} << 22;
};

/// Header `quantity,value`; exact quantities read `unavailable` above the cap.
void cmd_logz(const LogzConfig& config, std::ostream& out);
void cmd_logz(const Model& model, const LogzConfig& config, std::ostream& out);

enum class InferMethod { MapEm, MeanField, TreeMap, TreeMf };

InferMethod parse_infer_method(const std::string& name);
const char* to_string(InferMethod method);

struct InferConfig {
  std::string model_path;
  InferMethod method = InferMethod::MapEm;
  std::uint64_t seed = 0;
  double tolerance = 1e-8;
  std::size_t max_iterations = 10000;
  double damping = 0.0;
  bool fine_tune = false;
  std::size_t exact_cap = std::size_t{1} << 22;
};

struct InferOutcome {
  bool converged = false;
  double final_delta = 0.0;
};

/// Header `record,key,value` with summary, objective, state or marginal rows,
/// and exact comparisons when enumerable.
InferOutcome cmd_infer(const InferConfig& config, std::ostream& out);
InferOutcome cmd_infer(const Model& model, const InferConfig& config, std::ostream& out);

struct GenerateConfig {
  ExperimentKind experiment = ExperimentKind::Grid;
  std::size_t size = 3;
  double beta = 0.3;
  std::size_t k = 2;
  std::uint64_t seed = 0;
};

/// Writes the generated model in the text format.
void cmd_generate(const GenerateConfig& config, std::ostream& out);

}  // namespace pdgibbs::cli
