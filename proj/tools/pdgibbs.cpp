// Command-line front end: mixing experiments, sampling, log Z estimation,
// variational inference and model generation.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <memory>

#include "pdgibbs/cli.hpp"
#include "pdgibbs/model_io.hpp"

namespace {

using namespace pdgibbs;

/// Output stream for --out, stdout when empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw std::runtime_error(fmt::format("cannot write '{}'", path));
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  void finish() {
    stream().flush();
    if (!stream()) throw std::runtime_error("error writing output");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::vector<SamplerKind> parse_samplers(const std::vector<std::string>& names) {
  std::vector<SamplerKind> out;
  for (const auto& n : names) out.push_back(parse_sampler_kind(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Primal-dual Gibbs sampling and variational inference for pairwise MRFs"};
  app.require_subcommand(1);
  std::string out_path;
  std::string format = "csv";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", out_path, "Output file (default stdout)");
    sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv"}));
  };

  // mixing
  cli::ExperimentConfig mix;
  std::string experiment = "grid";
  std::vector<std::string> samplers{"sequential", "primal-dual"};
  auto* mixing = app.add_subcommand("mixing", "Iterations until the PSRF stays below a threshold");
  mixing->add_option("--experiment", experiment, "grid, random, full or file")
      ->check(CLI::IsMember({"grid", "random", "full", "file"}));
  mixing->add_option("--size", mix.size, "Grid side or number of variables");
  mixing->add_option("--beta-min", mix.beta_min);
  mixing->add_option("--beta-max", mix.beta_max);
  mixing->add_option("--beta-steps", mix.beta_steps);
  mixing->add_option("--k", mix.k_values, "Factors per variable (random experiment)");
  mixing->add_option("--sampler", samplers, "Samplers to compare");
  mixing->add_option("--chains", mix.chains);
  mixing->add_option("--max-sweeps", mix.max_sweeps);
  mixing->add_option("--stride", mix.stride, "Sweeps between PSRF evaluations");
  mixing->add_option("--psrf-threshold", mix.psrf_threshold);
  mixing->add_option("--seed", mix.seed);
  mixing->add_option("--model", mix.model_path, "Model file (file experiment)");
  add_common(mixing);

  // sample
  cli::SampleConfig smp;
  std::string sample_sampler = "primal-dual";
  auto* sample = app.add_subcommand("sample", "Run one chain and write its energy trace");
  sample->add_option("--model", smp.model_path)->required();
  sample->add_option("--sampler", sample_sampler);
  sample->add_option("--sweeps", smp.sweeps);
  sample->add_option("--seed", smp.seed);
  add_common(sample);

  // logz
  cli::LogzConfig lz;
  std::string logz_sampler = "primal-dual";
  std::size_t logz_burn_in = 0;
  auto* logz = app.add_subcommand("logz", "Estimate a lower bound on log Z");
  logz->add_option("--model", lz.model_path)->required();
  logz->add_option("--sampler", logz_sampler);
  logz->add_option("--sweeps", lz.sweeps);
  auto* burn_opt = logz->add_option("--burn-in", logz_burn_in, "Discarded sweeps (default 10%)");
  logz->add_option("--seed", lz.seed);
  add_common(logz);

  // infer
  cli::InferConfig inf;
  std::string method = "map-em";
  auto* infer = app.add_subcommand("infer", "EM-MAP or mean-field inference");
  infer->add_option("--model", inf.model_path)->required();
  infer->add_option("--method", method)->check(CLI::IsMember({"map-em", "mean-field", "tree-map", "tree-mf"}));
  infer->add_option("--seed", inf.seed);
  infer->add_option("--tolerance", inf.tolerance);
  infer->add_option("--max-iterations", inf.max_iterations);
  infer->add_option("--damping", inf.damping);
  infer->add_flag("--fine-tune", inf.fine_tune, "Finish with coordinate-ascent mean field");
  add_common(infer);

  // generate
  cli::GenerateConfig gen;
  std::string gen_experiment = "grid";
  auto* generate = app.add_subcommand("generate", "Write a generated model");
  generate->add_option("--experiment", gen_experiment)->check(CLI::IsMember({"grid", "random", "full"}));
  generate->add_option("--size", gen.size);
  generate->add_option("--beta", gen.beta);
  generate->add_option("--k", gen.k);
  generate->add_option("--seed", gen.seed);
  add_common(generate);

  CLI11_PARSE(app, argc, argv);

  try {
    Output out(out_path);
    if (*mixing) {
      mix.experiment = cli::parse_experiment(experiment);
      mix.samplers = parse_samplers(samplers);
      cli::cmd_mixing(mix, out.stream());
    } else if (*sample) {
      smp.sampler = parse_sampler_kind(sample_sampler);
      cli::cmd_sample(smp, out.stream());
    } else if (*logz) {
      lz.sampler = parse_sampler_kind(logz_sampler);
      if (burn_opt->count() > 0) lz.burn_in = logz_burn_in;
      cli::cmd_logz(lz, out.stream());
    } else if (*infer) {
      inf.method = cli::parse_infer_method(method);
      const auto outcome = cli::cmd_infer(inf, out.stream());
      if (!outcome.converged)
        std::cerr << fmt::format("warning: did not converge, final delta {}\n", format_double(outcome.final_delta));
    } else if (*generate) {
      gen.experiment = cli::parse_experiment(gen_experiment);
      cli::cmd_generate(gen, out.stream());
    }
    out.finish();
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
