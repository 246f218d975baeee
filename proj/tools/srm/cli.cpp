#include "srm/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "srm/dyad_data.hpp"
#include "srm/fingerprint.hpp"
#include "srm/inference.hpp"
#include "srm/model.hpp"
#include "srm/posterior_io.hpp"
#include "srm/reciprocity.hpp"
#include "srm/simulator.hpp"

namespace srm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class StrictFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimulateOptions {
  std::size_t nodes = 0;
  std::int64_t trials = 10;
  std::string covariate = "uniform";
  double cov_lo = -1.0, cov_hi = 1.0, cov_value = 0.0, cov_p = 0.5;
  std::string covariate_matrix;
  double alpha = -1.0, beta = 0.5;
  double sigma_a = 0.8, sigma_b = 0.6, rho_ab = 0.3;
  double sigma_u = 1.0, sigma_v = 0.5, rho_uv = 0.4, sigma_d = 0.3;
  bool no_overdispersion = false;
  double missing_fraction = 0.0;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

struct FitOptions {
  std::string data;
  std::string out_dir = ".";
  std::string ingest_config;
  std::string covariate_transform = "none";
  std::string parameterization = "mixed";
  bool no_overdispersion = false;
  bool strict = false;
  bool quiet = false;
  SamplerConfig sampler;
};

struct ReciprocityOptions {
  std::string posterior;
  std::string metadata;
  std::vector<double> grid;
  double grid_min = std::nan("");
  double grid_max = std::nan("");
  std::size_t grid_points = kDefaultGridPoints;
  std::string out_dir = ".";
};

struct SummarizeOptions {
  std::string data;
  std::string ingest_config;
};

struct FileRecord {
  std::string path;
  std::string hash;
};

FileRecord record(const fs::path& p) { return {p.string(), file_fingerprint(p)}; }

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(std::string command, const CLI::App& app, const std::vector<std::string>& args)
      : command_(std::move(command)), started_(std::chrono::steady_clock::now()), started_at_(utc_now()) {
    config_echo_ = app.config_to_str(true, false);
    args_ = args;
  }

  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
  void input(const fs::path& p) { inputs_.push_back(record(p)); }
  void output(const fs::path& p) { outputs_.push_back(record(p)); }

  fs::path write(const fs::path& dir) const {
    json j;
    j["command"] = command_;
    j["tool_version"] = SRM_VERSION_STRING;
    j["arguments"] = args_;
    j["config_echo"] = config_echo_;
    j["seeds"] = seeds_;
    auto files = [](const std::vector<FileRecord>& v) {
      json a = json::array();
      for (const auto& r : v) a.push_back({{"path", r.path}, {"fnv1a64", r.hash}});
      return a;
    };
    j["inputs"] = files(inputs_);
    j["outputs"] = files(outputs_);
    j["started_at"] = started_at_;
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    const fs::path path = dir / ("manifest_" + command_ + ".json");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
    return path;
  }

 private:
  std::string command_;
  std::chrono::steady_clock::time_point started_;
  std::string started_at_;
  std::string config_echo_;
  std::vector<std::string> args_;
  json seeds_ = json::object();
  std::vector<FileRecord> inputs_, outputs_;
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<double> read_matrix_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open covariate matrix " + path.string());
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(path.string() + ": malformed matrix entry '" + cell + "'");
      }
    }
  }
  return values;
}

json latent_json(const LatentEffects& l) {
  return {{"sender", l.sender},
          {"receiver", l.receiver},
          {"dyad_intercept", l.dyad_intercept},
          {"dyad_slope", l.dyad_slope},
          {"overdispersion", l.overdispersion}};
}

int cmd_simulate(const SimulateOptions& o, const CLI::App& app, const std::vector<std::string>& args,
                 std::ostream& out) {
  Manifest manifest("simulate", app, args);
  SimulationSpec spec;
  spec.n_nodes = o.nodes;
  spec.trials_per_cell = o.trials;
  if (o.covariate == "uniform") spec.covariate = CovariateGenerator::uniform(o.cov_lo, o.cov_hi);
  else if (o.covariate == "constant") spec.covariate = CovariateGenerator::constant(o.cov_value);
  else if (o.covariate == "binary") spec.covariate = CovariateGenerator::binary(o.cov_p);
  else spec.covariate = CovariateGenerator::explicit_matrix(read_matrix_csv(o.covariate_matrix));
  spec.fixed = {o.alpha, o.beta};
  spec.components = {o.sigma_a, o.sigma_b, o.rho_ab, o.sigma_u, o.sigma_v, o.rho_uv, o.sigma_d};
  spec.overdispersion_enabled = !o.no_overdispersion;
  spec.missing_dyad_fraction = o.missing_fraction;
  spec.seed = o.seed;
  manifest.seed("seed", o.seed);
  if (!o.covariate_matrix.empty()) manifest.input(o.covariate_matrix);

  const auto sim = simulate(spec);

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  const fs::path data_path = dir / "data.csv";
  {
    auto f = open_output(data_path);
    write_csv(sim.dataset, f);
  }
  const fs::path truth_path = dir / "truth.json";
  {
    json t;
    t["seed"] = o.seed;
    t["rng"] = "xoshiro256** seeded by splitmix64";
    t["spec"] = {{"n_nodes", o.nodes},
                 {"trials_per_cell", o.trials},
                 {"covariate",
                  {{"kind", o.covariate}, {"lo", o.cov_lo}, {"hi", o.cov_hi}, {"value", o.cov_value}, {"p", o.cov_p}}},
                 {"alpha", o.alpha},
                 {"beta", o.beta},
                 {"sigma_a", o.sigma_a},
                 {"sigma_b", o.sigma_b},
                 {"rho_ab", o.rho_ab},
                 {"sigma_u", o.sigma_u},
                 {"sigma_v", o.sigma_v},
                 {"rho_uv", o.rho_uv},
                 {"sigma_d", spec.overdispersion_enabled ? o.sigma_d : 0.0},
                 {"overdispersion_enabled", spec.overdispersion_enabled},
                 {"missing_dyad_fraction", o.missing_fraction}};
    std::vector<std::string> labels;
    for (const auto& n : sim.dataset.nodes()) labels.push_back(n.label);
    t["node_labels"] = labels;
    t["latent"] = latent_json(sim.latent);
    auto f = open_output(truth_path);
    f << t.dump(2) << '\n';
  }
  manifest.output(data_path);
  manifest.output(truth_path);
  manifest.write(dir);

  const auto s = summarize(sim.dataset);
  out << "simulated " << s.observations << " observations over " << s.nodes << " nodes (" << s.dyads
      << " dyads) -> " << data_path.string() << '\n';
  return kSuccess;
}

IngestConfig ingest_config_for(const std::string& path, const std::string& transform) {
  IngestConfig config = path.empty() ? IngestConfig{} : load_ingest_config(path);
  if (transform != "none") config.transform = parse_transform_kind(transform);
  return config;
}

void print_summary_table(const std::vector<SummaryRow>& rows, std::ostream& out) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %10s %9s %10s %10s %10s %7s %8s\n", "parameter", "mean", "sd", "q05", "q50",
                "q95", "rhat", "ess");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %10.4f %9.4f %10.4f %10.4f %10.4f %7.3f %8.1f\n", r.name.c_str(), r.mean,
                  r.sd, r.q05, r.q50, r.q95, r.rhat, r.ess);
    out << buf;
  }
}

int cmd_fit(const FitOptions& o, const CLI::App& app, const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  Manifest manifest("fit", app, args);
  const auto ingest = ingest_config_for(o.ingest_config, o.covariate_transform);
  const auto dataset = load_csv(o.data, ingest);
  manifest.input(o.data);
  if (!o.ingest_config.empty()) manifest.input(o.ingest_config);
  manifest.seed("seed", o.sampler.seed);

  ModelConfig model;
  model.overdispersion_enabled = !o.no_overdispersion;
  model.parameterization = parse_parameterization(o.parameterization);

  ProgressCallback progress;
  const int total = o.sampler.warmup_iterations + o.sampler.sampling_iterations;
  if (!o.quiet) {
    progress = [&err, total, &o](int chain, int iteration, bool warmup) {
      const int done = (warmup ? 0 : o.sampler.warmup_iterations) + iteration + 1;
      if (done == total || done % std::max(1, total / 10) == 0) {
        err << "chain " << chain << ": " << done << "/" << total << (warmup ? " (warmup)" : " (sampling)") << '\n';
      }
    };
  }
  const auto result = fit(dataset, model, o.sampler, progress);
  for (const auto& w : result.diagnostics.warnings) err << "warning: " << w << '\n';

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  const fs::path posterior_path = dir / "posterior.csv";
  {
    auto f = open_output(posterior_path);
    write_posterior_csv(result.samples, f);
  }
  const fs::path diagnostics_path = dir / "diagnostics.json";
  {
    auto f = open_output(diagnostics_path);
    f << fit_metadata_json(result);
  }
  const auto rows = posterior_summary(result.samples);
  const fs::path summary_path = dir / "summary.csv";
  {
    auto f = open_output(summary_path);
    write_summary_csv(rows, f);
  }
  manifest.output(posterior_path);
  manifest.output(diagnostics_path);
  manifest.output(summary_path);
  if (o.sampler.latent_thin > 0) {
    const fs::path latent_path = dir / "latent.csv";
    {
      auto f = open_output(latent_path);
      write_latent_csv(result.samples, dataset, f);
    }
    manifest.output(latent_path);
  }
  manifest.write(dir);

  print_summary_table(rows, out);
  if (!result.diagnostics.converged()) {
    if (o.strict) {
      throw StrictFailure("convergence diagnostics failed: not every R-hat is below 1.05");
    }
    err << "warning: not every R-hat is below 1.05\n";
  }
  return kSuccess;
}

int cmd_reciprocity(const ReciprocityOptions& o, const CLI::App& app, const std::vector<std::string>& args,
                    std::ostream& out) {
  Manifest manifest("reciprocity", app, args);
  auto samples = read_posterior_csv(o.posterior);
  manifest.input(o.posterior);
  fs::path meta = o.metadata.empty() ? fs::path(o.posterior).parent_path() / "diagnostics.json" : fs::path(o.metadata);
  const bool have_meta = fs::exists(meta);
  if (have_meta) {
    apply_fit_metadata(meta, samples);
    manifest.input(meta);
  } else if (!o.metadata.empty()) {
    throw std::runtime_error("metadata file " + meta.string() + " does not exist");
  }

  ModelConfig config = samples.model;
  config.overdispersion_enabled = samples.find("sigma_d") != PosteriorSamples::npos;

  GridSpec grid;
  if (!o.grid.empty()) {
    grid = GridSpec::values(o.grid);
  } else if (std::isfinite(o.grid_min) && std::isfinite(o.grid_max)) {
    grid = GridSpec::linspace(o.grid_min, o.grid_max, o.grid_points);
  } else if (have_meta) {
    grid = default_grid(samples, o.grid_points);
  } else {
    throw CLI::ValidationError("--grid", "no metadata found; give --grid or --grid-min/--grid-max");
  }

  const auto curve = reciprocity_curve(samples, grid, config);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  const fs::path curve_path = dir / "reciprocity.csv";
  {
    auto f = open_output(curve_path);
    write_curve_csv(curve, f);
  }
  manifest.output(curve_path);
  manifest.write(dir);

  const auto rho_ab = samples.find("rho_ab");
  if (rho_ab != PosteriorSamples::npos) {
    const auto row = summarize_draws("rho_ab", samples.pooled(rho_ab));
    char buf[200];
    std::snprintf(buf, sizeof buf, "generalized reciprocity (rho_ab): mean %.4f, median %.4f, 90%% interval [%.4f, %.4f]\n",
                  row.mean, row.q50, row.q05, row.q95);
    out << buf;
  }
  out << "wrote " << curve.points.size() << " grid points to " << curve_path.string() << '\n';
  return kSuccess;
}

int cmd_summarize(const SummarizeOptions& o, std::ostream& out) {
  const auto dataset = load_csv(o.data, ingest_config_for(o.ingest_config, "none"));
  const auto s = summarize(dataset);
  out << "nodes: " << s.nodes << '\n'
      << "observations: " << s.observations << '\n'
      << "dyads: " << s.dyads << '\n'
      << "both_directions_fraction: " << format_real(s.both_directions_fraction) << '\n'
      << "covariate_range: " << format_real(s.covariate_min) << " " << format_real(s.covariate_max) << '\n'
      << "covariate_mean: " << format_real(s.covariate_mean) << '\n'
      << "total_trials: " << s.total_trials << '\n'
      << "total_successes: " << s.total_successes << '\n';
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Binomial social relations model with covariate-dependent dyadic reciprocity", "srm"};
  app.set_version_flag("--version", SRM_VERSION_STRING);
  app.set_config("--config", "", "Key-value config file mirroring the command-line flags");
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Draw a synthetic dataset from the generative model");
  simulate_cmd->add_option("--nodes", sim.nodes, "Number of nodes (>= 3)")->required();
  simulate_cmd->add_option("--seed", sim.seed, "RNG seed")->required();
  simulate_cmd->add_option("--trials", sim.trials, "Trials per directed cell")->capture_default_str();
  simulate_cmd->add_option("--covariate", sim.covariate, "Covariate generator")
      ->check(CLI::IsMember({"uniform", "constant", "binary", "matrix"}))
      ->capture_default_str();
  simulate_cmd->add_option("--cov-lo", sim.cov_lo, "Uniform covariate lower bound")->capture_default_str();
  simulate_cmd->add_option("--cov-hi", sim.cov_hi, "Uniform covariate upper bound")->capture_default_str();
  simulate_cmd->add_option("--cov-value", sim.cov_value, "Constant covariate value")->capture_default_str();
  simulate_cmd->add_option("--cov-p", sim.cov_p, "Binary covariate probability")->capture_default_str();
  simulate_cmd->add_option("--covariate-matrix", sim.covariate_matrix, "Symmetric N x N covariate CSV (matrix mode)");
  simulate_cmd->add_option("--alpha", sim.alpha)->capture_default_str();
  simulate_cmd->add_option("--beta", sim.beta)->capture_default_str();
  simulate_cmd->add_option("--sigma-a", sim.sigma_a)->capture_default_str();
  simulate_cmd->add_option("--sigma-b", sim.sigma_b)->capture_default_str();
  simulate_cmd->add_option("--rho-ab", sim.rho_ab)->capture_default_str();
  simulate_cmd->add_option("--sigma-u", sim.sigma_u)->capture_default_str();
  simulate_cmd->add_option("--sigma-v", sim.sigma_v)->capture_default_str();
  simulate_cmd->add_option("--rho-uv", sim.rho_uv)->capture_default_str();
  simulate_cmd->add_option("--sigma-d", sim.sigma_d)->capture_default_str();
  simulate_cmd->add_flag("--no-overdispersion", sim.no_overdispersion, "Omit the d_ij terms");
  simulate_cmd->add_option("--missing-fraction", sim.missing_fraction, "Fraction of dyads left unobserved")
      ->capture_default_str();
  simulate_cmd->add_option("--out-dir", sim.out_dir, "Output directory")->capture_default_str();

  FitOptions fo;
  auto* fit_cmd = app.add_subcommand("fit", "Sample the posterior with NUTS");
  fit_cmd->add_option("--data", fo.data, "Dataset CSV")->required();
  fit_cmd->add_option("--out-dir", fo.out_dir, "Output directory")->capture_default_str();
  fit_cmd->add_option("--ingest-config", fo.ingest_config, "Key-value ingest config (column names, transform)");
  fit_cmd->add_option("--covariate-transform", fo.covariate_transform, "Covariate transform applied at ingest")
      ->check(CLI::IsMember({"none", "center", "standardize"}))
      ->capture_default_str();
  fit_cmd->add_option("--chains", fo.sampler.chains)->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_option("--warmup", fo.sampler.warmup_iterations)->check(CLI::NonNegativeNumber)->capture_default_str();
  fit_cmd->add_option("--samples", fo.sampler.sampling_iterations)->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_option("--seed", fo.sampler.seed)->capture_default_str();
  fit_cmd->add_option("--target-accept", fo.sampler.target_accept)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  fit_cmd->add_option("--max-treedepth", fo.sampler.max_treedepth)->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_option("--interweave-steps", fo.sampler.interweave_steps,
                      "Metropolis steps on variance components per iteration (0: off)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  fit_cmd->add_option("--latent-thin", fo.sampler.latent_thin, "Keep every k-th latent draw (0: none)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  fit_cmd->add_option("--threads", fo.sampler.threads, "Chain worker threads (0: hardware)")
      ->envname("SRM_THREADS")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  fit_cmd->add_option("--parameterization", fo.parameterization)
      ->check(CLI::IsMember({"mixed", "non_centered", "centered"}))
      ->capture_default_str();
  fit_cmd->add_flag("--no-overdispersion", fo.no_overdispersion, "Omit the d_ij terms");
  fit_cmd->add_flag("--strict", fo.strict, "Exit with code 3 unless every R-hat < 1.05");
  fit_cmd->add_flag("--quiet", fo.quiet, "Suppress progress output");

  ReciprocityOptions ro;
  auto* rec_cmd = app.add_subcommand("reciprocity", "Posterior curve of dyadic reciprocity over the covariate");
  rec_cmd->add_option("--posterior", ro.posterior, "posterior.csv written by fit")->required();
  rec_cmd->add_option("--metadata", ro.metadata, "diagnostics.json written by fit (default: next to posterior)");
  rec_cmd->add_option("--grid", ro.grid, "Explicit covariate values, comma separated")->delimiter(',');
  rec_cmd->add_option("--grid-min", ro.grid_min);
  rec_cmd->add_option("--grid-max", ro.grid_max);
  rec_cmd->add_option("--grid-points", ro.grid_points)->check(CLI::PositiveNumber)->capture_default_str();
  rec_cmd->add_option("--out-dir", ro.out_dir, "Output directory")->capture_default_str();

  SummarizeOptions so;
  auto* sum_cmd = app.add_subcommand("summarize", "Describe a dataset");
  sum_cmd->add_option("--data", so.data, "Dataset CSV")->required();
  sum_cmd->add_option("--ingest-config", so.ingest_config);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::CallForVersion&) {
    out << SRM_VERSION_STRING << '\n';
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return kUsage;
  }

  try {
    if (simulate_cmd->parsed()) {
      if (sim.covariate == "matrix" && sim.covariate_matrix.empty()) {
        err << "error: --covariate matrix requires --covariate-matrix\n";
        return kUsage;
      }
      return cmd_simulate(sim, *simulate_cmd, args, out);
    }
    if (fit_cmd->parsed()) return cmd_fit(fo, *fit_cmd, args, out, err);
    if (rec_cmd->parsed()) return cmd_reciprocity(ro, *rec_cmd, args, out);
    if (sum_cmd->parsed()) return cmd_summarize(so, out);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataValidation;
  } catch (const StrictFailure& e) {
    err << "error: " << e.what() << '\n';
    return kStrictDiagnostics;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace srm::cli
