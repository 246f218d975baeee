#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "srm/diagnostics.hpp"
#include "srm/dyad_data.hpp"
#include "srm/model.hpp"
#include "srm/rng.hpp"

namespace srm {

struct SamplerConfig {
  int chains = 4;
  int warmup_iterations = 1000;
  int sampling_iterations = 1000;
  std::uint64_t seed = 1;
  double target_accept = 0.8;
  int max_treedepth = 10;
  double initial_step_size = 0.1;
  int init_buffer = 75;
  int term_buffer = 50;
  int base_window = 25;
  /// Metropolis steps on the variance components of each non-centered
  /// block after every transition; 0 disables them.
  int interweave_steps = 20;
  /// Keep every k-th latent draw; 0 keeps none.
  int latent_thin = 10;
  /// Worker threads for chains; 0 means one per hardware thread.
  int threads = 0;
};

void validate(const SamplerConfig& config);

/// Thinned latent effects on the natural scale, one entry per retained draw.
struct LatentDraws {
  std::vector<int> chain;
  std::vector<int> iteration;
  std::vector<LatentEffects> effects;
};

/// Population-parameter draws on the constrained scale, stored
/// chain-major as [chain][iteration][parameter].
struct PosteriorSamples {
  std::vector<std::string> names;
  int chains = 0;
  int iterations = 0;
  std::vector<double> draws;
  std::vector<double> log_density;  // [chain][iteration]; may be empty when read back from CSV

  LatentDraws latent;
  std::uint64_t dataset_fingerprint = 0;
  SamplerConfig sampler;
  ModelConfig model;
  CovariateTransform covariate_transform;
  double covariate_min = 0.0;  // original scale
  double covariate_max = 0.0;

  std::size_t parameter_count() const { return names.size(); }
  double at(int chain, int iteration, std::size_t parameter) const {
    return draws[(static_cast<std::size_t>(chain) * static_cast<std::size_t>(iterations) +
                  static_cast<std::size_t>(iteration)) * names.size() + parameter];
  }
  /// Index of `name`, or npos.
  std::size_t find(const std::string& name) const;
  /// Draws of one parameter, one vector per chain.
  std::vector<std::vector<double>> parameter(std::size_t index) const;
  /// Draws of one parameter pooled over chains.
  std::vector<double> pooled(std::size_t index) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

struct ParameterDiagnostics {
  std::string name;
  double rhat = 0.0;
  double ess = 0.0;
  bool degenerate = false;    // constant draws: rhat/ess are NaN
  bool insufficient = false;  // too few draws to compute rhat/ess
};

struct ChainStats {
  double step_size = 0.0;
  int divergences = 0;
  double mean_accept_stat = 0.0;
  double mean_treedepth = 0.0;
  int treedepth_saturations = 0;
  long long leapfrogs = 0;
  std::vector<double> inverse_metric_population;  // population slots of the adapted metric
};

struct ChainDiagnostics {
  std::vector<ParameterDiagnostics> parameters;
  std::vector<ChainStats> chains;
  int total_divergences = 0;
  double divergence_rate = 0.0;  // over post-warmup transitions
  std::vector<std::string> warnings;

  /// Every parameter has a finite R-hat below `threshold`.
  bool converged(double threshold = 1.05) const;
};

struct FitResult {
  PosteriorSamples samples;
  ChainDiagnostics diagnostics;
};

/// Starting point in the unconstrained space: alpha from the pooled logit
/// clamped to [-4, 4], beta = 0, latents 0, sds 0.5, correlations 0, each
/// coordinate then jittered by Uniform(-0.1, 0.1).
std::vector<double> initialize(const NetworkDataset& dataset, const ModelConfig& model_config, Rng& rng);

/// Called with (chain, iteration, warmup?) after each transition.
using ProgressCallback = std::function<void(int, int, bool)>;

/// Runs `chains` independent NUTS chains over the posterior. Chain c uses
/// Rng::stream(seed, c), so the draws do not depend on the thread count.
FitResult fit(const NetworkDataset& dataset, const ModelConfig& model_config, const SamplerConfig& sampler_config,
              const ProgressCallback& progress = {});

/// Split R-hat and ESS for every population parameter, plus warnings.
std::vector<ParameterDiagnostics> parameter_diagnostics(const PosteriorSamples& samples);

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  double rhat = 0.0;
  double ess = 0.0;
};

std::vector<SummaryRow> posterior_summary(const PosteriorSamples& samples);

/// Summary of one pooled sample (rhat/ess left NaN).
SummaryRow summarize_draws(const std::string& name, std::vector<double> draws);

}  // namespace srm
