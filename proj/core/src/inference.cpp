#include "srm/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "srm/nuts.hpp"

namespace srm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class PosteriorTarget final : public LogDensity {
 public:
  explicit PosteriorTarget(const SrmPosterior& posterior) : posterior_(posterior) {}
  std::size_t dimension() const override { return posterior_.dimension(); }
  double log_density_and_gradient(std::span<const double> q, std::span<double> gradient) const override {
    return posterior_.log_density_and_gradient(q, gradient);
  }

 private:
  const SrmPosterior& posterior_;
};

struct ChainOutput {
  std::vector<double> draws;        // [iteration][parameter]
  std::vector<double> log_density;  // [iteration]
  std::vector<int> latent_iterations;
  std::vector<LatentEffects> latent;
  ChainStats stats;
  int sampling_divergences = 0;
};

ChainOutput run_chain(const SrmPosterior& posterior, const SamplerConfig& config, int chain,
                      const ProgressCallback& progress) {
  Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(chain));
  const PosteriorTarget target(posterior);
  NutsSampler sampler(target, rng, {config.max_treedepth, 1000.0});

  bool placed = false;
  for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
    const auto q0 = initialize(posterior.dataset(), posterior.config(), rng);
    try {
      sampler.set_position(q0);
      placed = true;
    } catch (const std::domain_error&) {
    }
  }
  if (!placed) {
    throw std::runtime_error("chain " + std::to_string(chain) +
                             ": log-posterior is not finite at initialization after 100 jittered attempts");
  }

  sampler.set_step_size(config.initial_step_size);
  sampler.init_step_size();
  StepSizeAdaptation step_adapt(config.target_accept);
  step_adapt.restart(sampler.step_size());
  WarmupSchedule schedule(config.warmup_iterations, config.init_buffer, config.term_buffer, config.base_window);
  WelfordVariance welford(posterior.dimension());

  std::vector<double> q_work(posterior.dimension());
  auto interweave = [&]() {
    if (config.interweave_steps <= 0) return;
    const auto pos = sampler.position();
    std::copy(pos.begin(), pos.end(), q_work.begin());
    if (posterior.interweave(q_work, rng, config.interweave_steps) > 0) sampler.set_position(q_work);
  };

  for (int i = 0; i < config.warmup_iterations; ++i) {
    const auto stats = sampler.transition();
    interweave();
    sampler.set_step_size(step_adapt.learn(stats.accept_stat));
    if (schedule.in_window(i)) welford.add(sampler.position());
    if (schedule.window_end(i)) {
      sampler.set_inverse_metric(welford.regularized_variance());
      welford.reset();
      sampler.init_step_size();
      step_adapt.restart(sampler.step_size());
    }
    if (progress) progress(chain, i, true);
  }
  if (config.warmup_iterations > 0) sampler.set_step_size(step_adapt.final_step_size());

  const auto& layout = posterior.layout();
  const std::size_t n_pop = layout.population_size();
  ChainOutput out;
  out.draws.resize(static_cast<std::size_t>(config.sampling_iterations) * n_pop);
  out.log_density.resize(static_cast<std::size_t>(config.sampling_iterations));
  double accept_sum = 0.0;
  double depth_sum = 0.0;
  for (int i = 0; i < config.sampling_iterations; ++i) {
    const auto stats = sampler.transition();
    interweave();
    accept_sum += stats.accept_stat;
    depth_sum += stats.treedepth;
    out.stats.leapfrogs += stats.leapfrogs;
    if (stats.divergent) ++out.sampling_divergences;
    if (stats.treedepth >= config.max_treedepth) ++out.stats.treedepth_saturations;
    const auto q = sampler.position();
    posterior.constrain_population(q, std::span<double>(out.draws).subspan(static_cast<std::size_t>(i) * n_pop, n_pop));
    out.log_density[static_cast<std::size_t>(i)] = sampler.log_density();
    if (config.latent_thin > 0 && i % config.latent_thin == 0) {
      out.latent_iterations.push_back(i);
      out.latent.push_back(posterior.constrain(q).latent);
    }
    if (progress) progress(chain, i, false);
  }
  const double n_samp = std::max(1, config.sampling_iterations);
  out.stats.step_size = sampler.step_size();
  out.stats.divergences = out.sampling_divergences;
  out.stats.mean_accept_stat = accept_sum / n_samp;
  out.stats.mean_treedepth = depth_sum / n_samp;
  const auto metric = sampler.inverse_metric();
  out.stats.inverse_metric_population.assign(metric.begin(), metric.begin() + static_cast<std::ptrdiff_t>(n_pop));
  return out;
}

double stable_mean(std::span<const double> x) {
  const double origin = x.front();
  double s = 0.0;
  for (double v : x) s += v - origin;
  return origin + s / static_cast<double>(x.size());
}

}  // namespace

void validate(const SamplerConfig& c) {
  if (c.chains < 1) throw std::invalid_argument("chains must be at least 1");
  if (c.warmup_iterations < 0) throw std::invalid_argument("warmup iterations must be non-negative");
  if (c.sampling_iterations < 1) throw std::invalid_argument("sampling iterations must be at least 1");
  if (!(c.target_accept > 0.0 && c.target_accept < 1.0)) throw std::invalid_argument("target acceptance must lie in (0, 1)");
  if (c.max_treedepth < 1) throw std::invalid_argument("max treedepth must be at least 1");
  if (!(c.initial_step_size > 0.0)) throw std::invalid_argument("initial step size must be positive");
  if (c.interweave_steps < 0) throw std::invalid_argument("interweave steps must be non-negative");
  if (c.latent_thin < 0) throw std::invalid_argument("latent thinning must be non-negative");
  if (c.threads < 0) throw std::invalid_argument("threads must be non-negative");
}

std::size_t PosteriorSamples::find(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? npos : static_cast<std::size_t>(it - names.begin());
}

std::vector<std::vector<double>> PosteriorSamples::parameter(std::size_t index) const {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(chains));
  for (int c = 0; c < chains; ++c) {
    auto& v = out[static_cast<std::size_t>(c)];
    v.reserve(static_cast<std::size_t>(iterations));
    for (int i = 0; i < iterations; ++i) v.push_back(at(c, i, index));
  }
  return out;
}

std::vector<double> PosteriorSamples::pooled(std::size_t index) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(chains) * static_cast<std::size_t>(iterations));
  for (int c = 0; c < chains; ++c) {
    for (int i = 0; i < iterations; ++i) out.push_back(at(c, i, index));
  }
  return out;
}

bool ChainDiagnostics::converged(double threshold) const {
  return std::all_of(parameters.begin(), parameters.end(), [&](const ParameterDiagnostics& p) {
    return std::isfinite(p.rhat) && p.rhat < threshold;
  });
}

std::vector<double> initialize(const NetworkDataset& dataset, const ModelConfig& model_config, Rng& rng) {
  SrmPosterior posterior(dataset, model_config);

  double successes = 0.0, trials = 0.0;
  for (const auto& o : dataset.observations()) {
    successes += static_cast<double>(o.successes);
    trials += static_cast<double>(o.trials);
  }
  const double rate = successes / trials;
  double alpha = std::log(rate) - std::log1p(-rate);
  if (std::isnan(alpha)) alpha = 0.0;

  ModelState start;
  start.fixed.alpha = std::clamp(alpha, -4.0, 4.0);
  start.components.sigma_a = start.components.sigma_b = 0.5;
  start.components.sigma_u = start.components.sigma_v = 0.5;
  start.components.sigma_d = model_config.overdispersion_enabled ? 0.5 : 0.0;
  start.latent = LatentEffects::zeros(dataset, model_config.overdispersion_enabled);
  auto q = posterior.unconstrain(start);

  for (auto& x : q) x += rng.uniform(-0.1, 0.1);
  return q;
}

std::vector<ParameterDiagnostics> parameter_diagnostics(const PosteriorSamples& samples) {
  std::vector<ParameterDiagnostics> out;
  for (std::size_t p = 0; p < samples.parameter_count(); ++p) {
    ParameterDiagnostics d;
    d.name = samples.names[p];
    const auto chains = samples.parameter(p);
    try {
      d.rhat = split_rhat(chains);
      d.ess = effective_sample_size(chains);
      d.degenerate = std::isnan(d.rhat) || std::isnan(d.ess);
    } catch (const InsufficientDraws&) {
      d.rhat = kNaN;
      d.ess = kNaN;
      d.insufficient = true;
    }
    out.push_back(d);
  }
  return out;
}

FitResult fit(const NetworkDataset& dataset, const ModelConfig& model_config, const SamplerConfig& sampler_config,
              const ProgressCallback& progress) {
  validate(sampler_config);
  const SrmPosterior posterior(dataset, model_config);

  FitResult result;
  auto& diag = result.diagnostics;

  {
    std::vector<char> sends(dataset.node_count(), 0), receives(dataset.node_count(), 0);
    std::vector<int> directions(dataset.dyad_count(), 0);
    for (const auto& o : dataset.observations()) {
      sends[o.ego] = 1;
      receives[o.alter] = 1;
      ++directions[o.dyad];
    }
    std::size_t both_roles = 0;
    for (std::size_t i = 0; i < dataset.node_count(); ++i) both_roles += (sends[i] && receives[i]) ? 1 : 0;
    if (both_roles < 2) {
      diag.warnings.push_back("fewer than two nodes are observed as both sender and receiver; "
                              "sender/receiver variances are weakly identified");
    }
    if (std::none_of(directions.begin(), directions.end(), [](int d) { return d == 2; })) {
      diag.warnings.push_back("no dyad is observed in both directions; sigma_u cannot be separated from "
                              "sigma_d and the residual");
    }
  }

  const int n_chains = sampler_config.chains;
  std::vector<ChainOutput> outputs(static_cast<std::size_t>(n_chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_chains));
  std::atomic<int> next_chain{0};
  std::mutex progress_mutex;
  const ProgressCallback guarded = progress ? ProgressCallback([&](int c, int i, bool w) {
    const std::lock_guard lock(progress_mutex);
    progress(c, i, w);
  })
                                            : ProgressCallback{};
  auto worker = [&]() {
    for (int c = next_chain++; c < n_chains; c = next_chain++) {
      try {
        outputs[static_cast<std::size_t>(c)] = run_chain(posterior, sampler_config, c, guarded);
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    }
  };
  int n_threads = sampler_config.threads > 0 ? sampler_config.threads
                                             : static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
  n_threads = std::min(n_threads, n_chains);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  auto& s = result.samples;
  s.names = population_parameter_names(model_config.overdispersion_enabled);
  s.chains = n_chains;
  s.iterations = sampler_config.sampling_iterations;
  s.dataset_fingerprint = dataset.fingerprint();
  s.sampler = sampler_config;
  s.model = model_config;
  s.covariate_transform = dataset.transform();
  const auto summary = summarize(dataset);
  s.covariate_min = summary.covariate_min;
  s.covariate_max = summary.covariate_max;
  int divergences = 0;
  for (int c = 0; c < n_chains; ++c) {
    auto& out = outputs[static_cast<std::size_t>(c)];
    s.draws.insert(s.draws.end(), out.draws.begin(), out.draws.end());
    s.log_density.insert(s.log_density.end(), out.log_density.begin(), out.log_density.end());
    for (std::size_t k = 0; k < out.latent.size(); ++k) {
      s.latent.chain.push_back(c);
      s.latent.iteration.push_back(out.latent_iterations[k]);
      s.latent.effects.push_back(std::move(out.latent[k]));
    }
    divergences += out.sampling_divergences;
    diag.chains.push_back(out.stats);
  }

  diag.total_divergences = divergences;
  diag.divergence_rate =
      static_cast<double>(divergences) / (static_cast<double>(n_chains) * sampler_config.sampling_iterations);
  if (diag.divergence_rate > 0.01) {
    diag.warnings.push_back(std::to_string(divergences) + " divergent transitions after warmup (" +
                            std::to_string(100.0 * diag.divergence_rate) + "%); posterior estimates may be biased");
  }
  diag.parameters = parameter_diagnostics(s);
  for (const auto& p : diag.parameters) {
    if (p.insufficient) {
      diag.warnings.push_back(p.name + ": too few draws for R-hat / ESS");
    } else if (!(p.rhat < 1.05)) {
      diag.warnings.push_back(p.name + ": R-hat " + std::to_string(p.rhat) + " is not below 1.05");
    }
  }
  return result;
}

SummaryRow summarize_draws(const std::string& name, std::vector<double> draws) {
  if (draws.empty()) throw std::invalid_argument("cannot summarize an empty sample");
  SummaryRow row;
  row.name = name;
  row.mean = stable_mean(draws);
  double ss = 0.0;
  for (double v : draws) ss += (v - row.mean) * (v - row.mean);
  row.sd = draws.size() > 1 ? std::sqrt(ss / static_cast<double>(draws.size() - 1)) : 0.0;
  std::sort(draws.begin(), draws.end());
  row.q05 = quantile_sorted(draws, 0.05);
  row.q50 = quantile_sorted(draws, 0.50);
  row.q95 = quantile_sorted(draws, 0.95);
  row.rhat = kNaN;
  row.ess = kNaN;
  return row;
}

std::vector<SummaryRow> posterior_summary(const PosteriorSamples& samples) {
  if (samples.draws.empty()) throw std::invalid_argument("posterior has no draws");
  const auto diagnostics = parameter_diagnostics(samples);
  std::vector<SummaryRow> rows;
  for (std::size_t p = 0; p < samples.parameter_count(); ++p) {
    auto row = summarize_draws(samples.names[p], samples.pooled(p));
    row.rhat = diagnostics[p].rhat;
    row.ess = diagnostics[p].ess;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace srm
