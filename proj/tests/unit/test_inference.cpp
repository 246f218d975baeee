#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "srm/inference.hpp"
#include "srm/simulator.hpp"

using namespace srm;

namespace {

NetworkDataset constant_rate(std::int64_t successes, std::int64_t trials) {
  std::vector<RawObservation> rows;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (i != j) rows.push_back({std::to_string(i), std::to_string(j), successes, trials, 0.1 * (i + j), 0});
    }
  }
  return NetworkDataset::build(rows);
}

SimulationSpec small_spec(std::uint64_t seed) {
  SimulationSpec spec;
  spec.n_nodes = 8;
  spec.trials_per_cell = 10;
  spec.fixed = {-0.5, 0.3};
  spec.components.sigma_v = 0.4;
  spec.components.sigma_d = 0.2;
  spec.seed = seed;
  return spec;
}

SamplerConfig quick(int warmup, int draws, int chains = 2) {
  SamplerConfig s;
  s.chains = chains;
  s.warmup_iterations = warmup;
  s.sampling_iterations = draws;
  s.seed = 4;
  return s;
}

double median(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  return quantile_sorted(x, 0.5);
}

}  // namespace

TEST_CASE("initialization") {
  const ModelConfig config;
  SUBCASE("pooled rate one half starts alpha at zero") {
    Rng rng(1);
    const auto q = initialize(constant_rate(5, 10), config, rng);
    CHECK(std::abs(q[ParameterLayout::alpha]) <= 0.1);
    CHECK(std::abs(q[ParameterLayout::log_sigma_a] - std::log(0.5)) <= 0.1);
    CHECK(std::abs(q[ParameterLayout::atanh_rho_uv]) <= 0.1);
  }
  SUBCASE("all successes clamp alpha at four") {
    Rng rng(2);
    const auto q = initialize(constant_rate(10, 10), config, rng);
    CHECK(std::abs(q[ParameterLayout::alpha] - 4.0) <= 0.1);
  }
  SUBCASE("chains differ only by jitter") {
    const auto ds = constant_rate(3, 10);
    for (auto form : {Parameterization::centered, Parameterization::non_centered, Parameterization::mixed}) {
      ModelConfig cfg;
      cfg.parameterization = form;
      SrmPosterior posterior(ds, cfg);
      ModelState base;
      base.fixed.alpha = std::log(0.3 / 0.7);
      base.components.sigma_a = base.components.sigma_b = base.components.sigma_u = base.components.sigma_v = 0.5;
      base.components.sigma_d = 0.5;
      base.latent = LatentEffects::zeros(ds, true);
      const auto centre = posterior.unconstrain(base);
      for (std::uint64_t chain = 0; chain < 4; ++chain) {
        auto rng = Rng::stream(9, chain);
        const auto q = initialize(ds, cfg, rng);
        REQUIRE(q.size() == centre.size());
        for (std::size_t k = 0; k < q.size(); ++k) CHECK(std::abs(q[k] - centre[k]) <= 0.1);
        const auto state = posterior.constrain(q);
        CHECK(std::abs(state.latent.sender[0]) < 0.3);
      }
    }
  }
}

TEST_CASE("sampler config validation") {
  SamplerConfig s;
  s.chains = 0;
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
  s = {};
  s.sampling_iterations = 0;
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
  s = {};
  s.target_accept = 1.0;
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
  s = {};
  s.interweave_steps = -1;
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
}

TEST_CASE("fit is deterministic and independent of thread count") {
  const auto ds = simulate(small_spec(1)).dataset;
  auto cfg = quick(100, 100);
  cfg.threads = 1;
  const auto a = fit(ds, {}, cfg);
  const auto b = fit(ds, {}, cfg);
  cfg.threads = 2;
  const auto c = fit(ds, {}, cfg);
  CHECK(a.samples.draws == b.samples.draws);
  CHECK(a.samples.draws == c.samples.draws);
  CHECK(a.samples.chains == 2);
  CHECK(a.samples.iterations == 100);
  CHECK(a.samples.draws.size() == 2 * 100 * 9);
  CHECK(a.samples.dataset_fingerprint == ds.fingerprint());
}

TEST_CASE("retained draws are finite and in range") {
  const auto ds = simulate(small_spec(2)).dataset;
  const auto r = fit(ds, {}, quick(150, 150));
  for (double v : r.samples.log_density) CHECK(std::isfinite(v));
  for (const auto& name : {"sigma_a", "sigma_b", "sigma_u", "sigma_v", "sigma_d"}) {
    for (double v : r.samples.pooled(r.samples.find(name))) CHECK(v > 0.0);
  }
  for (const auto& name : {"rho_ab", "rho_uv"}) {
    for (double v : r.samples.pooled(r.samples.find(name))) CHECK(std::abs(v) < 1.0);
  }
  CHECK(r.diagnostics.parameters.size() == 9);
  CHECK(r.diagnostics.chains.size() == 2);
  CHECK_FALSE(r.samples.latent.effects.empty());
}

TEST_CASE("no overdispersion drops sigma_d") {
  const auto ds = simulate(small_spec(3)).dataset;
  ModelConfig model;
  model.overdispersion_enabled = false;
  const auto r = fit(ds, model, quick(50, 50, 1));
  CHECK(r.samples.names.size() == 8);
  CHECK(r.samples.find("sigma_d") == PosteriorSamples::npos);
}

TEST_CASE("zero-variance truth pulls every sd below its prior median") {
  SimulationSpec spec;
  spec.n_nodes = 12;
  spec.trials_per_cell = 20;
  spec.components.sigma_a = spec.components.sigma_b = spec.components.sigma_u = 0.0;
  spec.components.sigma_v = spec.components.sigma_d = 0.0;
  spec.seed = 8;
  const auto ds = simulate(spec).dataset;
  const auto r = fit(ds, {}, quick(300, 300));
  const double prior_median = 2.0 * 0.6744897501960817;
  for (const auto& name : {"sigma_a", "sigma_b", "sigma_u", "sigma_v", "sigma_d"}) {
    CHECK(median(r.samples.pooled(r.samples.find(name))) < prior_median);
  }
}

TEST_CASE("more trials shrink the posterior sd of alpha") {
  double sd_small = 0.0, sd_large = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (std::int64_t trials : {5, 20}) {
      SimulationSpec spec;
      spec.n_nodes = 6;
      spec.trials_per_cell = trials;
      spec.components.sigma_a = spec.components.sigma_b = spec.components.sigma_u = 0.2;
      spec.components.sigma_v = spec.components.sigma_d = 0.1;
      spec.seed = seed;
      auto cfg = quick(150, 200, 1);
      cfg.seed = seed;
      const auto r = fit(simulate(spec).dataset, {}, cfg);
      const double sd = summarize_draws("alpha", r.samples.pooled(r.samples.find("alpha"))).sd;
      (trials == 5 ? sd_small : sd_large) += sd / 10.0;
    }
  }
  CHECK(sd_large < sd_small);
}

TEST_CASE("summaries of known draws") {
  const auto row = summarize_draws("x", {1.0, 2.0, 3.0});
  CHECK(row.mean == 2.0);
  CHECK(row.q50 == 2.0);
  CHECK(row.sd == doctest::Approx(1.0));
  CHECK(row.q05 == doctest::Approx(1.1));
  CHECK(row.q95 == doctest::Approx(2.9));
  const auto flat = summarize_draws("c", std::vector<double>(50, 4.0));
  CHECK(flat.sd == 0.0);
  CHECK(flat.q05 == 4.0);

  PosteriorSamples s;
  s.names = {"p", "k"};
  s.chains = 2;
  s.iterations = 10;
  Rng rng(6);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 10; ++i) {
      s.draws.push_back(rng.normal());
      s.draws.push_back(1.5);
    }
  }
  const auto table = posterior_summary(s);
  REQUIRE(table.size() == 2);
  CHECK(table[1].mean == 1.5);
  CHECK(table[1].sd == 0.0);
  CHECK(std::isnan(table[1].rhat));
  CHECK(std::isfinite(table[0].rhat));
  CHECK(table[0].ess > 0.0);
}
