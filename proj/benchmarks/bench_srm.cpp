#include <benchmark/benchmark.h>

#include <vector>

#include "srm/inference.hpp"
#include "srm/model.hpp"
#include "srm/nuts.hpp"
#include "srm/reciprocity.hpp"
#include "srm/simulator.hpp"

using namespace srm;

namespace {

NetworkDataset network(std::size_t nodes) {
  SimulationSpec spec;
  spec.n_nodes = nodes;
  spec.trials_per_cell = 20;
  spec.components.sigma_v = 0.5;
  spec.components.sigma_d = 0.3;
  spec.seed = 1;
  return simulate(spec).dataset;
}

class Target : public LogDensity {
 public:
  explicit Target(const SrmPosterior& p) : p_(p) {}
  std::size_t dimension() const override { return p_.dimension(); }
  double log_density_and_gradient(std::span<const double> q, std::span<double> g) const override {
    return p_.log_density_and_gradient(q, g);
  }

 private:
  const SrmPosterior& p_;
};

void BM_LogDensityGradient(benchmark::State& state) {
  const auto ds = network(static_cast<std::size_t>(state.range(0)));
  const SrmPosterior post(ds, {});
  Rng rng(2);
  const auto q = initialize(ds, {}, rng);
  std::vector<double> g(q.size());
  for (auto _ : state) benchmark::DoNotOptimize(post.log_density_and_gradient(q, g));
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(ds.observation_count()));
}
BENCHMARK(BM_LogDensityGradient)->Arg(10)->Arg(40)->Arg(100);

void BM_NutsTransition(benchmark::State& state) {
  const auto ds = network(static_cast<std::size_t>(state.range(0)));
  const SrmPosterior post(ds, {});
  const Target target(post);
  Rng rng(3);
  NutsSampler sampler(target, rng);
  sampler.set_position(initialize(ds, {}, rng));
  sampler.set_step_size(0.1);
  for (auto _ : state) benchmark::DoNotOptimize(sampler.transition());
}
BENCHMARK(BM_NutsTransition)->Arg(10)->Arg(40);

void BM_ReciprocityCurve(benchmark::State& state) {
  PosteriorSamples s;
  s.names = population_parameter_names(true);
  s.chains = 4;
  s.iterations = 1000;
  Rng rng(4);
  for (int k = 0; k < s.chains * s.iterations; ++k) {
    for (double v : {-1.0, 0.5, 0.8, 0.6, 0.3}) s.draws.push_back(v);
    s.draws.push_back(rng.uniform(0.5, 1.5));
    s.draws.push_back(rng.uniform(0.2, 0.8));
    s.draws.push_back(rng.uniform(-0.5, 0.5));
    s.draws.push_back(rng.uniform(0.1, 0.5));
  }
  const auto grid = GridSpec::linspace(-1.0, 1.0);
  const ModelConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(reciprocity_curve(s, grid, config));
}
BENCHMARK(BM_ReciprocityCurve);

}  // namespace

BENCHMARK_MAIN();
