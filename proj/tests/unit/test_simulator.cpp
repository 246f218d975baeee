#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "srm/model.hpp"
#include "srm/simulator.hpp"

using namespace srm;

namespace {

VarianceComponents zero_components() {
  VarianceComponents c;
  c.sigma_a = c.sigma_b = c.sigma_u = c.sigma_v = c.sigma_d = 0.0;
  c.rho_ab = c.rho_uv = 0.0;
  return c;
}

const DirectedObservation& cell(const NetworkDataset& ds, std::size_t ego, std::size_t alter) {
  for (const auto& o : ds.observations()) {
    if (o.ego == ego && o.alter == alter) return o;
  }
  throw std::out_of_range("no such cell");
}

std::string csv_of(const NetworkDataset& ds) {
  std::ostringstream out;
  write_csv(ds, out);
  return out.str();
}

}  // namespace

TEST_CASE("zero effects give p = 0.5 everywhere") {
  SimulationSpec spec;
  spec.n_nodes = 8;
  spec.components = zero_components();
  const auto sim = simulate(spec);
  const auto& ds = sim.dataset;
  CHECK(ds.observation_count() == 56);
  for (std::size_t m = 0; m < ds.observation_count(); ++m) {
    CHECK(inv_logit(linear_predictor(ds.observations()[m], m, spec.fixed, sim.latent)) == 0.5);
  }
}

TEST_CASE("sender variance shows up in row-mean logits") {
  SimulationSpec spec;
  spec.n_nodes = 2000;
  spec.trials_per_cell = 1;
  spec.components = zero_components();
  spec.components.sigma_a = 1.0;
  spec.overdispersion_enabled = false;
  spec.missing_dyad_fraction = 0.99;
  spec.seed = 11;
  const auto sim = simulate(spec);
  const auto& ds = sim.dataset;
  std::vector<double> sum(ds.node_count(), 0.0);
  std::vector<int> count(ds.node_count(), 0);
  for (const auto& o : ds.observations()) {
    const auto& l = sim.latent;
    sum[o.ego] += spec.fixed.alpha + l.sender[o.ego] + l.receiver[o.alter] + l.dyad_intercept[o.dyad] +
                  l.dyad_slope[o.dyad] * o.covariate;
    ++count[o.ego];
  }
  std::vector<double> means;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    if (count[i] > 0) means.push_back(sum[i] / count[i]);
  }
  double m = 0.0;
  for (double v : means) m += v;
  m /= static_cast<double>(means.size());
  double ss = 0.0;
  for (double v : means) ss += (v - m) * (v - m);
  const double n = static_cast<double>(means.size());
  const double var = ss / (n - 1.0);
  CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / (n - 1.0)));
}

TEST_CASE("same seed gives identical data") {
  SimulationSpec spec;
  spec.n_nodes = 15;
  spec.components.sigma_v = 0.4;
  spec.components.sigma_d = 0.3;
  spec.missing_dyad_fraction = 0.25;
  spec.seed = 99;
  const auto x = simulate(spec);
  const auto y = simulate(spec);
  CHECK(csv_of(x.dataset) == csv_of(y.dataset));
  CHECK(x.dataset.fingerprint() == y.dataset.fingerprint());
  CHECK(x.latent.dyad_slope == y.latent.dyad_slope);
  CHECK(x.latent.overdispersion == y.latent.overdispersion);
  spec.seed = 100;
  CHECK(csv_of(simulate(spec).dataset) != csv_of(x.dataset));
}

TEST_CASE("missing fraction fixes the observed dyad count") {
  for (double f : {0.0, 0.3, 0.5, 0.9}) {
    SimulationSpec spec;
    spec.n_nodes = 20;
    spec.missing_dyad_fraction = f;
    const auto ds = simulate(spec).dataset;
    CHECK(ds.dyad_count() == static_cast<std::size_t>(std::llround((1.0 - f) * 190.0)));
    CHECK(ds.observation_count() == 2 * ds.dyad_count());
  }
}

TEST_CASE("generated data satisfy dataset invariants") {
  SimulationSpec spec;
  spec.n_nodes = 12;
  spec.components.sigma_v = 1.0;
  spec.covariate = CovariateGenerator::binary(0.3);
  const auto ds = simulate(spec).dataset;
  for (const auto& o : ds.observations()) {
    CHECK(o.successes >= 0);
    CHECK(o.successes <= o.trials);
    const auto& back = cell(ds, o.alter, o.ego);
    CHECK(back.covariate == o.covariate);
  }
}

TEST_CASE("invalid specs are rejected") {
  SimulationSpec spec;
  spec.n_nodes = 2;
  CHECK_THROWS_AS(simulate(spec), std::invalid_argument);
  spec.n_nodes = 5;
  spec.missing_dyad_fraction = 1.0;
  CHECK_THROWS_AS(simulate(spec), std::invalid_argument);
  spec.missing_dyad_fraction = 0.0;
  spec.components.rho_ab = 1.5;
  CHECK_THROWS_AS(simulate(spec), std::invalid_argument);
  spec.components.rho_ab = 0.0;
  spec.trials_per_cell = 0;
  CHECK_THROWS_AS(simulate(spec), std::invalid_argument);
}

TEST_CASE("sender/receiver correlation over ten thousand nodes") {
  SimulationSpec spec;
  spec.n_nodes = 10000;
  spec.trials_per_cell = 1;
  spec.components.rho_ab = 0.5;
  spec.overdispersion_enabled = false;
  const double total = 10000.0 * 9999.0 / 2.0;
  spec.missing_dyad_fraction = 1.0 - 50000.0 / total;
  spec.seed = 5;
  const auto sim = simulate(spec);
  CHECK(sim.dataset.dyad_count() == 50000);
  const auto m = empirical_moments(sim.dataset, sim.latent);
  CHECK(m.nodes > 9900);
  CHECK(std::abs(m.rho_ab - 0.5) < 0.03);
}

TEST_CASE("dyad slope sd within three standard errors") {
  SimulationSpec spec;
  spec.n_nodes = 100;
  spec.components.sigma_v = 0.5;
  spec.seed = 21;
  const auto sim = simulate(spec);
  const auto m = empirical_moments(sim.dataset, sim.latent);
  const double n = static_cast<double>(m.dyads);
  CHECK(m.dyads == 4950);
  CHECK(std::abs(m.sd_v - 0.5) < 3.0 * 0.5 / std::sqrt(2.0 * (n - 1.0)));
}

TEST_CASE("zero variance components have zero sample sd") {
  SimulationSpec spec;
  spec.n_nodes = 30;
  spec.components.sigma_b = 0.0;
  spec.components.sigma_v = 0.0;
  spec.components.sigma_d = 0.0;
  const auto sim = simulate(spec);
  const auto m = empirical_moments(sim.dataset, sim.latent);
  CHECK(m.sd_b == 0.0);
  CHECK(m.sd_v == 0.0);
  CHECK(m.sd_d == 0.0);
  CHECK(std::isnan(m.rho_ab));
  CHECK(m.sd_a > 0.0);
}

TEST_CASE("pooled rate converges to inv_logit(alpha)") {
  SimulationSpec spec;
  spec.n_nodes = 30;
  spec.trials_per_cell = 200;
  spec.components = zero_components();
  spec.fixed.alpha = 0.7;
  spec.seed = 3;
  const auto ds = simulate(spec).dataset;
  double y = 0.0, n = 0.0;
  for (const auto& o : ds.observations()) {
    y += static_cast<double>(o.successes);
    n += static_cast<double>(o.trials);
  }
  const double p = inv_logit(0.7);
  CHECK(std::abs(y / n - p) < 3.0 * std::sqrt(p * (1.0 - p) / n));
}

TEST_CASE("explicit covariate matrix and trials table are used") {
  SimulationSpec spec;
  spec.n_nodes = 3;
  spec.covariate = CovariateGenerator::explicit_matrix({0, 1, 2, 1, 0, 3, 2, 3, 0});
  spec.trials_table = {0, 4, 5, 4, 0, 6, 5, 6, 0};
  const auto ds = simulate(spec).dataset;
  const auto& o = cell(ds, 1, 2);
  CHECK(o.raw_covariate == 3.0);
  CHECK(o.trials == 6);
}
