#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "doctest.h"
#include "srm/model.hpp"
#include "srm/rng.hpp"

using namespace srm;

namespace {

// Random complete network on n nodes with a symmetric covariate.
NetworkDataset random_network(std::size_t n, Rng& rng, std::int64_t max_trials = 12) {
  std::vector<double> x(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) x[i * n + j] = x[j * n + i] = rng.uniform(-1.5, 1.5);
  }
  std::vector<RawObservation> rows;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto trials = static_cast<std::int64_t>(1 + rng.below(static_cast<std::uint64_t>(max_trials)));
      const auto y = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(trials + 1)));
      rows.push_back({std::to_string(i), std::to_string(j), y, trials, x[i * n + j], 0});
    }
  }
  return NetworkDataset::build(rows);
}

std::vector<double> random_point(const SrmPosterior& post, Rng& rng) {
  std::vector<double> q(post.dimension());
  for (auto& v : q) v = rng.uniform(-1.2, 1.2);
  return q;
}

// Plain-arithmetic binomial log pmf, no shared helpers.
double binomial_logpmf_oracle(std::int64_t y, std::int64_t n, double eta) {
  double log_choose = 0.0;
  for (std::int64_t k = 1; k <= y; ++k) log_choose += std::log(static_cast<double>(n - y + k) / static_cast<double>(k));
  const double p = 1.0 / (1.0 + std::exp(-eta));
  return log_choose + static_cast<double>(y) * std::log(p) + static_cast<double>(n - y) * std::log(1.0 - p);
}

double max_rel_gradient_error(const SrmPosterior& post, std::vector<double> q) {
  std::vector<double> g(q.size());
  post.log_density_and_gradient(q, g);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double keep = q[k];
    q[k] = keep + h;
    const double up = post.log_density(q);
    q[k] = keep - h;
    const double down = post.log_density(q);
    q[k] = keep;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(g[k] - fd) / std::max({std::abs(g[k]), std::abs(fd), 1.0}));
  }
  return worst;
}

}  // namespace

TEST_CASE("linear predictor") {
  const auto ds = NetworkDataset::build({{"0", "1", 1, 2, 1.0, 0}, {"1", "0", 1, 2, 1.0, 0}});
  auto latent = LatentEffects::zeros(ds, true);
  CHECK(linear_predictor(ds.observations()[0], 0, {0.0, 0.0}, latent) == 0.0);

  latent.sender[0] = 0.5;
  latent.receiver[1] = -0.5;
  latent.dyad_intercept[0] = 0.25;
  latent.dyad_slope[0] = 0.25;
  CHECK(linear_predictor(ds.observations()[0], 0, {1.0, 2.0}, latent) == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("zero covariate removes beta and slope") {
  Rng rng(3);
  const auto ds = NetworkDataset::build({{"0", "1", 1, 2, 0.0, 0}, {"1", "0", 1, 2, 0.0, 0}});
  for (int rep = 0; rep < 200; ++rep) {
    auto latent = LatentEffects::zeros(ds, true);
    latent.sender = {rng.normal(), rng.normal()};
    latent.receiver = {rng.normal(), rng.normal()};
    latent.dyad_intercept = {rng.normal()};
    latent.dyad_slope = {rng.normal()};
    latent.overdispersion = {rng.normal(), rng.normal()};
    const double eta = linear_predictor(ds.observations()[1], 1, {0.3, rng.normal() * 10.0}, latent);
    latent.dyad_slope[0] = rng.normal() * 10.0;
    CHECK(linear_predictor(ds.observations()[1], 1, {0.3, -4.0}, latent) == eta);
  }
}

TEST_CASE("inv_logit") {
  CHECK(inv_logit(0.0) == 0.5);
  CHECK(inv_logit(5.0) == doctest::Approx(0.9933071490757151444).epsilon(1e-15));
  for (double eta : {0.1, 1.7, 12.0, 35.0}) CHECK(inv_logit(-eta) == doctest::Approx(1.0 - inv_logit(eta)));
  for (double eta : {-700.0, 700.0, -1e4, 1e4}) {
    const double p = inv_logit(eta);
    CHECK(std::isfinite(p));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  CHECK(inv_logit(-700.0) > 0.0);
  CHECK(log1p_exp(800.0) == 800.0);
  CHECK(log1p_exp(-800.0) == 0.0);
}

TEST_CASE("log likelihood values") {
  const auto one = NetworkDataset::build({{"0", "1", 1, 1, 0.0, 0}});
  CHECK(log_likelihood(one, {0.0, 0.0}, LatentEffects::zeros(one, true)) == doctest::Approx(std::log(0.5)));

  const auto ten = NetworkDataset::build({{"0", "1", 3, 10, 0.0, 0}});
  CHECK(log_likelihood(ten, {0.7, 0.0}, LatentEffects::zeros(ten, false)) ==
        doctest::Approx(-4.144368746072532938).epsilon(1e-13));
}

TEST_CASE("saturated cell likelihood increases with eta") {
  const auto ds = NetworkDataset::build({{"0", "1", 7, 7, 0.0, 0}});
  const auto latent = LatentEffects::zeros(ds, false);
  double prev = -INFINITY;
  for (double eta = -40.0; eta <= 700.0; eta += 3.7) {
    const double ll = log_likelihood(ds, {eta, 0.0}, latent);
    CHECK(std::isfinite(ll));
    CHECK(ll >= prev);
    prev = ll;
  }
}

TEST_CASE("log likelihood matches brute force summation") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ds = random_network(5, rng);
    auto latent = LatentEffects::zeros(ds, true);
    for (auto* v : {&latent.sender, &latent.receiver, &latent.dyad_intercept, &latent.dyad_slope,
                    &latent.overdispersion}) {
      for (auto& e : *v) e = rng.normal();
    }
    const FixedEffects fx{rng.normal(), rng.normal()};
    double oracle = 0.0;
    std::size_t m = 0;
    for (const auto& o : ds.observations()) {
      const double eta = fx.alpha + latent.sender[o.ego] + latent.receiver[o.alter] + fx.beta * o.covariate +
                         latent.dyad_intercept[o.dyad] + latent.dyad_slope[o.dyad] * o.covariate +
                         latent.overdispersion[m++];
      oracle += binomial_logpmf_oracle(o.successes, o.trials, eta);
    }
    const double ll = log_likelihood(ds, fx, latent);
    CHECK(std::abs(ll - oracle) <= 1e-10 * std::abs(oracle));
  }
}

TEST_CASE("prior at zero latents") {
  const auto ds = NetworkDataset::build({{"0", "1", 1, 2, 0.0, 0}, {"1", "2", 1, 2, 0.0, 0}});
  const auto latent = LatentEffects::zeros(ds, true);
  const VarianceComponents c{0.8, 1.3, 0.4, 0.9, 0.6, -0.3, 0.5};
  const auto t = log_prior_terms({0.0, 0.0}, c, latent, ModelConfig{});
  const double pi = std::numbers::pi;
  const double per_node = -std::log(2.0 * pi) - std::log(0.8 * 1.3 * std::sqrt(1.0 - 0.16));
  const double per_dyad = -std::log(2.0 * pi) - std::log(0.9 * 0.6 * std::sqrt(1.0 - 0.09));
  CHECK(t.sender_receiver == doctest::Approx(3.0 * per_node).epsilon(1e-14));
  CHECK(t.dyad == doctest::Approx(2.0 * per_dyad).epsilon(1e-14));
}

TEST_CASE("uncorrelated prior factorizes") {
  Rng rng(5);
  const auto ds = NetworkDataset::build({{"0", "1", 1, 2, 0.0, 0}, {"1", "2", 1, 2, 0.0, 0}});
  auto latent = LatentEffects::zeros(ds, true);
  for (auto& v : latent.sender) v = rng.normal();
  for (auto& v : latent.receiver) v = rng.normal();
  const VarianceComponents c{0.7, 1.9, 0.0, 1.0, 1.0, 0.0, 1.0};
  auto normal = [](double x, double s) {
    return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(s) - 0.5 * x * x / (s * s);
  };
  double expected = 0.0;
  for (std::size_t i = 0; i < 3; ++i) expected += normal(latent.sender[i], 0.7) + normal(latent.receiver[i], 1.9);
  CHECK(log_prior_terms({}, c, latent, ModelConfig{}).sender_receiver == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("doubling sigma_d at zero effects lowers the prior by M log 2") {
  Rng rng(8);
  const auto ds = random_network(4, rng);
  const auto latent = LatentEffects::zeros(ds, true);
  VarianceComponents c{1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.35};
  const double before = log_prior_terms({}, c, latent, ModelConfig{}).overdispersion;
  c.sigma_d *= 2.0;
  const double after = log_prior_terms({}, c, latent, ModelConfig{}).overdispersion;
  CHECK(before - after == doctest::Approx(12.0 * std::log(2.0)).epsilon(1e-13));
}

TEST_CASE("scaling latents away from zero lowers the prior") {
  Rng rng(21);
  const auto ds = random_network(5, rng);
  const VarianceComponents c{0.8, 0.6, 0.3, 1.0, 0.5, 0.4, 0.3};
  for (int rep = 0; rep < 50; ++rep) {
    auto latent = LatentEffects::zeros(ds, true);
    for (auto* v : {&latent.sender, &latent.receiver, &latent.dyad_intercept, &latent.dyad_slope,
                    &latent.overdispersion}) {
      for (auto& e : *v) e = rng.normal();
    }
    const double t = 1.0 + rng.uniform() * 2.0;
    auto scaled = latent;
    for (auto* v : {&scaled.sender, &scaled.receiver, &scaled.dyad_intercept, &scaled.dyad_slope,
                    &scaled.overdispersion}) {
      for (auto& e : *v) e *= t;
    }
    CHECK(log_prior({}, c, scaled, ModelConfig{}) < log_prior({}, c, latent, ModelConfig{}));
  }
}

TEST_CASE("shifting alpha into the sender effects keeps the likelihood") {
  Rng rng(2);
  const auto ds = random_network(6, rng);
  auto latent = LatentEffects::zeros(ds, true);
  for (auto& v : latent.sender) v = rng.normal();
  for (auto& v : latent.overdispersion) v = rng.normal();
  const double base = log_likelihood(ds, {-0.4, 0.3}, latent);
  for (auto& v : latent.sender) v -= 0.75;
  CHECK(log_likelihood(ds, {-0.4 + 0.75, 0.3}, latent) == doctest::Approx(base).epsilon(1e-13));
}

TEST_CASE("gradients match finite differences") {
  Rng rng(17);
  for (auto param : {Parameterization::non_centered, Parameterization::centered, Parameterization::mixed}) {
    for (bool od : {true, false}) {
      for (int rep = 0; rep < 5; ++rep) {
        const auto ds = random_network(6, rng);
        ModelConfig cfg;
        cfg.parameterization = param;
        cfg.overdispersion_enabled = od;
        const SrmPosterior post(ds, cfg);
        CHECK(max_rel_gradient_error(post, random_point(post, rng)) < 1e-6);
      }
    }
  }
}

TEST_CASE("beta gradient is the covariate-weighted residual sum") {
  Rng rng(4);
  const auto ds = random_network(5, rng);
  ModelConfig cfg;
  cfg.parameterization = Parameterization::centered;
  const SrmPosterior post(ds, cfg);
  const auto q = random_point(post, rng);
  const auto state = post.constrain(q);
  const auto r = log_posterior_and_gradient(ds, state.fixed, state.components, state.latent, cfg);
  double expected = -state.fixed.beta / 25.0;
  std::size_t m = 0;
  for (const auto& o : ds.observations()) {
    const double p = inv_logit(linear_predictor(o, m++, state.fixed, state.latent));
    expected += o.covariate * (static_cast<double>(o.successes) - static_cast<double>(o.trials) * p);
  }
  CHECK(r.gradient[ParameterLayout::beta] == doctest::Approx(expected).epsilon(1e-10));
  CHECK(r.value == doctest::Approx(post.log_density(q)).epsilon(1e-13));
}

TEST_CASE("likelihood gradient vanishes when y equals n p") {
  // Every cell at p = 1/2 with zero latents; alpha = 0 also zeroes the prior slope.
  std::vector<RawObservation> rows;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i != j) rows.push_back({std::to_string(i), std::to_string(j), 5, 10, 0.3 * (i + j), 0});
    }
  }
  const auto ds = NetworkDataset::build(rows);
  ModelConfig cfg;
  cfg.parameterization = Parameterization::centered;
  const SrmPosterior post(ds, cfg);
  std::vector<double> q(post.dimension(), 0.0);
  std::vector<double> g(q.size());
  post.log_density_and_gradient(q, g);
  CHECK(g[ParameterLayout::alpha] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g[ParameterLayout::beta] == doctest::Approx(0.0).epsilon(1e-12));
  for (std::size_t k = post.layout().sender(); k < q.size(); ++k) CHECK(g[k] == doctest::Approx(0.0));
}

TEST_CASE("non-centered density is the centered density times the Jacobian") {
  Rng rng(9);
  const auto ds = random_network(5, rng);
  ModelConfig c_cfg;
  c_cfg.parameterization = Parameterization::centered;
  ModelConfig nc_cfg;
  nc_cfg.parameterization = Parameterization::non_centered;
  const SrmPosterior centered(ds, c_cfg), non_centered(ds, nc_cfg);
  for (int rep = 0; rep < 10; ++rep) {
    const auto z = random_point(non_centered, rng);
    const auto state = non_centered.constrain(z);
    const auto q = centered.unconstrain(state);
    const auto& c = state.components;
    const double n = static_cast<double>(ds.node_count());
    const double d = static_cast<double>(ds.dyad_count());
    const double m = static_cast<double>(ds.observation_count());
    const double log_jac = n * std::log(c.sigma_a * c.sigma_b * std::sqrt(1.0 - c.rho_ab * c.rho_ab)) +
                           d * std::log(c.sigma_u * c.sigma_v * std::sqrt(1.0 - c.rho_uv * c.rho_uv)) +
                           m * std::log(c.sigma_d);
    CHECK(non_centered.log_density(z) == doctest::Approx(centered.log_density(q) + log_jac).epsilon(1e-11));
  }
}

TEST_CASE("log posterior is likelihood plus prior plus transform terms") {
  Rng rng(13);
  const auto ds = random_network(4, rng);
  ModelConfig cfg;
  cfg.parameterization = Parameterization::centered;
  const SrmPosterior post(ds, cfg);
  const auto q = random_point(post, rng);
  const auto s = post.constrain(q);
  const auto& c = s.components;
  const double jac = std::log(c.sigma_a) + std::log(c.sigma_b) + std::log(c.sigma_u) + std::log(c.sigma_v) +
                     std::log(c.sigma_d) + std::log(1.0 - c.rho_ab * c.rho_ab) + std::log(1.0 - c.rho_uv * c.rho_uv);
  const double expected = log_likelihood(ds, s.fixed, s.latent) + log_prior(s.fixed, c, s.latent, cfg) + jac;
  CHECK(post.log_density(q) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("disabling overdispersion equals the model with d fixed at zero") {
  Rng rng(6);
  const auto ds = random_network(5, rng);
  auto with_d = LatentEffects::zeros(ds, true);
  auto without = LatentEffects::zeros(ds, false);
  for (std::size_t i = 0; i < ds.node_count(); ++i) without.sender[i] = with_d.sender[i] = rng.normal();
  CHECK(log_likelihood(ds, {0.2, -0.1}, with_d) == log_likelihood(ds, {0.2, -0.1}, without));
  ModelConfig off;
  off.overdispersion_enabled = false;
  CHECK(SrmPosterior(ds, off).dimension() == SrmPosterior(ds, ModelConfig{}).dimension() - 1 - ds.observation_count());
  CHECK(population_parameter_names(false).size() == 8);
  CHECK(population_parameter_names(true).back() == "sigma_d");
}

TEST_CASE("log likelihood is invariant to relabeling") {
  const auto a = NetworkDataset::build({{"x", "y", 2, 5, 0.5, 0}, {"y", "x", 1, 5, 0.5, 0}, {"y", "z", 4, 5, -1.0, 0}});
  const auto b = NetworkDataset::build({{"q", "p", 2, 5, 0.5, 0}, {"p", "q", 1, 5, 0.5, 0}, {"p", "a", 4, 5, -1.0, 0}});
  const SrmPosterior pa(a, ModelConfig{}), pb(b, ModelConfig{});
  std::vector<double> q(pa.dimension(), 0.1);
  q[0] = -0.3;
  q[1] = 0.8;
  CHECK(pa.log_density(q) == doctest::Approx(pb.log_density(q)).epsilon(1e-14));
}

TEST_CASE("component validation") {
  CHECK_THROWS_AS(validate(VarianceComponents{1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0}, true), std::invalid_argument);
  CHECK_THROWS_AS(validate(VarianceComponents{-1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0}, true), std::invalid_argument);
  CHECK_THROWS_AS(validate(VarianceComponents{1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0}, true), std::invalid_argument);
  CHECK_NOTHROW(validate(VarianceComponents{1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0}, false));
  CHECK(kLatentResidualVariance == doctest::Approx(3.289868133696452873).epsilon(1e-16));
}

TEST_CASE("mixed density is the centered density times the Jacobian") {
  Rng rng(19);
  const auto ds = random_network(6, rng);
  ModelConfig c_cfg;
  c_cfg.parameterization = Parameterization::centered;
  ModelConfig m_cfg;
  m_cfg.parameterization = Parameterization::mixed;
  const SrmPosterior centered(ds, c_cfg), mixed(ds, m_cfg);
  for (int rep = 0; rep < 10; ++rep) {
    const auto qm = random_point(mixed, rng);
    const auto state = mixed.constrain(qm);
    const auto qc = centered.unconstrain(state);
    const auto& c = state.components;
    // (s, r) -> (u, v) has Jacobian sigma_u sigma_v sqrt(1 - rho^2) / sqrt(V(x)) per dyad.
    double log_jac = static_cast<double>(ds.observation_count()) * std::log(c.sigma_d);
    std::vector<bool> seen(ds.dyad_count(), false);
    for (const auto& o : ds.observations()) {
      if (seen[o.dyad]) continue;
      seen[o.dyad] = true;
      const double x = o.covariate;
      const double var = c.sigma_u * c.sigma_u + 2.0 * c.cov_uv() * x + c.sigma_v * c.sigma_v * x * x;
      log_jac += std::log(c.sigma_u * c.sigma_v * std::sqrt(1.0 - c.rho_uv * c.rho_uv) / std::sqrt(var));
    }
    CHECK(mixed.log_density(qm) == doctest::Approx(centered.log_density(qc) + log_jac).epsilon(1e-11));
  }
}

TEST_CASE("constrain and unconstrain round trip") {
  Rng rng(23);
  const auto ds = random_network(5, rng);
  for (auto param : {Parameterization::centered, Parameterization::non_centered, Parameterization::mixed}) {
    ModelConfig cfg;
    cfg.parameterization = param;
    const SrmPosterior post(ds, cfg);
    const auto q = random_point(post, rng);
    const auto back = post.unconstrain(post.constrain(q));
    for (std::size_t k = 0; k < q.size(); ++k) CHECK(back[k] == doctest::Approx(q[k]).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("interweaving keeps effects and stays finite") {
  Rng rng(29);
  const auto ds = random_network(6, rng);
  ModelConfig cfg;
  cfg.parameterization = Parameterization::non_centered;
  const SrmPosterior post(ds, cfg);
  auto q = random_point(post, rng);
  const auto before = post.constrain(q);
  CHECK(post.interweave(q, rng, 50) > 0);
  const auto after = post.constrain(q);
  for (std::size_t i = 0; i < ds.node_count(); ++i) {
    CHECK(after.latent.sender[i] == doctest::Approx(before.latent.sender[i]).epsilon(1e-12));
    CHECK(after.latent.receiver[i] == doctest::Approx(before.latent.receiver[i]).epsilon(1e-12));
  }
  for (std::size_t m = 0; m < ds.observation_count(); ++m) {
    CHECK(after.latent.overdispersion[m] == doctest::Approx(before.latent.overdispersion[m]).epsilon(1e-12));
  }
  CHECK(log_likelihood(ds, after.fixed, after.latent) ==
        doctest::Approx(log_likelihood(ds, before.fixed, before.latent)).epsilon(1e-12));
  CHECK(std::isfinite(post.log_density(q)));
}

TEST_CASE("parameterization names") {
  for (auto p : {Parameterization::centered, Parameterization::non_centered, Parameterization::mixed}) {
    CHECK(parse_parameterization(to_string(p)) == p);
  }
  CHECK_THROWS_AS(parse_parameterization("sideways"), std::invalid_argument);
  CHECK(ModelConfig{}.parameterization == Parameterization::mixed);
}
