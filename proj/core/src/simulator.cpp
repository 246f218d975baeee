#include "srm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <numeric>
#include <unordered_set>

#include "srm/rng.hpp"

namespace srm {

CovariateGenerator CovariateGenerator::constant(double c) {
  CovariateGenerator g;
  g.kind = Kind::constant;
  g.value = c;
  return g;
}

CovariateGenerator CovariateGenerator::uniform(double lo, double hi) {
  CovariateGenerator g;
  g.kind = Kind::uniform;
  g.lo = lo;
  g.hi = hi;
  return g;
}

CovariateGenerator CovariateGenerator::binary(double p) {
  CovariateGenerator g;
  g.kind = Kind::binary;
  g.p = p;
  return g;
}

CovariateGenerator CovariateGenerator::explicit_matrix(std::vector<double> m) {
  CovariateGenerator g;
  g.kind = Kind::matrix;
  g.matrix = std::move(m);
  return g;
}

namespace {

std::size_t kept_dyads(std::size_t n_nodes, double fraction) {
  const double total = static_cast<double>(n_nodes * (n_nodes - 1) / 2);
  return static_cast<std::size_t>(std::llround((1.0 - fraction) * total));
}

}  // namespace

void validate(const SimulationSpec& spec) {
  if (spec.n_nodes < 3) throw std::invalid_argument("n_nodes must be at least 3");
  if (spec.n_nodes > 100000) throw std::invalid_argument("n_nodes is unreasonably large");
  const std::size_t n = spec.n_nodes;
  if (spec.trials_table.empty()) {
    if (spec.trials_per_cell < 1) throw std::invalid_argument("trials_per_cell must be at least 1");
  } else {
    if (spec.trials_table.size() != n * n) throw std::invalid_argument("trials table must be n_nodes x n_nodes");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j && spec.trials_table[i * n + j] < 1) {
          throw std::invalid_argument("trials table entries off the diagonal must be at least 1");
        }
      }
    }
  }
  const auto& cov = spec.covariate;
  switch (cov.kind) {
    case CovariateGenerator::Kind::constant:
      if (!std::isfinite(cov.value)) throw std::invalid_argument("constant covariate must be finite");
      break;
    case CovariateGenerator::Kind::uniform:
      if (!(std::isfinite(cov.lo) && std::isfinite(cov.hi) && cov.lo <= cov.hi)) {
        throw std::invalid_argument("uniform covariate needs finite lo <= hi");
      }
      break;
    case CovariateGenerator::Kind::binary:
      if (!(cov.p >= 0.0 && cov.p <= 1.0)) throw std::invalid_argument("binary covariate p must lie in [0, 1]");
      break;
    case CovariateGenerator::Kind::matrix:
      if (cov.matrix.size() != n * n) throw std::invalid_argument("covariate matrix must be n_nodes x n_nodes");
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          if (!std::isfinite(cov.matrix[i * n + j]) || cov.matrix[i * n + j] != cov.matrix[j * n + i]) {
            throw std::invalid_argument("covariate matrix must be finite and symmetric");
          }
        }
      }
      break;
  }
  if (!std::isfinite(spec.fixed.alpha) || !std::isfinite(spec.fixed.beta)) {
    throw std::invalid_argument("fixed effects must be finite");
  }
  const auto& c = spec.components;
  auto nonneg = [](double s) { return std::isfinite(s) && s >= 0.0; };
  if (!nonneg(c.sigma_a) || !nonneg(c.sigma_b) || !nonneg(c.sigma_u) || !nonneg(c.sigma_v) || !nonneg(c.sigma_d)) {
    throw std::invalid_argument("simulation sds must be finite and non-negative");
  }
  if (!(c.rho_ab > -1.0 && c.rho_ab < 1.0) || !(c.rho_uv > -1.0 && c.rho_uv < 1.0)) {
    throw std::invalid_argument("simulation correlations must lie in (-1, 1)");
  }
  if (!(spec.missing_dyad_fraction >= 0.0 && spec.missing_dyad_fraction < 1.0)) {
    throw std::invalid_argument("missing dyad fraction must lie in [0, 1)");
  }
  if (kept_dyads(n, spec.missing_dyad_fraction) < 1) {
    throw std::invalid_argument("missing dyad fraction leaves no observed dyad");
  }
}

SimulationResult simulate(const SimulationSpec& spec) {
  validate(spec);
  const std::size_t n = spec.n_nodes;
  const auto& c = spec.components;
  Rng rng(spec.seed);

  std::vector<double> a(n), b(n);
  const double sab = std::sqrt(1.0 - c.rho_ab * c.rho_ab);
  for (std::size_t i = 0; i < n; ++i) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    a[i] = c.sigma_a * z1;
    b[i] = c.sigma_b * (c.rho_ab * z1 + sab * z2);
  }

  // Kept pair indices in lexicographic (i < j) order. Floyd's sampling
  // keeps memory proportional to the kept count.
  const std::size_t total = n * (n - 1) / 2;
  std::vector<std::size_t> kept;
  if (spec.missing_dyad_fraction > 0.0) {
    const std::size_t k = kept_dyads(n, spec.missing_dyad_fraction);
    std::unordered_set<std::size_t> chosen;
    chosen.reserve(k * 2);
    for (std::size_t j = total - k; j < total; ++j) {
      const auto t = static_cast<std::size_t>(rng.below(j + 1));
      if (!chosen.insert(t).second) chosen.insert(j);
    }
    kept.assign(chosen.begin(), chosen.end());
    std::sort(kept.begin(), kept.end());
  }

  struct Pair {
    std::size_t i, j;
    double x, u, v;
  };
  std::vector<Pair> pairs;
  pairs.reserve(kept.empty() ? total : kept.size());
  const double suv = std::sqrt(1.0 - c.rho_uv * c.rho_uv);
  const auto& cov = spec.covariate;
  auto trials_for = [&](std::size_t i, std::size_t j) {
    return spec.trials_table.empty() ? spec.trials_per_cell : spec.trials_table[i * n + j];
  };

  std::vector<RawObservation> rows;
  std::vector<double> d_draws;
  rows.reserve(pairs.capacity() * 2);
  std::size_t index = 0;
  auto next_kept = kept.begin();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++index) {
      if (!kept.empty()) {
        if (next_kept == kept.end() || *next_kept != index) continue;
        ++next_kept;
      }
      double x = 0.0;
      switch (cov.kind) {
        case CovariateGenerator::Kind::constant: x = cov.value; break;
        case CovariateGenerator::Kind::uniform: x = rng.uniform(cov.lo, cov.hi); break;
        case CovariateGenerator::Kind::binary: x = rng.uniform() < cov.p ? 1.0 : 0.0; break;
        case CovariateGenerator::Kind::matrix: x = cov.matrix[i * n + j]; break;
      }
      const double w1 = rng.normal();
      const double w2 = rng.normal();
      const Pair pr{i, j, x, c.sigma_u * w1, c.sigma_v * (c.rho_uv * w1 + suv * w2)};
      pairs.push_back(pr);
      for (int dir = 0; dir < 2; ++dir) {
        const std::size_t ego = dir == 0 ? i : j;
        const std::size_t alter = dir == 0 ? j : i;
        double d = 0.0;
        if (spec.overdispersion_enabled) d = c.sigma_d * rng.normal();
        const double eta = spec.fixed.alpha + a[ego] + b[alter] + spec.fixed.beta * x + pr.u + pr.v * x + d;
        const std::int64_t trials = trials_for(ego, alter);
        RawObservation row;
        row.ego = std::to_string(ego);
        row.alter = std::to_string(alter);
        row.trials = trials;
        row.successes = rng.binomial(trials, inv_logit(eta));
        row.covariate = x;
        rows.push_back(std::move(row));
        d_draws.push_back(d);
      }
    }
  }

  // Remember what was drawn per ordered pair before the dataset re-sorts.
  struct Drawn {
    std::string ego, alter;
    double d;
    std::size_t pair;
  };
  std::vector<Drawn> drawn;
  drawn.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) drawn.push_back({rows[r].ego, rows[r].alter, d_draws[r], r / 2});

  SimulationResult result{NetworkDataset::build(std::move(rows)), {}};
  const auto& ds = result.dataset;
  auto& l = result.latent;
  l = LatentEffects::zeros(ds, spec.overdispersion_enabled);
  for (const auto& node : ds.nodes()) {
    const auto original = static_cast<std::size_t>(std::stoull(node.label));
    l.sender[node.index] = a[original];
    l.receiver[node.index] = b[original];
  }
  for (std::size_t r = 0; r < drawn.size(); ++r) {
    const auto& ego = ds.node(drawn[r].ego);
    const auto& alter = ds.node(drawn[r].alter);
    const auto& dy = ds.dyad_of(ego, alter);
    l.dyad_intercept[dy.id] = pairs[drawn[r].pair].u;
    l.dyad_slope[dy.id] = pairs[drawn[r].pair].v;
    if (spec.overdispersion_enabled) {
      // Observations are sorted by (ego, alter); locate the cell.
      const auto obs = ds.observations();
      const auto it = std::lower_bound(obs.begin(), obs.end(), std::pair{ego.index, alter.index},
                                       [](const DirectedObservation& o, const std::pair<std::size_t, std::size_t>& key) {
                                         return std::pair{o.ego, o.alter} < key;
                                       });
      l.overdispersion[static_cast<std::size_t>(it - obs.begin())] = drawn[r].d;
    }
  }
  return result;
}

namespace {

double sample_sd(std::span<const double> x) {
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double sample_correlation(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

MomentReport empirical_moments(const NetworkDataset& dataset, const LatentEffects& latent) {
  check_dimensions(dataset, latent);
  MomentReport r;
  r.nodes = dataset.node_count();
  r.dyads = dataset.dyad_count();
  r.cells = dataset.observation_count();
  r.sd_a = sample_sd(latent.sender);
  r.sd_b = sample_sd(latent.receiver);
  r.rho_ab = sample_correlation(latent.sender, latent.receiver);
  r.sd_u = sample_sd(latent.dyad_intercept);
  r.sd_v = sample_sd(latent.dyad_slope);
  r.rho_uv = sample_correlation(latent.dyad_intercept, latent.dyad_slope);
  r.sd_d = latent.overdispersion.empty() ? std::numeric_limits<double>::quiet_NaN()
                                         : sample_sd(latent.overdispersion);
  return r;
}

}  // namespace srm
