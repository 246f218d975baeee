#include "srm/reciprocity.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace srm {

double dyadic_variance(double x, const VarianceComponents& c) {
  const double vx = c.sigma_v * x;
  const double lead = c.sigma_u + c.rho_uv * vx;
  return lead * lead + (1.0 - c.rho_uv * c.rho_uv) * vx * vx;
}

double dyadic_reciprocity(double x, const VarianceComponents& c, const ModelConfig& config) {
  const double dyad = dyadic_variance(x, c);
  double residual = ModelConfig::latent_residual_variance;
  if (config.overdispersion_enabled) residual += c.sigma_d * c.sigma_d;
  return dyad / (dyad + residual);
}

double generalized_reciprocity(const VarianceComponents& c) { return c.cov_ab() / (c.sigma_a * c.sigma_b); }

GridSpec GridSpec::linspace(double lo, double hi, std::size_t count) {
  if (!(std::isfinite(lo) && std::isfinite(hi))) throw std::invalid_argument("grid bounds must be finite");
  if (count == 0) throw std::invalid_argument("grid needs at least one point");
  if (count == 1 || lo == hi) return values({lo});
  if (!(lo < hi)) throw std::invalid_argument("grid lower bound must be below the upper bound");
  GridSpec g;
  g.points.reserve(count);
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k + 1 < count; ++k) g.points.push_back(lo + step * static_cast<double>(k));
  g.points.push_back(hi);
  return g;
}

GridSpec GridSpec::values(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("grid needs at least one point");
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (!std::isfinite(xs[k])) throw std::invalid_argument("grid values must be finite");
    if (k > 0 && !(xs[k - 1] < xs[k])) throw std::invalid_argument("grid must be strictly increasing");
  }
  return GridSpec{std::move(xs)};
}

GridSpec default_grid(const PosteriorSamples& samples, std::size_t count) {
  return GridSpec::linspace(samples.covariate_min, samples.covariate_max, count);
}

namespace {

struct Summary {
  double mean, median, q05, q95;
};

Summary summarize_sample(std::vector<double>& v) {
  const auto row = summarize_draws("", v);
  return {row.mean, row.q50, row.q05, row.q95};
}

}  // namespace

ReciprocityCurve reciprocity_curve(const PosteriorSamples& samples, const GridSpec& grid, const ModelConfig& config) {
  const auto checked = GridSpec::values(grid.points);
  std::vector<std::string> required = {"sigma_u", "sigma_v", "rho_uv"};
  if (config.overdispersion_enabled) required.emplace_back("sigma_d");
  std::vector<std::size_t> columns;
  for (const auto& name : required) {
    const auto idx = samples.find(name);
    if (idx == PosteriorSamples::npos) throw std::invalid_argument("posterior is missing column '" + name + "'");
    columns.push_back(idx);
  }
  const std::size_t n_draws = static_cast<std::size_t>(samples.chains) * static_cast<std::size_t>(samples.iterations);
  if (n_draws == 0) throw std::invalid_argument("posterior has no draws");

  std::vector<VarianceComponents> comps(n_draws);
  const std::size_t width = samples.parameter_count();
  for (std::size_t k = 0; k < n_draws; ++k) {
    const double* row = samples.draws.data() + k * width;
    auto& c = comps[k];
    c.sigma_u = row[columns[0]];
    c.sigma_v = row[columns[1]];
    c.rho_uv = row[columns[2]];
    c.sigma_d = config.overdispersion_enabled ? row[columns[3]] : 0.0;
  }

  ReciprocityCurve curve;
  curve.overdispersion_included = config.overdispersion_enabled;
  std::vector<double> rho(n_draws), var(n_draws);
  for (double x_raw : checked.points) {
    const double x = samples.covariate_transform.apply(x_raw);
    for (std::size_t k = 0; k < n_draws; ++k) {
      var[k] = dyadic_variance(x, comps[k]);
      rho[k] = dyadic_reciprocity(x, comps[k], config);
    }
    const auto rs = summarize_sample(rho);
    const auto vs = summarize_sample(var);
    curve.points.push_back({x_raw, rs.mean, rs.median, rs.q05, rs.q95, vs.mean, vs.median, vs.q05, vs.q95});
  }
  return curve;
}

void write_curve_csv(const ReciprocityCurve& curve, std::ostream& out) {
  out << "x,rho_mean,rho_median,rho_q05,rho_q95,dyad_var_mean,dyad_var_q05,dyad_var_q95\n";
  for (const auto& p : curve.points) {
    out << format_real(p.x) << ',' << format_real(p.rho_mean) << ',' << format_real(p.rho_median) << ','
        << format_real(p.rho_q05) << ',' << format_real(p.rho_q95) << ',' << format_real(p.dyad_var_mean) << ','
        << format_real(p.dyad_var_q05) << ',' << format_real(p.dyad_var_q95) << '\n';
  }
}

}  // namespace srm
