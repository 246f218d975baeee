#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "srm/inference.hpp"
#include "srm/model.hpp"

namespace srm {

/// Variance of u + v x under the dyad covariance:
/// sigma_u^2 + 2 sigma_uv x + sigma_v^2 x^2, evaluated as
/// (sigma_u + rho_uv sigma_v x)^2 + (1 - rho_uv^2) (sigma_v x)^2 so it is
/// never negative in floating point.
double dyadic_variance(double x, const VarianceComponents& c);

/// Dyadic reciprocity correlation on the latent scale:
/// V(x) / (V(x) + sigma_d^2 + pi^2/3). The sigma_d^2 term is dropped when
/// overdispersion is disabled. Result lies in [0, 1).
double dyadic_reciprocity(double x, const VarianceComponents& c, const ModelConfig& config);

/// Correlation between sender and receiver effects, sigma_ab / (sigma_a sigma_b).
double generalized_reciprocity(const VarianceComponents& c);

inline constexpr std::size_t kDefaultGridPoints = 101;

/// Covariate values on the original scale, strictly increasing.
struct GridSpec {
  std::vector<double> points;

  static GridSpec linspace(double lo, double hi, std::size_t count = kDefaultGridPoints);
  static GridSpec values(std::vector<double> xs);
};

/// Default grid over the covariate range recorded with the posterior.
GridSpec default_grid(const PosteriorSamples& samples, std::size_t count = kDefaultGridPoints);

struct CurvePoint {
  double x = 0.0;
  double rho_mean = 0.0, rho_median = 0.0, rho_q05 = 0.0, rho_q95 = 0.0;
  double dyad_var_mean = 0.0, dyad_var_median = 0.0, dyad_var_q05 = 0.0, dyad_var_q95 = 0.0;
};

struct ReciprocityCurve {
  std::vector<CurvePoint> points;
  bool overdispersion_included = true;
};

/// Evaluates the dyadic variance and reciprocity per posterior draw at each
/// grid point (mapped to the model scale through the recorded covariate
/// transform) and summarises the resulting draws. Throws
/// std::invalid_argument when a required column is missing or the grid is
/// not strictly increasing.
ReciprocityCurve reciprocity_curve(const PosteriorSamples& samples, const GridSpec& grid, const ModelConfig& config);

/// Columns: x, rho_mean, rho_median, rho_q05, rho_q95, dyad_var_mean, dyad_var_q05, dyad_var_q95.
void write_curve_csv(const ReciprocityCurve& curve, std::ostream& out);

}  // namespace srm
