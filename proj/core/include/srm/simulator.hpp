#pragma once

#include <cstdint>
#include <vector>

#include "srm/dyad_data.hpp"
#include "srm/model.hpp"

namespace srm {

/// Source of the dyad-level covariate x_ij (shared by both directions).
struct CovariateGenerator {
  enum class Kind { constant, uniform, binary, matrix };

  Kind kind = Kind::uniform;
  double value = 0.0;           // constant
  double lo = -1.0, hi = 1.0;   // uniform(lo, hi)
  double p = 0.5;               // binary: 1 with probability p, else 0
  std::vector<double> matrix;   // n_nodes x n_nodes row-major, symmetric

  static CovariateGenerator constant(double c);
  static CovariateGenerator uniform(double lo, double hi);
  static CovariateGenerator binary(double p);
  static CovariateGenerator explicit_matrix(std::vector<double> m);
};

struct SimulationSpec {
  std::size_t n_nodes = 10;
  std::int64_t trials_per_cell = 10;
  std::vector<std::int64_t> trials_table;  // optional n_nodes x n_nodes row-major override
  CovariateGenerator covariate;
  FixedEffects fixed;
  VarianceComponents components;
  bool overdispersion_enabled = true;
  double missing_dyad_fraction = 0.0;
  std::uint64_t seed = 1;
};

/// Throws std::invalid_argument describing the first invalid field.
void validate(const SimulationSpec& spec);

struct SimulationResult {
  NetworkDataset dataset;
  LatentEffects latent;  // aligned with `dataset` indices
};

/// Draws one dataset from the generative model. Stream order, all from a
/// single Rng(seed):
///   1. per node i = 0..N-1: two normals -> (a_i, b_i) via 2x2 Cholesky
///   2. missing dyads only: Floyd's sampling with below() picks the
///      round((1 - f) D) kept pair indices
///   3. per kept unordered pair (i < j), lexicographic: covariate draw (if
///      any), two normals -> (u, v) via 2x2 Cholesky, then direction i->j
///      and j->i in turn: d (if enabled), then the binomial count
/// Node labels are "0".."N-1"; nodes left without any observed dyad are
/// dropped from the returned dataset.
SimulationResult simulate(const SimulationSpec& spec);

struct MomentReport {
  std::size_t nodes = 0;
  std::size_t dyads = 0;
  std::size_t cells = 0;
  double sd_a = 0.0, sd_b = 0.0, rho_ab = 0.0;
  double sd_u = 0.0, sd_v = 0.0, rho_uv = 0.0;
  double sd_d = 0.0;  // NaN when overdispersion effects are absent
};

/// Sample sds (n - 1 denominator) and Pearson correlations of the latent
/// draws. A correlation involving a constant vector is NaN.
MomentReport empirical_moments(const NetworkDataset& dataset, const LatentEffects& latent);

}  // namespace srm
