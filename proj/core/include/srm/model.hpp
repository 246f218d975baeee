#pragma once

#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "srm/dyad_data.hpp"
#include "srm/rng.hpp"

namespace srm {

/// Variance of the standard logistic distribution, pi^2 / 3 (about 3.29).
/// Stands in for the residual variance on the latent logit scale.
inline constexpr double kLatentResidualVariance = std::numbers::pi * std::numbers::pi / 3.0;

struct FixedEffects {
  double alpha = 0.0;  // intercept, logit scale
  double beta = 0.0;   // dyadic covariate coefficient
};

/// Population-level scale parameters in (sd, sd, correlation) form, which
/// keeps both 2x2 covariance matrices positive semi-definite.
struct VarianceComponents {
  double sigma_a = 1.0;  // sender sd
  double sigma_b = 1.0;  // receiver sd
  double rho_ab = 0.0;   // generalized reciprocity correlation
  double sigma_u = 1.0;  // dyad intercept sd
  double sigma_v = 0.0;  // dyad slope sd
  double rho_uv = 0.0;   // intercept/slope correlation
  double sigma_d = 0.0;  // overdispersion sd

  double cov_ab() const { return rho_ab * sigma_a * sigma_b; }
  double cov_uv() const { return rho_uv * sigma_u * sigma_v; }
};

struct LatentEffects {
  std::vector<double> sender;          // a_i, one per node
  std::vector<double> receiver;        // b_i, one per node
  std::vector<double> dyad_intercept;  // u, one per dyad
  std::vector<double> dyad_slope;      // v, one per dyad
  std::vector<double> overdispersion;  // d, one per directed cell; empty when disabled

  static LatentEffects zeros(const NetworkDataset& dataset, bool overdispersion_enabled);
};

struct PriorConfig {
  double fixed_effect_sd = 5.0;  // alpha, beta ~ Normal(0, sd^2)
  double scale_sd = 2.0;         // every sigma ~ half-Normal(0, sd^2)
};

/// How latent effects are represented in the unconstrained vector.
/// centered: the effects themselves. non_centered: standard-normal draws
/// scaled through the Cholesky factor of their covariance. mixed: sender and
/// receiver effects centered with the intercept folded into the sender
/// effects, dyad effects rotated (see PairForm), overdispersion
/// non-centered. Node effects and the dyad combination
/// u + v x pool many trials each; the rest is weakly identified.
enum class Parameterization { centered, non_centered, mixed };

/// Representation of one bivariate (x, y) block.
///   centered:     (x, y)
///   non_centered: (z1, z2) with x = sx z1, y = sy (rho z1 + sqrt(1 - rho^2) z2)
///   conditional:  (x, z2)  with y = sy (rho x / sx + sqrt(1 - rho^2) z2)
///   rotated:      (s, r)   with s = x + w y for a per-pair loading w and r a
///                 standard normal independent of s; dyads only, w being the
///                 dyad's covariate, so s is exactly what the likelihood sees
enum class PairForm { centered, non_centered, conditional, rotated };

struct BlockParameterization {
  PairForm nodes = PairForm::non_centered;
  PairForm dyads = PairForm::non_centered;
  bool overdispersion_non_centered = true;
  /// Sender slots hold alpha + a_i (centered node effects only).
  bool intercept_in_sender = false;
};

BlockParameterization block_parameterization(Parameterization p);

std::string to_string(Parameterization p);
Parameterization parse_parameterization(const std::string& text);

struct ModelConfig {
  static constexpr double latent_residual_variance = kLatentResidualVariance;

  bool overdispersion_enabled = true;
  PriorConfig prior;
  Parameterization parameterization = Parameterization::mixed;
};

/// Throws std::invalid_argument when a component is out of its domain.
/// sigma_d may be zero only when overdispersion is disabled.
void validate(const VarianceComponents& c, bool overdispersion_enabled);

/// Throws std::invalid_argument when vector lengths do not match the dataset.
void check_dimensions(const NetworkDataset& dataset, const LatentEffects& latent);

double inv_logit(double eta);

/// log(1 + exp(x)) without overflow.
double log1p_exp(double x);

/// Logit of p_ij for directed cell `cell` (its position in the dataset).
double linear_predictor(const DirectedObservation& obs, std::size_t cell, const FixedEffects& fx,
                        const LatentEffects& latent);

/// Binomial log-likelihood including the log binomial coefficients.
double log_likelihood(const NetworkDataset& dataset, const FixedEffects& fx, const LatentEffects& latent);

struct LogPriorTerms {
  double sender_receiver = 0.0;  // bivariate normal over (a_i, b_i)
  double dyad = 0.0;             // bivariate normal over (u, v)
  double overdispersion = 0.0;   // normal over d
  double hyper = 0.0;            // alpha, beta, sds, correlations

  double total() const { return sender_receiver + dyad + overdispersion + hyper; }
};

/// Prior densities on the constrained scale (no change-of-variable terms).
LogPriorTerms log_prior_terms(const FixedEffects& fx, const VarianceComponents& c, const LatentEffects& latent,
                              const ModelConfig& config);
double log_prior(const FixedEffects& fx, const VarianceComponents& c, const LatentEffects& latent,
                 const ModelConfig& config);

/// Everything the model is conditioned on at one point.
struct ModelState {
  FixedEffects fixed;
  VarianceComponents components;
  LatentEffects latent;
};

/// Offsets into the unconstrained parameter vector.
///
///   [alpha, beta, log sigma_a, log sigma_b, atanh rho_ab,
///    log sigma_u, log sigma_v, atanh rho_uv, (log sigma_d),
///    sender[N], receiver[N], dyad_intercept[D], dyad_slope[D], (overdispersion[M])]
///
/// Outside the centered parameterization the latent blocks hold the
/// transformed values described by PairForm instead of the effects.
struct ParameterLayout {
  std::size_t nodes = 0;
  std::size_t dyads = 0;
  std::size_t cells = 0;
  bool overdispersion = true;

  static constexpr std::size_t alpha = 0;
  static constexpr std::size_t beta = 1;
  static constexpr std::size_t log_sigma_a = 2;
  static constexpr std::size_t log_sigma_b = 3;
  static constexpr std::size_t atanh_rho_ab = 4;
  static constexpr std::size_t log_sigma_u = 5;
  static constexpr std::size_t log_sigma_v = 6;
  static constexpr std::size_t atanh_rho_uv = 7;
  static constexpr std::size_t log_sigma_d = 8;

  std::size_t population_size() const { return overdispersion ? 9 : 8; }
  std::size_t sender() const { return population_size(); }
  std::size_t receiver() const { return sender() + nodes; }
  std::size_t dyad_intercept() const { return receiver() + nodes; }
  std::size_t dyad_slope() const { return dyad_intercept() + dyads; }
  std::size_t overdispersion_offset() const { return dyad_slope() + dyads; }
  std::size_t size() const { return overdispersion_offset() + (overdispersion ? cells : 0); }
};

/// Constrained-scale names of the population parameters, in layout order.
std::vector<std::string> population_parameter_names(bool overdispersion_enabled);

/// Log-posterior over the unconstrained vector: log-likelihood + log-prior +
/// log-Jacobian of the sd (log) and correlation (atanh) transforms, plus the
/// change of variables for non-centered latents. Holds a pointer to the
/// dataset, which must outlive it. Evaluation is const and thread-safe.
class SrmPosterior {
 public:
  SrmPosterior(const NetworkDataset& dataset, ModelConfig config);

  std::size_t dimension() const { return layout_.size(); }
  const ParameterLayout& layout() const { return layout_; }
  const ModelConfig& config() const { return config_; }
  const NetworkDataset& dataset() const { return *dataset_; }

  double log_density(std::span<const double> q) const;
  double log_density_and_gradient(std::span<const double> q, std::span<double> gradient) const;

  ModelState constrain(std::span<const double> q) const;
  std::vector<double> unconstrain(const ModelState& state) const;

  /// Population parameters on the constrained scale, in the order of
  /// population_parameter_names().
  void constrain_population(std::span<const double> q, std::span<double> out) const;

  /// Random-walk Metropolis updates of the variance components of every
  /// non-centered (or conditional) block, holding that block's effects fixed
  /// on the natural scale, then rewrites the block's unconstrained values.
  /// Interleaved with gradient-based moves on the non-centered scale this
  /// mixes well whether the data or the prior dominate a block. Leaves the
  /// posterior invariant. Returns the number of accepted proposals.
  int interweave(std::span<double> q, Rng& rng, int steps) const;

 private:
  double evaluate(std::span<const double> q, std::span<double> gradient, bool want_gradient) const;

  const NetworkDataset* dataset_;
  ModelConfig config_;
  ParameterLayout layout_;
  double log_binomial_constant_ = 0.0;
  std::vector<double> dyad_covariate_;  // model-scale covariate of each dyad's first cell
};

struct LogPosteriorResult {
  double value = 0.0;
  std::vector<double> gradient;  // with respect to SrmPosterior's unconstrained vector
};

/// Convenience entry point over constrained inputs; the gradient is taken
/// with respect to the unconstrained vector for config.parameterization.
LogPosteriorResult log_posterior_and_gradient(const NetworkDataset& dataset, const FixedEffects& fx,
                                              const VarianceComponents& c, const LatentEffects& latent,
                                              const ModelConfig& config);

}  // namespace srm
