#include "srm/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace srm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)
constexpr double kLog2 = std::numbers::ln2;

// log(1 - tanh(t)^2) = -2 log cosh(t), stable for large |t|.
double log1m_tanh_sq(double t) {
  const double a = std::abs(t);
  return -2.0 * (a + std::log1p(std::exp(-2.0 * a)) - kLog2);
}

double normal_logpdf(double x, double sd) {
  const double z = x / sd;
  return -0.5 * kLog2Pi - std::log(sd) - 0.5 * z * z;
}

double half_normal_logpdf(double x, double sd) { return kLog2 + normal_logpdf(x, sd); }

double bivariate_normal_logpdf(double x, double y, double sx, double sy, double rho) {
  const double zx = x / sx;
  const double zy = y / sy;
  const double om = 1.0 - rho * rho;
  const double q = (zx * zx - 2.0 * rho * zx * zy + zy * zy) / om;
  return -kLog2Pi - std::log(sx) - std::log(sy) - 0.5 * std::log(om) - 0.5 * q;
}

struct PairGradient {
  double log_sx = 0.0;
  double log_sy = 0.0;
  double atanh_rho = 0.0;
};

// Centered bivariate normal prior over (xs[k], ys[k]) pairs. Adds the
// density to the return value and its gradient to gx, gy and `pg`.
double centered_pair_prior(std::span<const double> xs, std::span<const double> ys, double sx, double sy, double rho,
                           double log_om, double* gx, double* gy, PairGradient* pg) {
  const double om = std::exp(log_om);
  const std::size_t n = xs.size();
  double quad = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double zx = xs[k] / sx;
    const double zy = ys[k] / sy;
    const double q = (zx * zx - 2.0 * rho * zx * zy + zy * zy) / om;
    quad += q;
    if (gx != nullptr) {
      gx[k] = -(zx - rho * zy) / (om * sx);
      gy[k] = -(zy - rho * zx) / (om * sy);
      pg->log_sx += -1.0 + zx * (zx - rho * zy) / om;
      pg->log_sy += -1.0 + zy * (zy - rho * zx) / om;
      pg->atanh_rho += rho + zx * zy - rho * q;
    }
  }
  const double dn = static_cast<double>(n);
  return dn * (-kLog2Pi - std::log(sx) - std::log(sy) - 0.5 * log_om) - 0.5 * quad;
}

}  // namespace

std::string to_string(Parameterization p) {
  switch (p) {
    case Parameterization::centered:
      return "centered";
    case Parameterization::non_centered:
      return "non_centered";
    case Parameterization::mixed:
      break;
  }
  return "mixed";
}

Parameterization parse_parameterization(const std::string& text) {
  if (text == "centered") return Parameterization::centered;
  if (text == "mixed") return Parameterization::mixed;
  if (text == "non_centered" || text == "noncentered" || text == "non-centered") {
    return Parameterization::non_centered;
  }
  throw std::invalid_argument("unknown parameterization '" + text + "'");
}

LatentEffects LatentEffects::zeros(const NetworkDataset& dataset, bool overdispersion_enabled) {
  LatentEffects l;
  l.sender.assign(dataset.node_count(), 0.0);
  l.receiver.assign(dataset.node_count(), 0.0);
  l.dyad_intercept.assign(dataset.dyad_count(), 0.0);
  l.dyad_slope.assign(dataset.dyad_count(), 0.0);
  if (overdispersion_enabled) l.overdispersion.assign(dataset.observation_count(), 0.0);
  return l;
}

void validate(const VarianceComponents& c, bool overdispersion_enabled) {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(c.sigma_a) || c.sigma_a <= 0.0) throw std::invalid_argument("sigma_a must be positive");
  if (!finite(c.sigma_b) || c.sigma_b <= 0.0) throw std::invalid_argument("sigma_b must be positive");
  if (!finite(c.sigma_u) || c.sigma_u < 0.0) throw std::invalid_argument("sigma_u must be non-negative");
  if (!finite(c.sigma_v) || c.sigma_v < 0.0) throw std::invalid_argument("sigma_v must be non-negative");
  if (!(c.rho_ab > -1.0 && c.rho_ab < 1.0)) throw std::invalid_argument("rho_ab must lie in (-1, 1)");
  if (!(c.rho_uv > -1.0 && c.rho_uv < 1.0)) throw std::invalid_argument("rho_uv must lie in (-1, 1)");
  if (!finite(c.sigma_d) || c.sigma_d < 0.0) throw std::invalid_argument("sigma_d must be non-negative");
  if (overdispersion_enabled && c.sigma_d == 0.0) {
    throw std::invalid_argument("sigma_d must be positive while overdispersion is enabled");
  }
}

void check_dimensions(const NetworkDataset& dataset, const LatentEffects& latent) {
  const auto n = dataset.node_count();
  const auto d = dataset.dyad_count();
  if (latent.sender.size() != n || latent.receiver.size() != n) {
    throw std::invalid_argument("sender/receiver effects must have one entry per node");
  }
  if (latent.dyad_intercept.size() != d || latent.dyad_slope.size() != d) {
    throw std::invalid_argument("dyad effects must have one entry per dyad");
  }
  if (!latent.overdispersion.empty() && latent.overdispersion.size() != dataset.observation_count()) {
    throw std::invalid_argument("overdispersion effects must have one entry per directed observation");
  }
}

double inv_logit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double log1p_exp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double linear_predictor(const DirectedObservation& obs, std::size_t cell, const FixedEffects& fx,
                        const LatentEffects& latent) {
  double eta = fx.alpha + latent.sender[obs.ego] + latent.receiver[obs.alter] + fx.beta * obs.covariate +
               latent.dyad_intercept[obs.dyad] + latent.dyad_slope[obs.dyad] * obs.covariate;
  if (!latent.overdispersion.empty()) eta += latent.overdispersion[cell];
  return eta;
}

namespace {

double log_binomial_coefficient(std::int64_t n, std::int64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// y log p + (n - y) log(1 - p) = y eta - n log(1 + e^eta)
double binomial_kernel(std::int64_t y, std::int64_t n, double eta) {
  return static_cast<double>(y) * eta - static_cast<double>(n) * log1p_exp(eta);
}

}  // namespace

double log_likelihood(const NetworkDataset& dataset, const FixedEffects& fx, const LatentEffects& latent) {
  check_dimensions(dataset, latent);
  double total = 0.0;
  const auto obs = dataset.observations();
  for (std::size_t m = 0; m < obs.size(); ++m) {
    const double eta = linear_predictor(obs[m], m, fx, latent);
    total += log_binomial_coefficient(obs[m].trials, obs[m].successes) +
             binomial_kernel(obs[m].successes, obs[m].trials, eta);
  }
  return total;
}

LogPriorTerms log_prior_terms(const FixedEffects& fx, const VarianceComponents& c, const LatentEffects& latent,
                              const ModelConfig& config) {
  validate(c, config.overdispersion_enabled);
  LogPriorTerms t;
  for (std::size_t i = 0; i < latent.sender.size(); ++i) {
    t.sender_receiver += bivariate_normal_logpdf(latent.sender[i], latent.receiver[i], c.sigma_a, c.sigma_b, c.rho_ab);
  }
  for (std::size_t k = 0; k < latent.dyad_intercept.size(); ++k) {
    t.dyad += bivariate_normal_logpdf(latent.dyad_intercept[k], latent.dyad_slope[k], c.sigma_u, c.sigma_v, c.rho_uv);
  }
  if (config.overdispersion_enabled) {
    for (double d : latent.overdispersion) t.overdispersion += normal_logpdf(d, c.sigma_d);
  }
  const auto& p = config.prior;
  t.hyper = normal_logpdf(fx.alpha, p.fixed_effect_sd) + normal_logpdf(fx.beta, p.fixed_effect_sd);
  for (double s : {c.sigma_a, c.sigma_b, c.sigma_u, c.sigma_v}) t.hyper += half_normal_logpdf(s, p.scale_sd);
  if (config.overdispersion_enabled) t.hyper += half_normal_logpdf(c.sigma_d, p.scale_sd);
  t.hyper += 2.0 * -kLog2;  // uniform(-1, 1) on each correlation
  return t;
}

double log_prior(const FixedEffects& fx, const VarianceComponents& c, const LatentEffects& latent,
                 const ModelConfig& config) {
  return log_prior_terms(fx, c, latent, config).total();
}

std::vector<std::string> population_parameter_names(bool overdispersion_enabled) {
  std::vector<std::string> names = {"alpha", "beta", "sigma_a", "sigma_b", "rho_ab", "sigma_u", "sigma_v", "rho_uv"};
  if (overdispersion_enabled) names.emplace_back("sigma_d");
  return names;
}

namespace {

struct Workspace {
  std::vector<double> a, b, u, v, d, ga, gb, gu, gv, gd;
};

// Rotated form for one pair with loading w: s = x + w y carries the data,
// r is independent of s under the prior. Returns V = var(s) and writes the
// coefficients of x = mx s - c w r, y = my s + c r.
struct Rotation {
  double var, mx, my, c;
};

Rotation rotation(double sx, double sy, double rho, double sech, double w) {
  const double a = sx * sx, b = rho * sx * sy, cc = sy * sy;
  const double lead = sx + rho * sy * w;
  const double var = lead * lead + sech * sech * sy * sy * w * w;
  return {var, (a + b * w) / var, (b + cc * w) / var, sx * sy * sech / std::sqrt(var)};
}

// Unconstrained block values (q1, q2) -> effects (x, y). `w` holds the
// per-pair loadings used by the rotated form.
void pair_effects(PairForm form, const double* q1, const double* q2, std::size_t n, double sx, double sy, double rho,
                  double sech, std::vector<double>& x, std::vector<double>& y, const double* w = nullptr) {
  switch (form) {
    case PairForm::rotated:
      for (std::size_t k = 0; k < n; ++k) {
        const auto rot = rotation(sx, sy, rho, sech, w[k]);
        x[k] = rot.mx * q1[k] - rot.c * w[k] * q2[k];
        y[k] = rot.my * q1[k] + rot.c * q2[k];
      }
      return;
    case PairForm::centered:
      std::copy(q1, q1 + n, x.begin());
      std::copy(q2, q2 + n, y.begin());
      return;
    case PairForm::non_centered:
      for (std::size_t k = 0; k < n; ++k) {
        x[k] = sx * q1[k];
        y[k] = sy * (rho * q1[k] + sech * q2[k]);
      }
      return;
    case PairForm::conditional:
      for (std::size_t k = 0; k < n; ++k) {
        x[k] = q1[k];
        y[k] = sy * (rho * q1[k] / sx + sech * q2[k]);
      }
      return;
  }
}

// Effects (x, y) -> unconstrained block values.
void pair_unconstrain(PairForm form, double x, double y, double sx, double sy, double rho, double& q1, double& q2,
                      double w = 0.0) {
  const double sech = std::sqrt(1.0 - rho * rho);
  switch (form) {
    case PairForm::rotated: {
      const auto rot = rotation(sx, sy, rho, sech, w);
      q1 = x + w * y;
      q2 = (y - rot.my * q1) / rot.c;
      return;
    }
    case PairForm::centered:
      q1 = x;
      q2 = y;
      return;
    case PairForm::non_centered:
      q1 = x / sx;
      q2 = (y / sy - rho * q1) / sech;
      return;
    case PairForm::conditional:
      q1 = x;
      q2 = (y / sy - rho * x / sx) / sech;
      return;
  }
}

// Prior density of one block in its unconstrained representation. With
// g1 set, also writes d/dq1 and d/dq2 (likelihood terms gx, gy included)
// and accumulates the hyperparameter gradient into `pg`.
double pair_prior(PairForm form, const double* q1, const double* q2, std::size_t n, const std::vector<double>& x,
                  const std::vector<double>& y, double sx, double sy, double rho, double log_om,
                  const std::vector<double>& gx, const std::vector<double>& gy, double* g1, double* g2,
                  PairGradient* pg, const double* w = nullptr) {
  const double sech = std::exp(0.5 * log_om);
  const double dn = static_cast<double>(n);
  if (form == PairForm::rotated) {
    // s ~ N(0, V(w)), r ~ N(0, 1)
    const double a = sx * sx, b = rho * sx * sy, cc = sy * sy;
    const double e = sx * sy * sech * sech;  // d b / d atanh(rho)
    double lp = -kLog2Pi * dn;
    for (std::size_t k = 0; k < n; ++k) {
      const double wk = w[k];
      const auto rot = rotation(sx, sy, rho, sech, wk);
      const double s = q1[k], r = q2[k], var = rot.var;
      lp -= 0.5 * (std::log(var) + s * s / var + r * r);
      if (g1 == nullptr) continue;
      g1[k] = gx[k] * rot.mx + gy[k] * rot.my - s / var;
      g2[k] = rot.c * (gy[k] - wk * gx[k]) - r;
      const double g_mx = gx[k] * s, g_my = gy[k] * s, g_c = r * (gy[k] - wk * gx[k]);
      const double g_var = -0.5 / var + 0.5 * s * s / (var * var);
      auto chain = [&](double d_var, double d_nx, double d_ny, double d_logdet) {
        const double d_mx = (d_nx - rot.mx * d_var) / var;
        const double d_my = (d_ny - rot.my * d_var) / var;
        const double d_c = 0.5 * rot.c * (d_logdet - d_var / var);
        return g_mx * d_mx + g_my * d_my + g_c * d_c + g_var * d_var;
      };
      pg->log_sx += chain(2.0 * a + 2.0 * b * wk, 2.0 * a + b * wk, b, 2.0);
      pg->log_sy += chain(2.0 * b * wk + 2.0 * cc * wk * wk, b * wk, b + 2.0 * cc * wk, 2.0);
      pg->atanh_rho += chain(2.0 * wk * e, wk * e, e, -2.0 * rho);
    }
    return lp;
  }
  if (form == PairForm::centered) {
    const double lp = centered_pair_prior(x, y, sx, sy, rho, log_om, g1, g2, pg);
    if (g1 != nullptr) {
      for (std::size_t k = 0; k < n; ++k) {
        g1[k] += gx[k];
        g2[k] += gy[k];
      }
    }
    return lp;
  }
  if (form == PairForm::non_centered) {
    double zz = 0.0;
    for (std::size_t k = 0; k < n; ++k) zz += q1[k] * q1[k] + q2[k] * q2[k];
    if (g1 != nullptr) {
      for (std::size_t k = 0; k < n; ++k) {
        g1[k] = sx * gx[k] + sy * rho * gy[k] - q1[k];
        g2[k] = sy * sech * gy[k] - q2[k];
        pg->log_sx += gx[k] * x[k];
        pg->log_sy += gy[k] * y[k];
        pg->atanh_rho += gy[k] * sy * (sech * sech * q1[k] - sech * rho * q2[k]);
      }
    }
    return -kLog2Pi * dn - 0.5 * zz;
  }
  // conditional: x ~ N(0, sx^2), z2 ~ N(0, 1)
  double xx = 0.0, zz = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double zx = q1[k] / sx;
    xx += zx * zx;
    zz += q2[k] * q2[k];
  }
  if (g1 != nullptr) {
    for (std::size_t k = 0; k < n; ++k) {
      const double zx = q1[k] / sx;
      g1[k] = gx[k] + gy[k] * sy * rho / sx - zx / sx;
      g2[k] = gy[k] * sy * sech - q2[k];
      pg->log_sx += -1.0 + zx * zx - gy[k] * sy * rho * zx;
      pg->log_sy += gy[k] * y[k];
      pg->atanh_rho += gy[k] * sy * (sech * sech * zx - sech * rho * q2[k]);
    }
  }
  return dn * (-kLog2Pi - std::log(sx)) - 0.5 * (xx + zz);
}

}  // namespace

SrmPosterior::SrmPosterior(const NetworkDataset& dataset, ModelConfig config)
    : dataset_(&dataset), config_(config) {
  layout_.nodes = dataset.node_count();
  layout_.dyads = dataset.dyad_count();
  layout_.cells = dataset.observation_count();
  layout_.overdispersion = config.overdispersion_enabled;
  dyad_covariate_.assign(layout_.dyads, 0.0);
  std::vector<bool> seen(layout_.dyads, false);
  for (const auto& o : dataset.observations()) {
    log_binomial_constant_ += log_binomial_coefficient(o.trials, o.successes);
    if (!seen[o.dyad]) {
      dyad_covariate_[o.dyad] = o.covariate;
      seen[o.dyad] = true;
    }
  }
}

void SrmPosterior::constrain_population(std::span<const double> q, std::span<double> out) const {
  using L = ParameterLayout;
  out[0] = q[L::alpha];
  out[1] = q[L::beta];
  out[2] = std::exp(q[L::log_sigma_a]);
  out[3] = std::exp(q[L::log_sigma_b]);
  out[4] = std::tanh(q[L::atanh_rho_ab]);
  out[5] = std::exp(q[L::log_sigma_u]);
  out[6] = std::exp(q[L::log_sigma_v]);
  out[7] = std::tanh(q[L::atanh_rho_uv]);
  if (layout_.overdispersion) out[8] = std::exp(q[L::log_sigma_d]);
}

ModelState SrmPosterior::constrain(std::span<const double> q) const {
  using L = ParameterLayout;
  if (q.size() != layout_.size()) throw std::invalid_argument("parameter vector has the wrong length");
  ModelState s;
  s.fixed = {q[L::alpha], q[L::beta]};
  auto& c = s.components;
  c.sigma_a = std::exp(q[L::log_sigma_a]);
  c.sigma_b = std::exp(q[L::log_sigma_b]);
  c.rho_ab = std::tanh(q[L::atanh_rho_ab]);
  c.sigma_u = std::exp(q[L::log_sigma_u]);
  c.sigma_v = std::exp(q[L::log_sigma_v]);
  c.rho_uv = std::tanh(q[L::atanh_rho_uv]);
  c.sigma_d = layout_.overdispersion ? std::exp(q[L::log_sigma_d]) : 0.0;

  const std::size_t n = layout_.nodes;
  const std::size_t d = layout_.dyads;
  auto& l = s.latent;
  l.sender.assign(q.begin() + layout_.sender(), q.begin() + layout_.sender() + n);
  l.receiver.assign(q.begin() + layout_.receiver(), q.begin() + layout_.receiver() + n);
  l.dyad_intercept.assign(q.begin() + layout_.dyad_intercept(), q.begin() + layout_.dyad_intercept() + d);
  l.dyad_slope.assign(q.begin() + layout_.dyad_slope(), q.begin() + layout_.dyad_slope() + d);
  if (layout_.overdispersion) {
    l.overdispersion.assign(q.begin() + layout_.overdispersion_offset(), q.end());
  }
  const auto nc = block_parameterization(config_.parameterization);
  const auto z_sender = l.sender, z_receiver = l.receiver;
  pair_effects(nc.nodes, z_sender.data(), z_receiver.data(), n, c.sigma_a, c.sigma_b, c.rho_ab,
               1.0 / std::cosh(q[L::atanh_rho_ab]), l.sender, l.receiver);
  if (nc.intercept_in_sender && nc.nodes == PairForm::centered) {
    for (auto& e : l.sender) e -= s.fixed.alpha;
  }
  const auto z_dint = l.dyad_intercept, z_dslope = l.dyad_slope;
  pair_effects(nc.dyads, z_dint.data(), z_dslope.data(), d, c.sigma_u, c.sigma_v, c.rho_uv,
               1.0 / std::cosh(q[L::atanh_rho_uv]), l.dyad_intercept, l.dyad_slope, dyad_covariate_.data());
  if (nc.overdispersion_non_centered) {
    for (auto& e : l.overdispersion) e *= c.sigma_d;
  }
  return s;
}

std::vector<double> SrmPosterior::unconstrain(const ModelState& state) const {
  using L = ParameterLayout;
  const auto& c = state.components;
  validate(c, layout_.overdispersion);
  if (!(c.sigma_u > 0.0 && c.sigma_v > 0.0)) {
    throw std::invalid_argument("dyad sds must be positive on the unconstrained scale");
  }
  check_dimensions(*dataset_, state.latent);
  if (layout_.overdispersion && state.latent.overdispersion.size() != layout_.cells) {
    throw std::invalid_argument("overdispersion effects must have one entry per directed observation");
  }

  std::vector<double> q(layout_.size(), 0.0);
  q[L::alpha] = state.fixed.alpha;
  q[L::beta] = state.fixed.beta;
  q[L::log_sigma_a] = std::log(c.sigma_a);
  q[L::log_sigma_b] = std::log(c.sigma_b);
  q[L::atanh_rho_ab] = std::atanh(c.rho_ab);
  q[L::log_sigma_u] = std::log(c.sigma_u);
  q[L::log_sigma_v] = std::log(c.sigma_v);
  q[L::atanh_rho_uv] = std::atanh(c.rho_uv);
  if (layout_.overdispersion) q[L::log_sigma_d] = std::log(c.sigma_d);

  const auto& l = state.latent;
  const auto nc = block_parameterization(config_.parameterization);
  for (std::size_t i = 0; i < layout_.nodes; ++i) {
    pair_unconstrain(nc.nodes, l.sender[i], l.receiver[i], c.sigma_a, c.sigma_b, c.rho_ab, q[layout_.sender() + i],
                     q[layout_.receiver() + i]);
  }
  if (nc.intercept_in_sender && nc.nodes == PairForm::centered) {
    for (std::size_t i = 0; i < layout_.nodes; ++i) q[layout_.sender() + i] += state.fixed.alpha;
  }
  for (std::size_t k = 0; k < layout_.dyads; ++k) {
    pair_unconstrain(nc.dyads, l.dyad_intercept[k], l.dyad_slope[k], c.sigma_u, c.sigma_v, c.rho_uv,
                     q[layout_.dyad_intercept() + k], q[layout_.dyad_slope() + k], dyad_covariate_[k]);
  }
  if (layout_.overdispersion) {
    for (std::size_t m = 0; m < layout_.cells; ++m) {
      const double e = l.overdispersion[m];
      q[layout_.overdispersion_offset() + m] = nc.overdispersion_non_centered ? e / c.sigma_d : e;
    }
  }
  return q;
}

double SrmPosterior::log_density(std::span<const double> q) const { return evaluate(q, {}, false); }

double SrmPosterior::log_density_and_gradient(std::span<const double> q, std::span<double> gradient) const {
  if (gradient.size() != layout_.size()) throw std::invalid_argument("gradient buffer has the wrong length");
  return evaluate(q, gradient, true);
}

BlockParameterization block_parameterization(Parameterization p) {
  switch (p) {
    case Parameterization::centered:
      return {PairForm::centered, PairForm::centered, false};
    case Parameterization::non_centered:
      return {PairForm::non_centered, PairForm::non_centered, true};
    case Parameterization::mixed:
      break;
  }
  return {PairForm::centered, PairForm::rotated, true, true};
}

namespace {

// Log density of a bivariate block's (log sx, log sy, atanh rho) given its
// effects, through the sums of squares and cross-products. Terms constant in
// the components are dropped.
double pair_components_log_density(const double* theta, double n, double sxx, double syy, double sxy,
                                   double scale_sd) {
  const double sx = std::exp(theta[0]);
  const double sy = std::exp(theta[1]);
  const double rho = std::tanh(theta[2]);
  const double log_om = log1m_tanh_sq(theta[2]);
  const double quad = (sxx / (sx * sx) - 2.0 * rho * sxy / (sx * sy) + syy / (sy * sy)) / std::exp(log_om);
  return n * (-theta[0] - theta[1] - 0.5 * log_om) - 0.5 * quad + half_normal_logpdf(sx, scale_sd) +
         half_normal_logpdf(sy, scale_sd) + theta[0] + theta[1] + log_om;
}

double scale_log_density(double log_s, double n, double sss, double scale_sd) {
  const double s = std::exp(log_s);
  return -n * log_s - 0.5 * sss / (s * s) + half_normal_logpdf(s, scale_sd) + log_s;
}

template <class F>
int random_walk(double* theta, std::size_t dim, double step, int steps, Rng& rng, F&& log_density) {
  int accepted = 0;
  double current = log_density(theta);
  double proposal[3];
  for (int it = 0; it < steps; ++it) {
    for (std::size_t k = 0; k < dim; ++k) proposal[k] = theta[k] + step * rng.normal();
    const double next = log_density(proposal);
    if (std::isfinite(next) && std::log(rng.uniform()) < next - current) {
      std::copy(proposal, proposal + dim, theta);
      current = next;
      ++accepted;
    }
  }
  return accepted;
}

}  // namespace

int SrmPosterior::interweave(std::span<double> q, Rng& rng, int steps) const {
  using L = ParameterLayout;
  if (q.size() != layout_.size()) throw std::invalid_argument("parameter vector has the wrong length");
  if (steps <= 0) return 0;
  const auto forms = block_parameterization(config_.parameterization);
  const double scale_sd = config_.prior.scale_sd;
  int accepted = 0;

  auto update_pair = [&](PairForm form, std::size_t first, std::size_t off1, std::size_t off2, std::size_t n) {
    if (form == PairForm::centered || form == PairForm::rotated || n == 0) return;
    double* theta = q.data() + first;
    std::vector<double> x(n), y(n);
    pair_effects(form, q.data() + off1, q.data() + off2, n, std::exp(theta[0]), std::exp(theta[1]),
                 std::tanh(theta[2]), 1.0 / std::cosh(theta[2]), x, y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      sxx += x[k] * x[k];
      syy += y[k] * y[k];
      sxy += x[k] * y[k];
    }
    const double dn = static_cast<double>(n);
    accepted += random_walk(theta, 3, 1.0 / std::sqrt(dn + 1.0), steps, rng, [&](const double* t) {
      return pair_components_log_density(t, dn, sxx, syy, sxy, scale_sd);
    });
    const double sx = std::exp(theta[0]), sy = std::exp(theta[1]), rho = std::tanh(theta[2]);
    for (std::size_t k = 0; k < n; ++k) pair_unconstrain(form, x[k], y[k], sx, sy, rho, q[off1 + k], q[off2 + k]);
  };

  update_pair(forms.nodes, L::log_sigma_a, layout_.sender(), layout_.receiver(), layout_.nodes);
  update_pair(forms.dyads, L::log_sigma_u, layout_.dyad_intercept(), layout_.dyad_slope(), layout_.dyads);

  if (layout_.overdispersion && forms.overdispersion_non_centered && layout_.cells > 0) {
    double* z = q.data() + layout_.overdispersion_offset();
    const double s0 = std::exp(q[L::log_sigma_d]);
    double sss = 0.0;
    for (std::size_t m = 0; m < layout_.cells; ++m) sss += (s0 * z[m]) * (s0 * z[m]);
    const double dm = static_cast<double>(layout_.cells);
    accepted += random_walk(&q[L::log_sigma_d], 1, 1.0 / std::sqrt(2.0 * dm + 1.0), steps, rng,
                            [&](const double* t) { return scale_log_density(t[0], dm, sss, scale_sd); });
    const double ratio = s0 / std::exp(q[L::log_sigma_d]);
    for (std::size_t m = 0; m < layout_.cells; ++m) z[m] *= ratio;
  }
  return accepted;
}

double SrmPosterior::evaluate(std::span<const double> q, std::span<double> g, bool want_gradient) const {
  using L = ParameterLayout;
  if (q.size() != layout_.size()) throw std::invalid_argument("parameter vector has the wrong length");

  const std::size_t n = layout_.nodes;
  const std::size_t nd = layout_.dyads;
  const std::size_t m_cells = layout_.cells;
  const bool od = layout_.overdispersion;
  const auto nc = block_parameterization(config_.parameterization);

  const double alpha = q[L::alpha];
  const double beta = q[L::beta];
  const double sa = std::exp(q[L::log_sigma_a]);
  const double sb = std::exp(q[L::log_sigma_b]);
  const double rab = std::tanh(q[L::atanh_rho_ab]);
  const double su = std::exp(q[L::log_sigma_u]);
  const double sv = std::exp(q[L::log_sigma_v]);
  const double ruv = std::tanh(q[L::atanh_rho_uv]);
  const double sd = od ? std::exp(q[L::log_sigma_d]) : 0.0;
  const double log_om_ab = log1m_tanh_sq(q[L::atanh_rho_ab]);
  const double log_om_uv = log1m_tanh_sq(q[L::atanh_rho_uv]);
  const double sech_ab = std::exp(0.5 * log_om_ab);
  const double sech_uv = std::exp(0.5 * log_om_uv);

  const double* p_sender = q.data() + layout_.sender();
  const double* p_receiver = q.data() + layout_.receiver();
  const double* p_dint = q.data() + layout_.dyad_intercept();
  const double* p_dslope = q.data() + layout_.dyad_slope();
  const double* p_od = od ? q.data() + layout_.overdispersion_offset() : nullptr;

  // Effects on the natural scale. Buffers are reused per thread.
  thread_local Workspace ws;
  auto& [a, b, u, v, d, ga, gb, gu, gv, gd] = ws;
  a.resize(n);
  b.resize(n);
  u.resize(nd);
  v.resize(nd);
  d.resize(od ? m_cells : 0);
  pair_effects(nc.nodes, p_sender, p_receiver, n, sa, sb, rab, sech_ab, a, b);
  const bool shifted = nc.intercept_in_sender && nc.nodes == PairForm::centered;
  if (shifted) {
    for (auto& e : a) e -= alpha;
  }
  pair_effects(nc.dyads, p_dint, p_dslope, nd, su, sv, ruv, sech_uv, u, v, dyad_covariate_.data());
  for (std::size_t m = 0; m < d.size(); ++m) d[m] = nc.overdispersion_non_centered ? sd * p_od[m] : p_od[m];

  // Likelihood and d(loglik)/d(effect).
  if (want_gradient) {
    std::fill(g.begin(), g.end(), 0.0);
    ga.assign(n, 0.0);
    gb.assign(n, 0.0);
    gu.assign(nd, 0.0);
    gv.assign(nd, 0.0);
    gd.assign(d.size(), 0.0);
  }
  double lp = log_binomial_constant_;
  const auto obs = dataset_->observations();
  double g_alpha = 0.0;
  double g_beta = 0.0;
  for (std::size_t m = 0; m < m_cells; ++m) {
    const auto& o = obs[m];
    const double x = o.covariate;
    double eta = alpha + a[o.ego] + b[o.alter] + beta * x + u[o.dyad] + v[o.dyad] * x;
    if (od) eta += d[m];
    // One exp serves both log(1 + e^eta) and the fitted probability.
    const double e = std::exp(-std::abs(eta));
    const double softplus = std::max(eta, 0.0) + std::log1p(e);
    lp += static_cast<double>(o.successes) * eta - static_cast<double>(o.trials) * softplus;
    if (want_gradient) {
      const double p = eta >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
      const double r = static_cast<double>(o.successes) - static_cast<double>(o.trials) * p;
      g_alpha += r;
      g_beta += r * x;
      ga[o.ego] += r;
      gb[o.alter] += r;
      gu[o.dyad] += r;
      gv[o.dyad] += r * x;
      if (od) gd[m] = r;
    }
  }

  // Hyperpriors with log / atanh Jacobians.
  const auto& prior = config_.prior;
  const double vf = prior.fixed_effect_sd * prior.fixed_effect_sd;
  const double vs = prior.scale_sd * prior.scale_sd;
  lp += normal_logpdf(alpha, prior.fixed_effect_sd) + normal_logpdf(beta, prior.fixed_effect_sd);
  const std::size_t sd_slots[] = {L::log_sigma_a, L::log_sigma_b, L::log_sigma_u, L::log_sigma_v, L::log_sigma_d};
  for (std::size_t slot : sd_slots) {
    if (slot == L::log_sigma_d && !od) continue;
    const double s = std::exp(q[slot]);
    lp += half_normal_logpdf(s, prior.scale_sd) + q[slot];
    if (want_gradient) g[slot] += 1.0 - s * s / vs;
  }
  lp += -2.0 * kLog2 + log_om_ab + log_om_uv;
  if (want_gradient) {
    g[L::alpha] = g_alpha - alpha / vf;
    g[L::beta] = g_beta - beta / vf;
    g[L::atanh_rho_ab] += -2.0 * rab;
    g[L::atanh_rho_uv] += -2.0 * ruv;
  }

  // Latent priors.
  PairGradient pab, puv;
  double* g_sender = want_gradient ? g.data() + layout_.sender() : nullptr;
  double* g_receiver = want_gradient ? g.data() + layout_.receiver() : nullptr;
  lp += pair_prior(nc.nodes, p_sender, p_receiver, n, a, b, sa, sb, rab, log_om_ab, ga, gb, g_sender, g_receiver,
                   &pab);
  if (shifted && want_gradient) {
    for (std::size_t i = 0; i < n; ++i) g[L::alpha] -= g_sender[i];
  }
  double* g_dint = want_gradient ? g.data() + layout_.dyad_intercept() : nullptr;
  double* g_dslope = want_gradient ? g.data() + layout_.dyad_slope() : nullptr;
  lp += pair_prior(nc.dyads, p_dint, p_dslope, nd, u, v, su, sv, ruv, log_om_uv, gu, gv, g_dint, g_dslope, &puv,
                   dyad_covariate_.data());
  if (want_gradient) {
    g[L::log_sigma_a] += pab.log_sx;
    g[L::log_sigma_b] += pab.log_sy;
    g[L::atanh_rho_ab] += pab.atanh_rho;
    g[L::log_sigma_u] += puv.log_sx;
    g[L::log_sigma_v] += puv.log_sy;
    g[L::atanh_rho_uv] += puv.atanh_rho;
  }
  if (od) {
    double* g_od = want_gradient ? g.data() + layout_.overdispersion_offset() : nullptr;
    double zz = 0.0;
    for (std::size_t m = 0; m < m_cells; ++m) zz += p_od[m] * p_od[m];
    if (nc.overdispersion_non_centered) {
      lp += -0.5 * kLog2Pi * static_cast<double>(m_cells) - 0.5 * zz;
      if (want_gradient) {
        for (std::size_t m = 0; m < m_cells; ++m) {
          g_od[m] = sd * gd[m] - p_od[m];
          g[L::log_sigma_d] += gd[m] * d[m];
        }
      }
    } else {
      const double dd = zz / (sd * sd);
      lp += static_cast<double>(m_cells) * (-0.5 * kLog2Pi - std::log(sd)) - 0.5 * dd;
      if (want_gradient) {
        for (std::size_t m = 0; m < m_cells; ++m) g_od[m] = gd[m] - d[m] / (sd * sd);
        g[L::log_sigma_d] += -static_cast<double>(m_cells) + dd;
      }
    }
  }
  if (std::isnan(lp)) lp = -std::numeric_limits<double>::infinity();
  return lp;
}

LogPosteriorResult log_posterior_and_gradient(const NetworkDataset& dataset, const FixedEffects& fx,
                                              const VarianceComponents& c, const LatentEffects& latent,
                                              const ModelConfig& config) {
  SrmPosterior posterior(dataset, config);
  const auto q = posterior.unconstrain({fx, c, latent});
  LogPosteriorResult result;
  result.gradient.assign(q.size(), 0.0);
  result.value = posterior.log_density_and_gradient(q, result.gradient);
  return result;
}

}  // namespace srm
