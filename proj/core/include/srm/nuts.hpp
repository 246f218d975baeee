#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "srm/rng.hpp"

namespace srm {

/// Differentiable log-density over R^n.
class LogDensity {
 public:
  virtual ~LogDensity() = default;
  virtual std::size_t dimension() const = 0;
  /// Returns log p(q) and writes its gradient. Non-finite values are
  /// treated as zero density by the sampler.
  virtual double log_density_and_gradient(std::span<const double> q, std::span<double> gradient) const = 0;
};

struct NutsSettings {
  int max_treedepth = 10;
  double max_energy_error = 1000.0;  // larger energy errors count as divergences
};

struct TransitionStats {
  double accept_stat = 0.0;
  int treedepth = 0;
  int leapfrogs = 0;
  bool divergent = false;
  double log_density = 0.0;
  double energy = 0.0;
};

/// No-U-turn sampler with multinomial trajectory sampling, the generalized
/// U-turn criterion (including checks across merged subtrees) and a diagonal
/// Euclidean metric.
class NutsSampler {
 public:
  NutsSampler(const LogDensity& target, Rng& rng, NutsSettings settings = {});

  /// Throws std::domain_error if the log-density at q is not finite.
  void set_position(std::span<const double> q);
  std::span<const double> position() const { return z_.q; }
  double log_density() const { return z_.lp; }

  double step_size() const { return step_size_; }
  void set_step_size(double eps) { step_size_ = eps; }
  std::span<const double> inverse_metric() const { return inv_metric_; }
  void set_inverse_metric(std::vector<double> inv_metric);

  TransitionStats transition();

  /// Doubles or halves the step size until a single leapfrog step from the
  /// current position crosses an acceptance probability of 0.8.
  void init_step_size();

 private:
  struct State {
    std::vector<double> q, p, grad;
    double lp = 0.0;
  };

  // Scratch owned by one recursion depth of build_tree.
  struct Level {
    State z_propose_final;
    std::vector<double> p_init_end, p_sharp_init_end, rho_init;
    std::vector<double> p_final_beg, p_sharp_final_beg, rho_final;
    std::vector<double> rho_subtree, rho_ext;
  };

  double hamiltonian(const State& z) const;
  void p_sharp(const State& z, std::vector<double>& out) const;
  void sample_momentum(State& z);
  void leapfrog(State& z, double eps) const;
  bool compute_criterion(const std::vector<double>& p_sharp_minus, const std::vector<double>& p_sharp_plus,
                         const std::vector<double>& rho) const;

  bool build_tree(int depth, State& z, State& z_propose, std::vector<double>& p_sharp_beg,
                  std::vector<double>& p_sharp_end, std::vector<double>& rho, std::vector<double>& p_beg,
                  std::vector<double>& p_end, double h0, double sign, int& n_leapfrog, double& log_sum_weight,
                  double& sum_metro_prob, bool& divergent);

  const LogDensity& target_;
  Rng& rng_;
  NutsSettings settings_;
  State z_;
  std::vector<double> inv_metric_;
  double step_size_ = 0.1;
  std::vector<Level> levels_;
};

/// Nesterov dual averaging of log step size toward a target acceptance.
class StepSizeAdaptation {
 public:
  explicit StepSizeAdaptation(double target_accept = 0.8, double gamma = 0.05, double kappa = 0.75, double t0 = 10.0)
      : delta_(target_accept), gamma_(gamma), kappa_(kappa), t0_(t0) {}

  void restart(double step_size);
  /// Returns the next step size given the latest acceptance statistic.
  double learn(double accept_stat);
  /// Step size to use after warmup.
  double final_step_size() const;

 private:
  double delta_, gamma_, kappa_, t0_;
  double mu_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
  double counter_ = 0.0;
};

/// Running mean/variance (Welford).
class WelfordVariance {
 public:
  explicit WelfordVariance(std::size_t dimension) : mean_(dimension, 0.0), m2_(dimension, 0.0) {}
  void add(std::span<const double> x);
  std::size_t count() const { return n_; }
  /// Sample variance shrunk toward 1e-3 with weight 5 / (n + 5).
  std::vector<double> regularized_variance() const;
  void reset();

 private:
  std::size_t n_ = 0;
  std::vector<double> mean_, m2_;
};

/// Warmup schedule: an initial fast buffer, doubling slow windows for metric
/// estimation and a terminal fast buffer.
class WarmupSchedule {
 public:
  WarmupSchedule(int warmup, int init_buffer = 75, int term_buffer = 50, int base_window = 25);

  bool adapt_metric() const { return adapt_metric_; }
  /// True when iteration `i` (0-based) falls inside a metric window.
  bool in_window(int i) const;
  /// True when iteration `i` closes a metric window.
  bool window_end(int i) const;

 private:
  int warmup_;
  int init_buffer_, term_buffer_, base_window_;
  bool adapt_metric_ = true;
  std::vector<int> window_ends_;
};

}  // namespace srm
