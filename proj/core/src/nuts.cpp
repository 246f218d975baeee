#include "srm/nuts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace srm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void add_into(std::vector<double>& out, const std::vector<double>& a, const std::vector<double>& b) {
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] + b[k];
}

// Proposals only need position, gradient and log density.
template <class S>
void copy_position(S& dst, const S& src) {
  std::copy(src.q.begin(), src.q.end(), dst.q.begin());
  std::copy(src.grad.begin(), src.grad.end(), dst.grad.begin());
  dst.lp = src.lp;
}

template <class S>
void swap_position(S& a, S& b) {
  a.q.swap(b.q);
  a.grad.swap(b.grad);
  std::swap(a.lp, b.lp);
}

}  // namespace

NutsSampler::NutsSampler(const LogDensity& target, Rng& rng, NutsSettings settings)
    : target_(target), rng_(rng), settings_(settings), inv_metric_(target.dimension(), 1.0) {
  const auto n = target.dimension();
  z_.q.assign(n, 0.0);
  z_.p.assign(n, 0.0);
  z_.grad.assign(n, 0.0);
  levels_.resize(static_cast<std::size_t>(std::max(settings_.max_treedepth, 1)) + 1);
  for (auto& lv : levels_) {
    lv.z_propose_final = z_;
    for (auto* v : {&lv.p_init_end, &lv.p_sharp_init_end, &lv.rho_init, &lv.p_final_beg, &lv.p_sharp_final_beg,
                    &lv.rho_final, &lv.rho_subtree, &lv.rho_ext}) {
      v->assign(n, 0.0);
    }
  }
}

void NutsSampler::set_position(std::span<const double> q) {
  if (q.size() != target_.dimension()) throw std::invalid_argument("position has the wrong dimension");
  z_.q.assign(q.begin(), q.end());
  z_.lp = target_.log_density_and_gradient(z_.q, z_.grad);
  const bool finite_grad = std::all_of(z_.grad.begin(), z_.grad.end(), [](double g) { return std::isfinite(g); });
  if (!std::isfinite(z_.lp) || !finite_grad) throw std::domain_error("log-density is not finite at the position");
}

void NutsSampler::set_inverse_metric(std::vector<double> inv_metric) {
  if (inv_metric.size() != target_.dimension()) throw std::invalid_argument("metric has the wrong dimension");
  inv_metric_ = std::move(inv_metric);
}

double NutsSampler::hamiltonian(const State& z) const {
  double kinetic = 0.0;
  for (std::size_t k = 0; k < z.p.size(); ++k) kinetic += z.p[k] * z.p[k] * inv_metric_[k];
  return -z.lp + 0.5 * kinetic;
}

void NutsSampler::p_sharp(const State& z, std::vector<double>& out) const {
  out.resize(z.p.size());
  for (std::size_t k = 0; k < z.p.size(); ++k) out[k] = inv_metric_[k] * z.p[k];
}

void NutsSampler::sample_momentum(State& z) {
  for (std::size_t k = 0; k < z.p.size(); ++k) z.p[k] = rng_.normal() / std::sqrt(inv_metric_[k]);
}

void NutsSampler::leapfrog(State& z, double eps) const {
  const std::size_t n = z.q.size();
  for (std::size_t k = 0; k < n; ++k) z.p[k] += 0.5 * eps * z.grad[k];
  for (std::size_t k = 0; k < n; ++k) z.q[k] += eps * inv_metric_[k] * z.p[k];
  z.lp = target_.log_density_and_gradient(z.q, z.grad);
  if (!std::isfinite(z.lp)) {
    z.lp = -kInf;
    return;
  }
  for (std::size_t k = 0; k < n; ++k) z.p[k] += 0.5 * eps * z.grad[k];
}

bool NutsSampler::compute_criterion(const std::vector<double>& p_sharp_minus, const std::vector<double>& p_sharp_plus,
                                    const std::vector<double>& rho) const {
  double minus = 0.0, plus = 0.0;
  for (std::size_t k = 0; k < rho.size(); ++k) {
    minus += p_sharp_minus[k] * rho[k];
    plus += p_sharp_plus[k] * rho[k];
  }
  return plus > 0.0 && minus > 0.0;
}

TransitionStats NutsSampler::transition() {
  const std::size_t n = z_.q.size();
  State z = z_;
  sample_momentum(z);

  State z_fwd = z;
  State z_bck = z;
  State z_sample = z;
  State z_propose = z;

  std::vector<double> ps;
  p_sharp(z, ps);
  std::vector<double> p_fwd_fwd = z.p, p_sharp_fwd_fwd = ps;
  std::vector<double> p_fwd_bck = z.p, p_sharp_fwd_bck = ps;
  std::vector<double> p_bck_fwd = z.p, p_sharp_bck_fwd = ps;
  std::vector<double> p_bck_bck = z.p, p_sharp_bck_bck = ps;
  std::vector<double> rho = z.p;
  std::vector<double> rho_fwd(n), rho_bck(n), rho_ext(n);

  double log_sum_weight = 0.0;
  const double h0 = hamiltonian(z);
  int n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  int depth = 0;
  bool divergent = false;

  while (depth < settings_.max_treedepth) {
    std::fill(rho_fwd.begin(), rho_fwd.end(), 0.0);
    std::fill(rho_bck.begin(), rho_bck.end(), 0.0);
    bool valid_subtree = false;
    double log_sum_weight_subtree = -kInf;

    if (rng_.uniform() > 0.5) {
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      z = z_fwd;
      valid_subtree = build_tree(depth, z, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd,
                                 h0, 1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob, divergent);
      z_fwd = z;
    } else {
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      z = z_bck;
      valid_subtree = build_tree(depth, z, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd, p_bck_bck,
                                 h0, -1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob, divergent);
      z_bck = z;
    }
    if (!valid_subtree) break;
    ++depth;

    if (log_sum_weight_subtree > log_sum_weight) {
      swap_position(z_sample, z_propose);
    } else if (rng_.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
      swap_position(z_sample, z_propose);
    }
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

    add_into(rho, rho_bck, rho_fwd);
    bool persist = compute_criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    add_into(rho_ext, rho_bck, p_fwd_bck);
    persist = persist && compute_criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_ext);
    add_into(rho_ext, rho_fwd, p_bck_fwd);
    persist = persist && compute_criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_ext);
    if (!persist) break;
  }

  z_ = std::move(z_sample);
  TransitionStats stats;
  stats.accept_stat = n_leapfrog > 0 ? sum_metro_prob / static_cast<double>(n_leapfrog) : 0.0;
  stats.treedepth = depth;
  stats.leapfrogs = n_leapfrog;
  stats.divergent = divergent;
  stats.log_density = z_.lp;
  stats.energy = h0;
  return stats;
}

bool NutsSampler::build_tree(int depth, State& z, State& z_propose, std::vector<double>& p_sharp_beg,
                             std::vector<double>& p_sharp_end, std::vector<double>& rho, std::vector<double>& p_beg,
                             std::vector<double>& p_end, double h0, double sign, int& n_leapfrog,
                             double& log_sum_weight, double& sum_metro_prob, bool& divergent) {
  if (depth == 0) {
    leapfrog(z, sign * step_size_);
    ++n_leapfrog;
    double h = hamiltonian(z);
    if (std::isnan(h)) h = kInf;
    if (h - h0 > settings_.max_energy_error) divergent = true;
    log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
    sum_metro_prob += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
    copy_position(z_propose, z);
    p_sharp(z, p_sharp_beg);
    p_sharp_end = p_sharp_beg;
    for (std::size_t k = 0; k < rho.size(); ++k) rho[k] += z.p[k];
    p_beg = z.p;
    p_end = p_beg;
    return !divergent;
  }

  Level& lv = levels_[static_cast<std::size_t>(depth)];
  std::fill(lv.rho_init.begin(), lv.rho_init.end(), 0.0);
  double log_sum_weight_init = -kInf;
  if (!build_tree(depth - 1, z, z_propose, p_sharp_beg, lv.p_sharp_init_end, lv.rho_init, p_beg, lv.p_init_end, h0,
                  sign, n_leapfrog, log_sum_weight_init, sum_metro_prob, divergent)) {
    return false;
  }

  std::fill(lv.rho_final.begin(), lv.rho_final.end(), 0.0);
  double log_sum_weight_final = -kInf;
  if (!build_tree(depth - 1, z, lv.z_propose_final, lv.p_sharp_final_beg, p_sharp_end, lv.rho_final, lv.p_final_beg,
                  p_end, h0, sign, n_leapfrog, log_sum_weight_final, sum_metro_prob, divergent)) {
    return false;
  }

  const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
  log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
  if (log_sum_weight_final > log_sum_weight_subtree) {
    swap_position(z_propose, lv.z_propose_final);
  } else if (rng_.uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
    swap_position(z_propose, lv.z_propose_final);
  }

  add_into(lv.rho_subtree, lv.rho_init, lv.rho_final);
  for (std::size_t k = 0; k < rho.size(); ++k) rho[k] += lv.rho_subtree[k];

  bool persist = compute_criterion(p_sharp_beg, p_sharp_end, lv.rho_subtree);
  add_into(lv.rho_ext, lv.rho_init, lv.p_final_beg);
  persist = persist && compute_criterion(p_sharp_beg, lv.p_sharp_final_beg, lv.rho_ext);
  add_into(lv.rho_ext, lv.rho_final, lv.p_init_end);
  persist = persist && compute_criterion(lv.p_sharp_init_end, p_sharp_end, lv.rho_ext);
  return persist;
}

void NutsSampler::init_step_size() {
  if (step_size_ == 0.0 || step_size_ > 1e7 || std::isnan(step_size_)) return;
  const State z_init = z_;
  const double log_target = std::log(0.8);

  auto delta_h = [&]() {
    State z = z_init;
    sample_momentum(z);
    const double h0 = hamiltonian(z);
    leapfrog(z, step_size_);
    double h = hamiltonian(z);
    if (std::isnan(h)) h = kInf;
    return h0 - h;
  };

  const int direction = delta_h() > log_target ? 1 : -1;
  for (int iter = 0; iter < 200; ++iter) {
    const double dh = delta_h();
    if (direction == 1 && !(dh > log_target)) break;
    if (direction == -1 && !(dh < log_target)) break;
    step_size_ = direction == 1 ? step_size_ * 2.0 : step_size_ * 0.5;
    if (step_size_ > 1e7) throw std::runtime_error("step size diverged to infinity during initialization");
    if (step_size_ == 0.0) throw std::runtime_error("step size underflowed to zero during initialization");
  }
}

void StepSizeAdaptation::restart(double step_size) {
  mu_ = std::log(10.0 * step_size);
  counter_ = 0.0;
  s_bar_ = 0.0;
  x_bar_ = 0.0;
}

double StepSizeAdaptation::learn(double accept_stat) {
  counter_ += 1.0;
  accept_stat = std::min(accept_stat, 1.0);
  const double eta = 1.0 / (counter_ + t0_);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
  const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
  const double x_eta = std::pow(counter_, -kappa_);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

double StepSizeAdaptation::final_step_size() const { return std::exp(x_bar_); }

void WelfordVariance::add(std::span<const double> x) {
  ++n_;
  const double dn = static_cast<double>(n_);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double delta = x[k] - mean_[k];
    mean_[k] += delta / dn;
    m2_[k] += delta * (x[k] - mean_[k]);
  }
}

std::vector<double> WelfordVariance::regularized_variance() const {
  const double dn = static_cast<double>(n_);
  std::vector<double> var(m2_.size(), 1e-3);
  if (n_ < 2) return var;
  for (std::size_t k = 0; k < var.size(); ++k) {
    const double sample = m2_[k] / (dn - 1.0);
    var[k] = (dn / (dn + 5.0)) * sample + 1e-3 * (5.0 / (dn + 5.0));
  }
  return var;
}

void WelfordVariance::reset() {
  n_ = 0;
  std::fill(mean_.begin(), mean_.end(), 0.0);
  std::fill(m2_.begin(), m2_.end(), 0.0);
}

WarmupSchedule::WarmupSchedule(int warmup, int init_buffer, int term_buffer, int base_window)
    : warmup_(warmup), init_buffer_(init_buffer), term_buffer_(term_buffer), base_window_(base_window) {
  if (warmup < 20) {
    adapt_metric_ = false;
    return;
  }
  if (init_buffer_ + base_window_ + term_buffer_ > warmup) {
    init_buffer_ = static_cast<int>(0.15 * warmup);
    term_buffer_ = static_cast<int>(0.1 * warmup);
    base_window_ = warmup - (init_buffer_ + term_buffer_);
  }
  const int last = warmup_ - term_buffer_ - 1;
  int size = base_window_;
  int end = init_buffer_ + size - 1;
  while (true) {
    window_ends_.push_back(end);
    if (end >= last) break;
    size *= 2;
    int next = end + size;
    if (next != last && next + 2 * size >= warmup_ - term_buffer_) next = last;
    end = std::min(next, last);
  }
}

bool WarmupSchedule::in_window(int i) const {
  return adapt_metric_ && i >= init_buffer_ && i < warmup_ - term_buffer_ && i != warmup_;
}

bool WarmupSchedule::window_end(int i) const {
  return adapt_metric_ && std::find(window_ends_.begin(), window_ends_.end(), i) != window_ends_.end();
}

}  // namespace srm
