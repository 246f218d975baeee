#include "srm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace srm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t common_length(ChainDraws chains, std::size_t min_per_chain, const char* what) {
  if (chains.empty()) throw InsufficientDraws(std::string(what) + ": no chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw std::invalid_argument(std::string(what) + ": chains have unequal lengths");
  }
  if (n < min_per_chain) {
    throw InsufficientDraws(std::string(what) + ": need at least " + std::to_string(min_per_chain) +
                            " draws per chain");
  }
  return n;
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x) {
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

}  // namespace

double split_rhat(ChainDraws chains) {
  const std::size_t n = common_length(chains, 4, "split_rhat");
  const std::size_t half = n / 2;
  std::vector<double> means;
  std::vector<double> vars;
  for (const auto& c : chains) {
    const std::span<const double> all(c);
    for (auto seg : {all.subspan(0, half), all.subspan(n - half, half)}) {
      means.push_back(mean_of(seg));
      vars.push_back(variance_of(seg));
    }
  }
  const double h = static_cast<double>(half);
  const double within = mean_of(vars);
  const double between = h * variance_of(means);
  if (!(within > 0.0)) return kNaN;
  const double var_plus = (h - 1.0) / h * within + between / h;
  return std::sqrt(var_plus / within);
}

double effective_sample_size(ChainDraws chains) {
  const std::size_t n = common_length(chains, 4, "effective_sample_size");
  const std::size_t m = chains.size();
  if (n * m < 8) throw InsufficientDraws("effective_sample_size: need at least 8 draws in total");

  std::vector<double> chain_mean(m), chain_var(m);
  for (std::size_t c = 0; c < m; ++c) {
    chain_mean[c] = mean_of(chains[c]);
    chain_var[c] = variance_of(chains[c]);
  }
  const double dn = static_cast<double>(n);
  const double mean_var = mean_of(chain_var);
  double var_plus = mean_var * (dn - 1.0) / dn;
  if (m > 1) var_plus += variance_of(chain_mean);
  if (!(var_plus > 0.0)) return kNaN;

  // Mean over chains of the biased lag-t autocovariance.
  auto mean_acov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const auto& x = chains[c];
      double s = 0.0;
      for (std::size_t k = 0; k + lag < n; ++k) s += (x[k] - chain_mean[c]) * (x[k + lag] - chain_mean[c]);
      total += s / dn;
    }
    return total / static_cast<double>(m);
  };
  auto rho = [&](std::size_t lag) { return 1.0 - (mean_var - mean_acov(lag)) / var_plus; };

  std::vector<double> rho_hat(n + 2, 0.0);
  double rho_even = 1.0;
  double rho_odd = rho(1);
  rho_hat[0] = rho_even;
  rho_hat[1] = rho_odd;
  std::size_t t = 1;
  while (t + 5 < n && rho_even + rho_odd > 0.0) {
    rho_even = rho(t + 1);
    rho_odd = rho(t + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho_hat[t + 1] = rho_even;
      rho_hat[t + 2] = rho_odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0) rho_hat[max_t + 1] = rho_even;

  // Enforce a monotone sequence of paired sums.
  for (std::size_t k = 1; k + 2 <= max_t; k += 2) {
    if (rho_hat[k + 1] + rho_hat[k + 2] > rho_hat[k - 1] + rho_hat[k]) {
      rho_hat[k + 1] = (rho_hat[k - 1] + rho_hat[k]) / 2.0;
      rho_hat[k + 2] = rho_hat[k + 1];
    }
  }

  const double total = static_cast<double>(n * m);
  double tau = -1.0 + 2.0 * std::accumulate(rho_hat.begin(), rho_hat.begin() + max_t + 1, 0.0) + rho_hat[max_t + 1];
  tau = std::max(tau, 1.0 / std::log10(total));
  return std::min(total / tau, total);
}

double quantile_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace srm
