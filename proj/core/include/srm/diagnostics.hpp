#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace srm {

/// Too few draws for a convergence diagnostic.
class InsufficientDraws : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Draws of one scalar, one vector per chain. Chains must have equal length.
using ChainDraws = std::span<const std::vector<double>>;

/// Split-chain potential scale reduction (classic, non-rank-normalised).
/// Each chain is halved (the middle draw is dropped for odd lengths).
/// Requires every chain to hold at least 4 draws. Returns NaN when the
/// within-segment variance is zero.
double split_rhat(ChainDraws chains);

/// Multi-chain effective sample size with Geyer's initial positive and
/// monotone sequence truncation of the autocorrelations. Requires at least
/// 8 draws in total and 4 per chain. Capped at the total draw count; NaN
/// when the draws are constant.
double effective_sample_size(ChainDraws chains);

/// Quantile with linear interpolation between order statistics (type 7).
/// `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double prob);

}  // namespace srm
