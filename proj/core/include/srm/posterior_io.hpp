#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "srm/dyad_data.hpp"
#include "srm/inference.hpp"

namespace srm {

/// Columnar draws: `chain,iteration,<parameter names...>`, one row per
/// retained post-warmup draw.
void write_posterior_csv(const PosteriorSamples& samples, std::ostream& out);
void write_posterior_csv(const PosteriorSamples& samples, const std::filesystem::path& path);

/// Reads draws written by write_posterior_csv. Metadata fields
/// (transform, covariate range, configs) keep their defaults; see
/// apply_fit_metadata.
PosteriorSamples read_posterior_csv(const std::filesystem::path& path);

/// JSON with sampler and model configuration, seed, dataset fingerprint,
/// covariate transform and range, and diagnostics.
std::string fit_metadata_json(const FitResult& fit);

/// Restores the metadata fields of `samples` from fit_metadata_json output.
void apply_fit_metadata(const std::filesystem::path& path, PosteriorSamples& samples);

/// Thinned latent draws; columns are named a_<node>, b_<node>, u_<lo>_<hi>,
/// v_<lo>_<hi>, d_<ego>_<alter> using node labels.
void write_latent_csv(const PosteriorSamples& samples, const NetworkDataset& dataset, std::ostream& out);

/// parameter,mean,sd,q05,q50,q95,rhat,ess
void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out);

}  // namespace srm
