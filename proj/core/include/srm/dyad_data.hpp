#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace srm {

/// Raised for any input that violates the dataset invariants. Messages
/// carry the offending CSV line when one is known.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CovariateTransformKind { none, center, standardize };

/// Affine map from the original covariate scale to the model scale:
/// model = (raw - shift) / scale.
struct CovariateTransform {
  CovariateTransformKind kind = CovariateTransformKind::none;
  double shift = 0.0;
  double scale = 1.0;

  double apply(double raw) const { return (raw - shift) / scale; }
  double invert(double model) const { return model * scale + shift; }
};

std::string to_string(CovariateTransformKind kind);
CovariateTransformKind parse_transform_kind(const std::string& text);

struct IngestConfig {
  std::string ego_column = "ego";
  std::string alter_column = "alter";
  std::string successes_column = "successes";
  std::string trials_column = "trials";
  std::string covariate_column = "covariate";
  CovariateTransformKind transform = CovariateTransformKind::none;
  double symmetry_tolerance = 1e-9;
};

/// Reads `key = value` lines (`#` comments). Recognised keys: ego_column,
/// alter_column, successes_column, trials_column, covariate_column,
/// covariate_transform (none|center|standardize), symmetry_tolerance.
IngestConfig load_ingest_config(const std::filesystem::path& path);

struct NodeId {
  std::string label;
  std::size_t index = 0;
};

/// One directed cell i -> j. `covariate` is on the model scale,
/// `raw_covariate` on the scale it was read in.
struct DirectedObservation {
  std::size_t ego = 0;
  std::size_t alter = 0;
  std::size_t dyad = 0;
  std::int64_t successes = 0;
  std::int64_t trials = 1;
  double covariate = 0.0;
  double raw_covariate = 0.0;
};

/// Unordered pair with lo < hi, numbered densely over observed dyads.
struct DyadIndex {
  std::size_t lo = 0;
  std::size_t hi = 0;
  std::size_t id = 0;
};

/// A row as it appears in the input, before labels are indexed.
struct RawObservation {
  std::string ego;
  std::string alter;
  std::int64_t successes = 0;
  std::int64_t trials = 1;
  double covariate = 0.0;
  std::size_t line = 0;  // 0 when not read from a file
};

/// Validated, immutable directed dyadic data.
///
/// Construction canonicalises everything that depends on input order: node
/// labels are sorted (numerically when every label is an integer, otherwise
/// lexicographically), observations are sorted by (ego, alter) and dyads by
/// (lo, hi). Two permutations of the same rows therefore build identical
/// datasets.
class NetworkDataset {
 public:
  static NetworkDataset build(std::vector<RawObservation> rows,
                              CovariateTransformKind transform = CovariateTransformKind::none,
                              double symmetry_tolerance = 1e-9);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t observation_count() const { return observations_.size(); }
  std::size_t dyad_count() const { return dyads_.size(); }

  std::span<const NodeId> nodes() const { return nodes_; }
  std::span<const DirectedObservation> observations() const { return observations_; }
  std::span<const DyadIndex> dyads() const { return dyads_; }

  const NodeId& node(const std::string& label) const;
  const DyadIndex& dyad_of(std::size_t i, std::size_t j) const;
  const DyadIndex& dyad_of(const NodeId& i, const NodeId& j) const { return dyad_of(i.index, j.index); }
  const DyadIndex& dyad_of(const std::string& i, const std::string& j) const {
    return dyad_of(node(i), node(j));
  }

  bool covariate_symmetric() const { return covariate_symmetric_; }
  const CovariateTransform& transform() const { return transform_; }
  double symmetry_tolerance() const { return symmetry_tolerance_; }

  /// Content hash over the canonical representation.
  std::uint64_t fingerprint() const;

 private:
  std::vector<NodeId> nodes_;
  std::vector<DirectedObservation> observations_;
  std::vector<DyadIndex> dyads_;
  std::unordered_map<std::string, std::size_t> label_index_;
  std::unordered_map<std::uint64_t, std::size_t> dyad_lookup_;
  CovariateTransform transform_;
  double symmetry_tolerance_ = 1e-9;
  bool covariate_symmetric_ = true;
};

NetworkDataset read_csv(std::istream& in, const IngestConfig& config = {});
NetworkDataset load_csv(const std::filesystem::path& path, const IngestConfig& config = {});

/// Writes the dataset with the default column names and raw covariates,
/// using shortest round-trip formatting for reals.
void write_csv(const NetworkDataset& dataset, std::ostream& out);
void write_csv(const NetworkDataset& dataset, const std::filesystem::path& path);

struct DatasetSummary {
  std::size_t nodes = 0;
  std::size_t observations = 0;
  std::size_t dyads = 0;
  double both_directions_fraction = 0.0;
  double covariate_min = 0.0;
  double covariate_max = 0.0;
  double covariate_mean = 0.0;
  std::int64_t total_trials = 0;
  std::int64_t total_successes = 0;
};

/// Covariate statistics are on the original (raw) scale.
DatasetSummary summarize(const NetworkDataset& dataset);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_real(double value);

}  // namespace srm
