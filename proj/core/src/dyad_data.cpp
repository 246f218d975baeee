#include "srm/dyad_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "srm/fingerprint.hpp"

namespace srm {

namespace {

std::string at_line(std::size_t line) {
  return line == 0 ? std::string() : " at line " + std::to_string(line);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// RFC 4180 fields on a single line; doubled quotes inside quoted fields.
std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          current.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? current : std::string(trim(current)));
      current.clear();
      was_quoted = false;
    } else {
      current.push_back(c);
    }
  }
  if (quoted) throw DataError("unterminated quoted field" + at_line(line_no));
  fields.push_back(was_quoted ? current : std::string(trim(current)));
  return fields;
}

std::int64_t parse_count(const std::string& text, const std::string& column, std::size_t line) {
  std::int64_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw DataError("malformed " + column + " value '" + text + "'" + at_line(line));
  }
  return value;
}

double parse_real(const std::string& text, const std::string& column, std::size_t line) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw DataError("malformed " + column + " value '" + text + "'" + at_line(line));
  }
  return value;
}

bool parse_integer_label(const std::string& label, long long& out) {
  const auto* end = label.data() + label.size();
  auto [ptr, ec] = std::from_chars(label.data(), end, out);
  return ec == std::errc() && ptr == end && !label.empty();
}

std::uint64_t pair_key(std::size_t lo, std::size_t hi) {
  return (static_cast<std::uint64_t>(lo) << 32) | static_cast<std::uint64_t>(hi);
}

}  // namespace

std::string to_string(CovariateTransformKind kind) {
  switch (kind) {
    case CovariateTransformKind::none: return "none";
    case CovariateTransformKind::center: return "center";
    case CovariateTransformKind::standardize: return "standardize";
  }
  return "none";
}

CovariateTransformKind parse_transform_kind(const std::string& text) {
  if (text == "none") return CovariateTransformKind::none;
  if (text == "center") return CovariateTransformKind::center;
  if (text == "standardize") return CovariateTransformKind::standardize;
  throw std::invalid_argument("unknown covariate transform '" + text + "'");
}

std::string format_real(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  (void)ec;
  return std::string(buf, ptr);
}

IngestConfig load_ingest_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ingest config " + path.string());
  IngestConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw std::runtime_error("ingest config: expected key = value at line " + std::to_string(line_no));
    }
    const std::string key(trim(view.substr(0, eq)));
    const std::string value(trim(view.substr(eq + 1)));
    if (key == "ego_column") config.ego_column = value;
    else if (key == "alter_column") config.alter_column = value;
    else if (key == "successes_column") config.successes_column = value;
    else if (key == "trials_column") config.trials_column = value;
    else if (key == "covariate_column") config.covariate_column = value;
    else if (key == "covariate_transform") config.transform = parse_transform_kind(value);
    else if (key == "symmetry_tolerance") config.symmetry_tolerance = parse_real(value, key, line_no);
    else throw std::runtime_error("ingest config: unknown key '" + key + "' at line " + std::to_string(line_no));
  }
  return config;
}

NetworkDataset NetworkDataset::build(std::vector<RawObservation> rows, CovariateTransformKind transform,
                                     double symmetry_tolerance) {
  if (rows.empty()) throw DataError("dataset has no observations");

  for (const auto& row : rows) {
    if (row.ego == row.alter) throw DataError("self-loop for node '" + row.ego + "'" + at_line(row.line));
    if (row.trials < 1) throw DataError("trials must be at least 1" + at_line(row.line));
    if (row.successes < 0) throw DataError("successes must be non-negative" + at_line(row.line));
    if (row.successes > row.trials) throw DataError("successes exceed trials" + at_line(row.line));
    if (!std::isfinite(row.covariate)) throw DataError("covariate is not finite" + at_line(row.line));
  }

  NetworkDataset ds;
  ds.symmetry_tolerance_ = symmetry_tolerance;

  std::vector<std::string> labels;
  labels.reserve(rows.size() * 2);
  for (const auto& row : rows) {
    labels.push_back(row.ego);
    labels.push_back(row.alter);
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  const bool numeric = std::all_of(labels.begin(), labels.end(), [](const std::string& l) {
    long long v;
    return parse_integer_label(l, v);
  });
  if (numeric) {
    std::stable_sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
      long long va = 0, vb = 0;
      parse_integer_label(a, va);
      parse_integer_label(b, vb);
      return va < vb;
    });
  }
  ds.nodes_.reserve(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    ds.nodes_.push_back({labels[k], k});
    ds.label_index_.emplace(labels[k], k);
  }

  struct Indexed {
    std::size_t ego, alter;
    const RawObservation* row;
  };
  std::vector<Indexed> indexed;
  indexed.reserve(rows.size());
  for (const auto& row : rows) {
    indexed.push_back({ds.label_index_.at(row.ego), ds.label_index_.at(row.alter), &row});
  }
  std::sort(indexed.begin(), indexed.end(), [](const Indexed& a, const Indexed& b) {
    if (a.ego != b.ego) return a.ego < b.ego;
    if (a.alter != b.alter) return a.alter < b.alter;
    return a.row->line < b.row->line;
  });
  for (std::size_t k = 1; k < indexed.size(); ++k) {
    if (indexed[k].ego == indexed[k - 1].ego && indexed[k].alter == indexed[k - 1].alter) {
      throw DataError("duplicate observation for ordered pair ('" + indexed[k].row->ego + "', '" +
                      indexed[k].row->alter + "')" + at_line(indexed[k].row->line));
    }
  }

  std::map<std::pair<std::size_t, std::size_t>, std::size_t> dyad_ids;
  for (const auto& obs : indexed) {
    dyad_ids.emplace(std::minmax(obs.ego, obs.alter), 0);
  }
  std::size_t next_id = 0;
  for (auto& [pair, id] : dyad_ids) {
    id = next_id++;
    ds.dyads_.push_back({pair.first, pair.second, id});
    ds.dyad_lookup_.emplace(pair_key(pair.first, pair.second), id);
  }

  ds.observations_.reserve(indexed.size());
  for (const auto& obs : indexed) {
    DirectedObservation o;
    o.ego = obs.ego;
    o.alter = obs.alter;
    o.dyad = dyad_ids.at(std::minmax(obs.ego, obs.alter));
    o.successes = obs.row->successes;
    o.trials = obs.row->trials;
    o.raw_covariate = obs.row->covariate;
    o.covariate = o.raw_covariate;
    ds.observations_.push_back(o);
  }

  // Shared dyad-level covariate: both directions must agree.
  std::vector<std::size_t> first_cell(ds.dyads_.size(), ds.observations_.size());
  for (std::size_t m = 0; m < indexed.size(); ++m) {
    const auto& o = ds.observations_[m];
    const std::size_t prev = first_cell[o.dyad];
    if (prev == ds.observations_.size()) {
      first_cell[o.dyad] = m;
      continue;
    }
    const double gap = std::abs(ds.observations_[prev].raw_covariate - o.raw_covariate);
    if (!(gap <= symmetry_tolerance)) {
      ds.covariate_symmetric_ = false;
      throw DataError("asymmetric covariate for dyad ('" + indexed[m].row->ego + "', '" + indexed[m].row->alter +
                      "'): " + format_real(ds.observations_[prev].raw_covariate) + " vs " +
                      format_real(o.raw_covariate) + at_line(indexed[m].row->line));
    }
  }

  ds.transform_.kind = transform;
  if (transform != CovariateTransformKind::none) {
    const double n = static_cast<double>(ds.observations_.size());
    double mean = 0.0;
    for (const auto& o : ds.observations_) mean += o.raw_covariate;
    mean /= n;
    ds.transform_.shift = mean;
    if (transform == CovariateTransformKind::standardize) {
      if (ds.observations_.size() < 2) throw DataError("cannot standardize a covariate with one observation");
      double ss = 0.0;
      for (const auto& o : ds.observations_) ss += (o.raw_covariate - mean) * (o.raw_covariate - mean);
      const double sd = std::sqrt(ss / (n - 1.0));
      if (!(sd > 0.0)) throw DataError("cannot standardize a constant covariate");
      ds.transform_.scale = sd;
    }
    for (auto& o : ds.observations_) o.covariate = ds.transform_.apply(o.raw_covariate);
  }
  return ds;
}

const NodeId& NetworkDataset::node(const std::string& label) const {
  const auto it = label_index_.find(label);
  if (it == label_index_.end()) throw std::out_of_range("unknown node '" + label + "'");
  return nodes_[it->second];
}

const DyadIndex& NetworkDataset::dyad_of(std::size_t i, std::size_t j) const {
  if (i == j) throw std::invalid_argument("dyad_of: a node does not form a dyad with itself");
  const auto [lo, hi] = std::minmax(i, j);
  const auto it = dyad_lookup_.find(pair_key(lo, hi));
  if (it == dyad_lookup_.end()) {
    throw std::out_of_range("dyad_of: dyad (" + std::to_string(lo) + ", " + std::to_string(hi) + ") is not observed");
  }
  return dyads_[it->second];
}

std::uint64_t NetworkDataset::fingerprint() const {
  Fingerprint fp;
  fp.add(static_cast<std::uint64_t>(nodes_.size()));
  for (const auto& n : nodes_) fp.add(n.label).add(std::string_view("\0", 1));
  fp.add(static_cast<std::uint64_t>(observations_.size()));
  for (const auto& o : observations_) {
    fp.add(static_cast<std::uint64_t>(o.ego))
        .add(static_cast<std::uint64_t>(o.alter))
        .add(o.successes)
        .add(o.trials)
        .add(o.raw_covariate);
  }
  fp.add(to_string(transform_.kind));
  return fp.value();
}

NetworkDataset read_csv(std::istream& in, const IngestConfig& config) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!trim(line).empty()) {
      header = split_csv_line(line, line_no);
      break;
    }
  }
  if (header.empty()) throw DataError("missing header row");

  const std::string* names[5] = {&config.ego_column, &config.alter_column, &config.successes_column,
                                 &config.trials_column, &config.covariate_column};
  std::size_t column[5];
  for (int k = 0; k < 5; ++k) {
    const auto it = std::find(header.begin(), header.end(), *names[k]);
    if (it == header.end()) throw DataError("header is missing column '" + *names[k] + "'");
    column[k] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<RawObservation> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line, line_no);
    if (fields.size() != header.size()) {
      throw DataError("malformed row: expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()) + at_line(line_no));
    }
    RawObservation row;
    row.line = line_no;
    row.ego = fields[column[0]];
    row.alter = fields[column[1]];
    if (row.ego.empty() || row.alter.empty()) throw DataError("malformed row: empty node label" + at_line(line_no));
    row.successes = parse_count(fields[column[2]], *names[2], line_no);
    row.trials = parse_count(fields[column[3]], *names[3], line_no);
    row.covariate = parse_real(fields[column[4]], *names[4], line_no);
    rows.push_back(std::move(row));
  }
  return NetworkDataset::build(std::move(rows), config.transform, config.symmetry_tolerance);
}

NetworkDataset load_csv(const std::filesystem::path& path, const IngestConfig& config) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return read_csv(in, config);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

namespace {

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n ") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void write_csv(const NetworkDataset& dataset, std::ostream& out) {
  out << "ego,alter,successes,trials,covariate\n";
  const auto nodes = dataset.nodes();
  for (const auto& o : dataset.observations()) {
    out << quote_if_needed(nodes[o.ego].label) << ',' << quote_if_needed(nodes[o.alter].label) << ','
        << o.successes << ',' << o.trials << ',' << format_real(o.raw_covariate) << '\n';
  }
}

void write_csv(const NetworkDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_csv(dataset, out);
}

DatasetSummary summarize(const NetworkDataset& dataset) {
  DatasetSummary s;
  s.nodes = dataset.node_count();
  s.observations = dataset.observation_count();
  s.dyads = dataset.dyad_count();
  std::vector<int> directions(s.dyads, 0);
  s.covariate_min = std::numeric_limits<double>::infinity();
  s.covariate_max = -std::numeric_limits<double>::infinity();
  for (const auto& o : dataset.observations()) {
    ++directions[o.dyad];
    s.covariate_min = std::min(s.covariate_min, o.raw_covariate);
    s.covariate_max = std::max(s.covariate_max, o.raw_covariate);
    s.total_trials += o.trials;
    s.total_successes += o.successes;
  }
  // Offsets from the minimum keep a constant covariate's mean exact.
  double offset_sum = 0.0;
  for (const auto& o : dataset.observations()) offset_sum += o.raw_covariate - s.covariate_min;
  const auto both = std::count(directions.begin(), directions.end(), 2);
  s.both_directions_fraction = s.dyads == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(s.dyads);
  s.covariate_mean =
      s.observations == 0 ? 0.0 : s.covariate_min + offset_sum / static_cast<double>(s.observations);
  return s;
}

}  // namespace srm
