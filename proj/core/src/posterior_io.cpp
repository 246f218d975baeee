#include "srm/posterior_io.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "srm/fingerprint.hpp"

namespace srm {

using nlohmann::json;

namespace {

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_posterior_csv(const PosteriorSamples& s, std::ostream& out) {
  out << "chain,iteration";
  for (const auto& n : s.names) out << ',' << n;
  out << '\n';
  for (int c = 0; c < s.chains; ++c) {
    for (int i = 0; i < s.iterations; ++i) {
      out << c << ',' << i;
      for (std::size_t p = 0; p < s.names.size(); ++p) out << ',' << format_real(s.at(c, i, p));
      out << '\n';
    }
  }
}

void write_posterior_csv(const PosteriorSamples& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_posterior_csv(samples, out);
}

PosteriorSamples read_posterior_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open posterior " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty posterior file");
  const auto header = split_commas(line);
  if (header.size() < 3 || header[0] != "chain" || header[1] != "iteration") {
    throw std::runtime_error(path.string() + ": posterior header must start with chain,iteration");
  }
  PosteriorSamples s;
  s.names.assign(header.begin() + 2, header.end());

  std::map<int, std::vector<std::vector<double>>> by_chain;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error(path.string() + ": wrong field count at line " + std::to_string(line_no));
    }
    std::vector<double> row;
    try {
      for (std::size_t k = 2; k < fields.size(); ++k) row.push_back(std::stod(fields[k]));
      by_chain[std::stoi(fields[0])].push_back(std::move(row));
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ": malformed number at line " + std::to_string(line_no));
    }
  }
  if (by_chain.empty()) throw std::runtime_error(path.string() + ": posterior has no draws");
  s.chains = static_cast<int>(by_chain.size());
  s.iterations = static_cast<int>(by_chain.begin()->second.size());
  for (auto& [chain, rows] : by_chain) {
    if (static_cast<int>(rows.size()) != s.iterations) {
      throw std::runtime_error(path.string() + ": chains have unequal numbers of draws");
    }
    for (auto& r : rows) s.draws.insert(s.draws.end(), r.begin(), r.end());
  }
  return s;
}

std::string fit_metadata_json(const FitResult& fit) {
  const auto& s = fit.samples;
  const auto& d = fit.diagnostics;
  json j;
  j["sampler"] = {{"chains", s.sampler.chains},
                  {"warmup_iterations", s.sampler.warmup_iterations},
                  {"sampling_iterations", s.sampler.sampling_iterations},
                  {"seed", s.sampler.seed},
                  {"target_accept", s.sampler.target_accept},
                  {"max_treedepth", s.sampler.max_treedepth},
                  {"latent_thin", s.sampler.latent_thin},
                  {"interweave_steps", s.sampler.interweave_steps},
                  {"algorithm", "nuts-multinomial-diag-e"}};
  j["model"] = {{"overdispersion_enabled", s.model.overdispersion_enabled},
                {"parameterization", to_string(s.model.parameterization)},
                {"prior_fixed_effect_sd", s.model.prior.fixed_effect_sd},
                {"prior_scale_sd", s.model.prior.scale_sd},
                {"latent_residual_variance", ModelConfig::latent_residual_variance}};
  j["dataset_fingerprint"] = to_hex(s.dataset_fingerprint);
  j["covariate"] = {{"transform", to_string(s.covariate_transform.kind)},
                    {"shift", s.covariate_transform.shift},
                    {"scale", s.covariate_transform.scale},
                    {"min", s.covariate_min},
                    {"max", s.covariate_max}};
  json params = json::array();
  for (const auto& p : d.parameters) {
    params.push_back({{"name", p.name},
                      {"rhat", number_or_null(p.rhat)},
                      {"ess", number_or_null(p.ess)},
                      {"degenerate", p.degenerate},
                      {"insufficient", p.insufficient}});
  }
  json chains = json::array();
  for (const auto& c : d.chains) {
    chains.push_back({{"step_size", c.step_size},
                      {"divergences", c.divergences},
                      {"mean_accept_stat", c.mean_accept_stat},
                      {"mean_treedepth", c.mean_treedepth},
                      {"treedepth_saturations", c.treedepth_saturations},
                      {"leapfrogs", c.leapfrogs}});
  }
  j["diagnostics"] = {{"parameters", params},
                      {"chains", chains},
                      {"total_divergences", d.total_divergences},
                      {"divergence_rate", d.divergence_rate},
                      {"converged", d.converged()},
                      {"warnings", d.warnings}};
  return j.dump(2) + "\n";
}

void apply_fit_metadata(const std::filesystem::path& path, PosteriorSamples& s) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metadata " + path.string());
  json j;
  try {
    in >> j;
    const auto& cov = j.at("covariate");
    s.covariate_transform.kind = parse_transform_kind(cov.at("transform").get<std::string>());
    s.covariate_transform.shift = cov.at("shift").get<double>();
    s.covariate_transform.scale = cov.at("scale").get<double>();
    s.covariate_min = cov.at("min").get<double>();
    s.covariate_max = cov.at("max").get<double>();
    const auto& model = j.at("model");
    s.model.overdispersion_enabled = model.at("overdispersion_enabled").get<bool>();
    s.model.parameterization = parse_parameterization(model.at("parameterization").get<std::string>());
    s.model.prior.fixed_effect_sd = model.at("prior_fixed_effect_sd").get<double>();
    s.model.prior.scale_sd = model.at("prior_scale_sd").get<double>();
    const auto& sampler = j.at("sampler");
    s.sampler.chains = sampler.at("chains").get<int>();
    s.sampler.warmup_iterations = sampler.at("warmup_iterations").get<int>();
    s.sampler.sampling_iterations = sampler.at("sampling_iterations").get<int>();
    s.sampler.seed = sampler.at("seed").get<std::uint64_t>();
    s.dataset_fingerprint = std::stoull(j.at("dataset_fingerprint").get<std::string>(), nullptr, 16);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": invalid metadata: " + e.what());
  }
}

void write_latent_csv(const PosteriorSamples& s, const NetworkDataset& ds, std::ostream& out) {
  const auto nodes = ds.nodes();
  out << "chain,iteration";
  for (const auto& n : nodes) out << ",a_" << n.label;
  for (const auto& n : nodes) out << ",b_" << n.label;
  for (const auto& d : ds.dyads()) out << ",u_" << nodes[d.lo].label << '_' << nodes[d.hi].label;
  for (const auto& d : ds.dyads()) out << ",v_" << nodes[d.lo].label << '_' << nodes[d.hi].label;
  if (s.model.overdispersion_enabled) {
    for (const auto& o : ds.observations()) out << ",d_" << nodes[o.ego].label << '_' << nodes[o.alter].label;
  }
  out << '\n';
  for (std::size_t k = 0; k < s.latent.effects.size(); ++k) {
    const auto& e = s.latent.effects[k];
    out << s.latent.chain[k] << ',' << s.latent.iteration[k];
    for (const auto* v : {&e.sender, &e.receiver, &e.dyad_intercept, &e.dyad_slope, &e.overdispersion}) {
      for (double x : *v) out << ',' << format_real(x);
    }
    out << '\n';
  }
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "parameter,mean,sd,q05,q50,q95,rhat,ess\n";
  for (const auto& r : rows) {
    out << r.name << ',' << format_real(r.mean) << ',' << format_real(r.sd) << ',' << format_real(r.q05) << ','
        << format_real(r.q50) << ',' << format_real(r.q95) << ',' << format_real(r.rhat) << ',' << format_real(r.ess)
        << '\n';
  }
}

}  // namespace srm
