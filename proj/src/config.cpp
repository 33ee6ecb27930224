#include "ml2sls/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace ml2sls {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "dgp",         "n",
      "iterations",  "estimators",
      "seed",        "violation_k",
      "violation_scale", "nn_family",
      "nn_iterations", "nn_full",
      "workers",     "mu2",
      "rho_eps",     "literal_sigma_v",
      "post_lasso_plug_in", "fuller_alpha",
      "ssiv_swap_and_average", "pca_cum_var",
      "hist_bins",   "hist_lo",
      "hist_hi",     "timing"};
  return keys;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + value + "'");
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  }
}

}  // namespace

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

KvMap read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  KvMap kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

CampaignConfig build_campaign_config(const KvMap& file_kv, const KvMap& flag_kv,
                                     std::vector<std::string>* log) {
  // Reject unknown keys up front so typos cannot silently fall back to
  // defaults.
  std::vector<std::string> unknown;
  for (const auto& [key, value] : file_kv) {
    (void)value;
    if (known_keys().count(key) == 0) unknown.push_back(key);
  }
  for (const auto& [key, value] : flag_kv) {
    (void)value;
    if (known_keys().count(key) == 0) unknown.push_back(key);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown configuration key(s):";
    for (const auto& k : unknown) msg += " '" + k + "'";
    throw ConfigError(msg);
  }

  KvMap merged = file_kv;
  for (const auto& [key, value] : flag_kv) {
    if (merged.count(key) != 0 && merged[key] != value && log != nullptr) {
      log->push_back("flag overrides config file: " + key + "=" + value +
                     " (file had " + merged[key] + ")");
    }
    merged[key] = value;
  }

  std::vector<std::string> missing;
  for (const char* req : {"dgp", "seed"}) {
    if (merged.count(req) == 0) missing.emplace_back(req);
  }
  if (!missing.empty()) {
    std::string msg = "missing required configuration key(s):";
    for (const auto& k : missing) msg += " '" + k + "'";
    throw ConfigError(msg);
  }

  CampaignConfig cfg;
  cfg.dgp = dgp_from_name(merged.at("dgp"));
  cfg.master_seed = static_cast<std::uint64_t>(parse_int("seed", merged.at("seed")));
  if (merged.count("n")) cfg.n = static_cast<int>(parse_int("n", merged.at("n")));
  if (merged.count("iterations")) {
    cfg.iterations = static_cast<int>(parse_int("iterations", merged.at("iterations")));
  }
  if (merged.count("estimators")) {
    cfg.estimators = split_list(merged.at("estimators"));
    if (cfg.estimators.empty()) throw ConfigError("estimator list is empty");
    for (const auto& tag : cfg.estimators) {
      const auto& all = all_estimator_tags();
      if (std::find(all.begin(), all.end(), tag) == all.end()) {
        throw ConfigError("unknown estimator: " + tag);
      }
    }
  }
  const bool has_k = merged.count("violation_k") != 0;
  const bool has_scale = merged.count("violation_scale") != 0;
  if (has_k || has_scale) {
    ViolationSpec v;
    if (has_k) v.k = static_cast<int>(parse_int("violation_k", merged.at("violation_k")));
    if (has_scale) v.scale = parse_real("violation_scale", merged.at("violation_scale"));
    cfg.violation = v;
  }
  if (merged.count("nn_family")) cfg.nn_family = family_from_name(merged.at("nn_family"));
  if (merged.count("nn_iterations")) {
    cfg.nn_iterations =
        static_cast<int>(parse_int("nn_iterations", merged.at("nn_iterations")));
  }
  if (merged.count("nn_full")) cfg.nn_full = parse_bool("nn_full", merged.at("nn_full"));
  if (merged.count("workers")) {
    cfg.workers = static_cast<int>(parse_int("workers", merged.at("workers")));
  }
  if (merged.count("mu2")) cfg.mu2 = parse_real("mu2", merged.at("mu2"));
  if (merged.count("rho_eps")) cfg.rho_eps = parse_real("rho_eps", merged.at("rho_eps"));
  if (merged.count("literal_sigma_v")) {
    cfg.literal_sigma_v = parse_bool("literal_sigma_v", merged.at("literal_sigma_v"));
  }
  if (merged.count("post_lasso_plug_in")) {
    cfg.post_lasso_plug_in = parse_bool("post_lasso_plug_in", merged.at("post_lasso_plug_in"));
  }
  if (merged.count("fuller_alpha")) {
    cfg.fuller_alpha = parse_real("fuller_alpha", merged.at("fuller_alpha"));
  }
  if (merged.count("ssiv_swap_and_average")) {
    cfg.ssiv_swap_and_average =
        parse_bool("ssiv_swap_and_average", merged.at("ssiv_swap_and_average"));
  }
  if (merged.count("pca_cum_var")) {
    cfg.pca_cum_var = parse_real("pca_cum_var", merged.at("pca_cum_var"));
  }
  if (merged.count("hist_bins")) {
    cfg.hist_bins = static_cast<int>(parse_int("hist_bins", merged.at("hist_bins")));
  }
  if (merged.count("hist_lo")) cfg.hist_lo = parse_real("hist_lo", merged.at("hist_lo"));
  if (merged.count("hist_hi")) cfg.hist_hi = parse_real("hist_hi", merged.at("hist_hi"));
  if (merged.count("timing")) cfg.timing = parse_bool("timing", merged.at("timing"));

  if (cfg.iterations < 1) throw ConfigError("iterations must be at least 1");
  if (cfg.hist_bins < 1) throw ConfigError("hist_bins must be at least 1");
  if (!(cfg.hist_hi > cfg.hist_lo)) throw ConfigError("hist_hi must exceed hist_lo");
  return cfg;
}

KvMap config_echo(const CampaignConfig& cfg) {
  KvMap kv;
  kv["dgp"] = dgp_name(cfg.dgp);
  kv["n"] = std::to_string(cfg.n);
  kv["iterations"] = std::to_string(cfg.iterations);
  std::string est;
  for (const auto& tag : cfg.estimators) {
    if (!est.empty()) est += ",";
    est += tag;
  }
  kv["estimators"] = est;
  kv["seed"] = std::to_string(cfg.master_seed);
  if (cfg.violation) {
    kv["violation_k"] = std::to_string(cfg.violation->k);
    kv["violation_scale"] = format_double(cfg.violation->scale);
  }
  kv["nn_family"] = family_name(cfg.nn_family);
  kv["nn_iterations"] = std::to_string(cfg.nn_iterations);
  kv["nn_full"] = cfg.nn_full ? "1" : "0";
  kv["mu2"] = format_double(cfg.mu2);
  kv["rho_eps"] = format_double(cfg.rho_eps);
  kv["literal_sigma_v"] = cfg.literal_sigma_v ? "1" : "0";
  kv["post_lasso_plug_in"] = cfg.post_lasso_plug_in ? "1" : "0";
  kv["fuller_alpha"] = format_double(cfg.fuller_alpha);
  kv["ssiv_swap_and_average"] = cfg.ssiv_swap_and_average ? "1" : "0";
  kv["pca_cum_var"] = format_double(cfg.pca_cum_var);
  kv["hist_bins"] = std::to_string(cfg.hist_bins);
  kv["hist_lo"] = format_double(cfg.hist_lo);
  kv["hist_hi"] = format_double(cfg.hist_hi);
  kv["timing"] = cfg.timing ? "1" : "0";
  return kv;
}

}  // namespace ml2sls
