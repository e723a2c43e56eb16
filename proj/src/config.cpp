#include "sigmap/config.hpp"

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sigmap {

namespace {

// Exact known keys and indexed-key prefixes. A typo'd key must fail loudly.
const char* kKnownKeys[] = {
    "dataset.source",      "dataset.file",       "dataset.label",
    "dataset.features",    "granularity",        "out",
    "seed",                "seeds",              "threads",
    "split",               "synth.origin.lat",   "synth.origin.lng",
    "synth.area_m",        "synth.shadow_sigma_db", "synth.d0_m",
    "synth.samples",       "synth.sampling",     "synth.road.sigma_m",
    "synth.road.mass",     "synth.time.weekdays", "synth.time.hours",
    "forest.trees",        "forest.max_depth",   "forest.min_samples_leaf",
    "forest.max_features", "grid.trees",         "grid.max_depth",
    "quality",             "cdp.anchor1.y",      "cdp.anchor1.p",
    "cdp.anchor2.y",       "cdp.anchor2.p",      "cdp.c",
    "target",              "population.file",    "kde.mode",
    "kde.h_m",             "kde.pilot_h_m",      "kde.alpha",
    "kde.h_hours",         "kde.pilot_grid",     "shapley.convergence_tol",
    "shapley.window",      "shapley.max_iter_factor", "shapley.relaxed_tol",
    "shapley.truncation_tol", "shapley.metric",  "shapley.batch_frac",
    "shapley.learner_trees", "shapley.learner_depth",
    "corrupt.fraction",    "corrupt.magnitude_db", "ldpl.p0_dbm",
    "ldpl.knn_k",          "kriging.max_lag_m",  "kriging.bin_width_m",
    "kriging.k",
};

const char* kIndexedPrefixes[] = {
    "synth.station.",  // lat,lng,p0[,mcc,mnc,tac,ci]
    "synth.ple.",      // lat,lng,n
    "synth.hotspot.",  // lat,lng,sigma_m,mass
    "synth.road.",     // lat,lng,lat,lng,... (numeric suffix only)
};

bool is_known(const std::string& key) {
  for (const char* k : kKnownKeys)
    if (key == k) return true;
  for (const char* p : kIndexedPrefixes) {
    std::string prefix(p);
    if (key.size() > prefix.size() && key.compare(0, prefix.size(), prefix) == 0) {
      std::string suffix = key.substr(prefix.size());
      bool numeric = !suffix.empty();
      for (char c : suffix)
        if (!std::isdigit(static_cast<unsigned char>(c))) numeric = false;
      if (numeric) return true;
    }
  }
  return false;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fnv1a64_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(bytes));
  return buf;
}

ScenarioConfig ScenarioConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

ScenarioConfig ScenarioConfig::from_string(const std::string& text) {
  ScenarioConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineNo = 0;
  std::vector<std::string> errors;
  while (std::getline(in, line)) {
    ++lineNo;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineNo) + ": missing '='");
      continue;
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (!is_known(key)) {
      errors.push_back("line " + std::to_string(lineNo) + ": unknown key '" +
                       key + "'");
      continue;
    }
    cfg.values_[key] = value;
  }
  if (!errors.empty()) {
    std::string msg = "config validation failed:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw Error(msg);
  }
  return cfg;
}

void ScenarioConfig::set(const std::string& key, const std::string& value) {
  if (!is_known(key)) throw Error("config: unknown key '" + key + "'");
  values_[key] = value;
}

bool ScenarioConfig::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string ScenarioConfig::get_str(const std::string& key,
                                    const std::string& def) const {
  auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

double ScenarioConfig::get_double(const std::string& key, double def) const {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw Error("config: key '" + key + "' is not a number: " + it->second);
  }
}

std::int64_t ScenarioConfig::get_int(const std::string& key, std::int64_t def) const {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  try {
    return std::stoll(it->second);
  } catch (...) {
    throw Error("config: key '" + key + "' is not an integer: " + it->second);
  }
}

std::uint64_t ScenarioConfig::get_u64(const std::string& key, std::uint64_t def) const {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  try {
    return std::stoull(it->second);
  } catch (...) {
    throw Error("config: key '" + key + "' is not an integer: " + it->second);
  }
}

std::vector<double> ScenarioConfig::get_doubles(
    const std::string& key, const std::vector<double>& def) const {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  std::vector<double> out;
  std::istringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (...) {
      throw Error("config: key '" + key + "' has non-numeric entry: " + tok);
    }
  }
  return out;
}

std::vector<std::size_t> ScenarioConfig::get_sizes(
    const std::string& key, const std::vector<std::size_t>& def) const {
  std::vector<double> d = get_doubles(key, {});
  if (d.empty()) return def;
  std::vector<std::size_t> out;
  for (double v : d) out.push_back(static_cast<std::size_t>(v));
  return out;
}

std::vector<std::string> ScenarioConfig::indexed(const std::string& prefix) const {
  std::vector<std::pair<int, std::string>> found;
  for (const auto& [k, v] : values_) {
    if (k.size() > prefix.size() && k.compare(0, prefix.size(), prefix) == 0) {
      std::string suffix = k.substr(prefix.size());
      bool numeric = !suffix.empty();
      for (char c : suffix)
        if (!std::isdigit(static_cast<unsigned char>(c))) numeric = false;
      if (numeric) found.emplace_back(std::stoi(suffix), v);
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (auto& [i, v] : found) out.push_back(std::move(v));
  return out;
}

std::string ScenarioConfig::resolved() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

std::string ScenarioConfig::hash() const {
  // Execution-environment keys do not affect results and must not perturb
  // the hash: a rerun into a different directory or with a different worker
  // cap yields the same numbers.
  std::ostringstream out;
  for (const auto& [k, v] : values_)
    if (k != "out" && k != "threads") out << k << " = " << v << "\n";
  return fnv1a64_hex(out.str());
}

}  // namespace sigmap
