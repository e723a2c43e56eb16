#ifndef SIGMAP_CONFIG_HPP
#define SIGMAP_CONFIG_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sigmap/datamodel.hpp"

namespace sigmap {

// Key=value scenario configuration. Three-layer precedence: flags override
// config, config overrides defaults. Unknown keys are errors; validation
// collects every violation before throwing.
class ScenarioConfig {
 public:
  static ScenarioConfig from_file(const std::string& path);
  static ScenarioConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);  // flag override
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  std::int64_t get_int(const std::string& key, std::int64_t def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& def) const;
  std::vector<std::size_t> get_sizes(const std::string& key,
                                     const std::vector<std::size_t>& def) const;

  // Keys matching prefix.N (N = 0,1,...), in ascending N.
  std::vector<std::string> indexed(const std::string& prefix) const;

  // Fully-resolved key=value text, sorted; written beside every run's
  // outputs.
  std::string resolved() const;
  std::string hash() const;  // FNV-1a 64 of the resolved text, hex

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  void validate_keys() const;  // throws listing every unknown key
  std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_hex(const std::string& bytes);

}  // namespace sigmap

#endif
