#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace propel {

// Flat key=value run configuration: plain-text file ("#" comments) plus
// command-line overrides. Typed getters record the effective value of every
// key they resolve; finish() rejects any key that no getter consumed, and
// resolved_copy() renders the full effective configuration (defaults
// included) so a run directory can be replayed exactly.
class RunConfig {
 public:
  RunConfig() = default;
  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text, const std::string& origin);

  void apply_override(const std::string& key_eq_value);  // "key=value"

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& def);
  double get_double(const std::string& key, double def);
  int get_int(const std::string& key, int def);
  std::uint64_t get_u64(const std::string& key, std::uint64_t def);
  bool get_bool(const std::string& key, bool def);
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& def);
  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& def);

  // Throws ConfigError naming the first key that was set but never read.
  void finish() const;

  std::string resolved_copy() const;  // sorted "key=value" lines

 private:
  std::string raw_or_default(const std::string& key, const std::string& def,
                             bool* from_file);
  std::map<std::string, std::string> raw_;
  mutable std::map<std::string, std::string> resolved_;
  std::string origin_ = "<none>";
};

std::vector<std::string> split_list(const std::string& text, char sep = ',');

}  // namespace propel
