#include "propel/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

#include "propel/csv.hpp"
#include "propel/errors.hpp"

namespace propel {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace((unsigned char)s[a])) ++a;
  while (b > a && std::isspace((unsigned char)s[b - 1])) --b;
  return s.substr(a, b - a);
}

}  // namespace

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

RunConfig RunConfig::from_file(const std::string& path) {
  return from_text(read_text_file(path), path);
}

RunConfig RunConfig::from_text(const std::string& text,
                               const std::string& origin) {
  RunConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t h = line.find('#');
    if (h != std::string::npos) line = line.substr(0, h);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.raw_[key] = value;
  }
  return cfg;
}

void RunConfig::apply_override(const std::string& kv) {
  size_t eq = kv.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must be KEY=VALUE, got '" + kv + "'");
  std::string key = trim(kv.substr(0, eq));
  if (key.empty()) throw ConfigError("override with empty key: '" + kv + "'");
  raw_[key] = trim(kv.substr(eq + 1));
}

bool RunConfig::has(const std::string& key) const { return raw_.count(key) > 0; }

std::string RunConfig::raw_or_default(const std::string& key,
                                      const std::string& def, bool* from_file) {
  auto it = raw_.find(key);
  *from_file = it != raw_.end();
  return *from_file ? it->second : def;
}

std::string RunConfig::get_string(const std::string& key,
                                  const std::string& def) {
  bool set = false;
  std::string v = raw_or_default(key, def, &set);
  resolved_[key] = v;
  return v;
}

double RunConfig::get_double(const std::string& key, double def) {
  bool set = false;
  std::string v = raw_or_default(key, format_double(def), &set);
  resolved_[key] = v;
  const char* s = v.c_str();
  char* end = nullptr;
  double parsed = std::strtod(s, &end);
  if (v.empty() || end != s + v.size())
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return parsed;
}

int RunConfig::get_int(const std::string& key, int def) {
  bool set = false;
  std::string v = raw_or_default(key, std::to_string(def), &set);
  resolved_[key] = v;
  const char* s = v.c_str();
  char* end = nullptr;
  long parsed = std::strtol(s, &end, 10);
  if (v.empty() || end != s + v.size())
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  return (int)parsed;
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t def) {
  bool set = false;
  std::string v = raw_or_default(key, std::to_string(def), &set);
  resolved_[key] = v;
  const char* s = v.c_str();
  char* end = nullptr;
  unsigned long long parsed = std::strtoull(s, &end, 10);
  if (v.empty() || end != s + v.size())
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" +
                      v + "'");
  return (std::uint64_t)parsed;
}

bool RunConfig::get_bool(const std::string& key, bool def) {
  bool set = false;
  std::string v = raw_or_default(key, def ? "true" : "false", &set);
  resolved_[key] = v;
  std::string low = v;
  std::transform(low.begin(), low.end(), low.begin(), ::tolower);
  if (low == "true" || low == "1" || low == "yes") return true;
  if (low == "false" || low == "0" || low == "no") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<double> RunConfig::get_list(const std::string& key,
                                        const std::vector<double>& def) {
  std::string def_str;
  for (size_t i = 0; i < def.size(); ++i)
    def_str += (i ? "," : "") + format_double(def[i]);
  bool set = false;
  std::string v = raw_or_default(key, def_str, &set);
  resolved_[key] = v;
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (const std::string& part : split_list(v)) {
    const char* s = part.c_str();
    char* end = nullptr;
    double parsed = std::strtod(s, &end);
    if (part.empty() || end != s + part.size())
      throw ConfigError("key '" + key + "': bad list element '" + part + "'");
    out.push_back(parsed);
  }
  return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& key,
                                         const std::vector<int>& def) {
  std::string def_str;
  for (size_t i = 0; i < def.size(); ++i)
    def_str += (i ? "," : "") + std::to_string(def[i]);
  bool set = false;
  std::string v = raw_or_default(key, def_str, &set);
  resolved_[key] = v;
  std::vector<int> out;
  if (trim(v).empty()) return out;
  for (const std::string& part : split_list(v)) {
    const char* s = part.c_str();
    char* end = nullptr;
    long parsed = std::strtol(s, &end, 10);
    if (part.empty() || end != s + part.size())
      throw ConfigError("key '" + key + "': bad list element '" + part + "'");
    out.push_back((int)parsed);
  }
  return out;
}

void RunConfig::finish() const {
  for (const auto& [key, value] : raw_) {
    if (!resolved_.count(key))
      throw ConfigError("unknown key '" + key + "' in " + origin_);
  }
}

std::string RunConfig::resolved_copy() const {
  std::ostringstream out;
  out << "# resolved configuration\n";
  for (const auto& [key, value] : resolved_) out << key << "=" << value << "\n";
  return out.str();
}

}  // namespace propel
