#pragma once

// Flat INI-style config: `[section]` headers, `key = value` lines, `#` or `;`
// comments. Sections may repeat (curation profiles list one [filter] per
// axis), so they are kept in file order rather than merged.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vidcurate/error.hpp"

namespace vidcurate {

struct ConfigSection {
  std::string name;
  std::size_t line = 0;
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(std::string_view key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace config_detail

class Config {
 public:
  static Config parse(std::istream& in, const std::string& origin = "<config>") {
    Config cfg;
    std::string raw;
    std::size_t lineno = 0;
    // Keys before any header land in an unnamed section.
    cfg.sections_.push_back({"", 0, {}});
    while (std::getline(in, raw)) {
      ++lineno;
      const std::string line = config_detail::trim(raw);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
        cfg.sections_.push_back({config_detail::trim(std::string_view(line).substr(1, line.size() - 2)), lineno, {}});
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      std::string key = config_detail::trim(std::string_view(line).substr(0, eq));
      std::string val = config_detail::trim(std::string_view(line).substr(eq + 1));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      auto& sec = cfg.sections_.back();
      if (sec.find(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      sec.entries.emplace_back(std::move(key), std::move(val));
    }
    cfg.origin_ = origin;
    return cfg;
  }

  static Config parse_string(const std::string& text, const std::string& origin = "<config>") {
    std::istringstream in(text);
    return parse(in, origin);
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse(in, path.string());
  }

  const std::vector<ConfigSection>& sections() const noexcept { return sections_; }

  std::vector<const ConfigSection*> all(std::string_view name) const {
    std::vector<const ConfigSection*> out;
    for (const auto& s : sections_)
      if (s.name == name) out.push_back(&s);
    return out;
  }

  // Last occurrence wins so a later file section can override an earlier one.
  std::optional<std::string> get(std::string_view section, std::string_view key) const {
    std::optional<std::string> out;
    for (const auto& s : sections_)
      if (s.name == section)
        if (const auto* v = s.find(key)) out = *v;
    return out;
  }

  std::string get_string(std::string_view section, std::string_view key, std::string def) const {
    auto v = get(section, key);
    return v ? *v : std::move(def);
  }

  double get_double(std::string_view section, std::string_view key, double def) const {
    const auto v = get(section, key);
    return v ? to_double(*v, section, key) : def;
  }

  long long get_int(std::string_view section, std::string_view key, long long def) const {
    const auto v = get(section, key);
    if (!v) return def;
    long long out = 0;
    const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || p != v->data() + v->size())
      throw ConfigError(origin_ + ": [" + std::string(section) + "] " + std::string(key) + " is not an integer: " + *v);
    return out;
  }

  bool get_bool(std::string_view section, std::string_view key, bool def) const {
    const auto v = get(section, key);
    if (!v) return def;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError(origin_ + ": [" + std::string(section) + "] " + std::string(key) + " is not a boolean: " + *v);
  }

  double to_double(const std::string& v, std::string_view section, std::string_view key) const {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError(origin_ + ": [" + std::string(section) + "] " + std::string(key) + " is not a number: " + v);
  }

  const std::string& origin() const noexcept { return origin_; }

 private:
  std::vector<ConfigSection> sections_;
  std::string origin_;
};

}  // namespace vidcurate
