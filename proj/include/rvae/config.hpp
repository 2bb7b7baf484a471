#pragma once

// Line-oriented "key = value" files. '#' starts a comment, "[name]" opens a
// section; keys inside a section are addressed as "name.key". Used for run
// configs, dataset manifests and resolved-config echoes.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rvae/errors.hpp"

namespace rvae {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text, const std::string& origin = "<string>") {
    Config c;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      std::string_view line =
          text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) {
        line = line.substr(0, hash);
      }
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto where = origin + ":" + std::to_string(line_no);
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3) {
          throw ConfigError(where + ": malformed section header '" + std::string(line) + "'");
        }
        section = std::string(detail::trim(line.substr(1, line.size() - 2)));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(where + ": expected 'key = value', got '" + std::string(line) + "'");
      }
      const auto key = detail::trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(where + ": empty key");
      const auto value = detail::trim(line.substr(eq + 1));
      c.set(section.empty() ? std::string(key) : section + "." + std::string(key),
            std::string(value));
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void erase(const std::string& key) { values_.erase(key); }

  /// Applies "key=value" overrides on top of this config.
  void merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  std::string get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required key '" + key + "'");
    return it->second;
  }
  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? to_double(key, get(key)) : fallback;
  }
  double get_double(const std::string& key) const { return to_double(key, get(key)); }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? to_int(key, get(key)) : fallback;
  }
  std::int64_t get_int(const std::string& key) const { return to_int(key, get(key)); }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    const auto v = get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError("key '" + key + "' must be non-negative");
    return static_cast<std::uint64_t>(v);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "' expects a boolean, got '" + v + "'");
  }

  /// Comma-separated list of reals.
  std::vector<double> get_doubles(const std::string& key) const {
    std::vector<double> out;
    const auto raw = get(key);
    std::string_view rest = raw;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto item = detail::trim(rest.substr(0, comma));
      if (!item.empty()) out.push_back(to_double(key, std::string(item)));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return out;
  }

  /// Comma-separated list of strings.
  std::vector<std::string> get_strings(const std::string& key) const {
    std::vector<std::string> out;
    const auto raw = get(key);
    std::string_view rest = raw;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto item = detail::trim(rest.substr(0, comma));
      if (!item.empty()) out.emplace_back(item);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return out;
  }

  /// Throws ConfigError naming the first key not in `allowed`.
  void require_known(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : values_) {
      if (!allowed.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }
  }

  /// Keys under "prefix." with the prefix stripped.
  Config section(const std::string& prefix) const {
    Config out;
    const auto p = prefix + ".";
    for (const auto& [k, v] : values_) {
      if (k.rfind(p, 0) == 0) out.values_[k.substr(p.size())] = v;
    }
    return out;
  }

  /// Serializes back to the file format, grouping dotted keys into sections.
  std::string dump() const {
    std::ostringstream os;
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> grouped;
    for (const auto& [k, v] : values_) {
      const auto dot = k.find('.');
      if (dot == std::string::npos) {
        os << k << " = " << v << '\n';
      } else {
        grouped[k.substr(0, dot)].emplace_back(k.substr(dot + 1), v);
      }
    }
    for (const auto& [sec, kvs] : grouped) {
      os << "\n[" << sec << "]\n";
      for (const auto& [k, v] : kvs) os << k << " = " << v << '\n';
    }
    return os.str();
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  friend bool operator==(const Config&, const Config&) = default;

 private:
  static double to_double(const std::string& key, const std::string& v) {
    double d = 0.0;
    const auto* end = v.data() + v.size();
    const auto* begin = v.data() + (!v.empty() && v.front() == '+' ? 1 : 0);
    const auto [ptr, ec] = std::from_chars(begin, end, d);
    if (ec == std::errc() && ptr == end && !v.empty()) return d;
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }

  static std::int64_t to_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) {
      throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
    }
    return out;
  }

  std::map<std::string, std::string> values_;
};

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace rvae
