#pragma once

// Declarative experiment config: a small TOML subset.
//
//   # comment
//   seed = 7
//   [data]
//   source = "synthetic"
//   families = ["gvar", "mimo_gvar"]
//
// Keys are flattened to "section.key". Values are strings (quoted or bare),
// numbers, booleans or one-line lists of those.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "graphvar/error.hpp"

namespace graphvar {

class Config {
 public:
  struct Value {
    std::vector<std::string> items;
    bool list = false;
  };

  static Config parse(std::istream& in, const std::string& source = "<config>") {
    Config cfg;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string text = trim(strip_comment(line));
      if (text.empty()) continue;
      auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
      if (text.front() == '[') {
        require(text.back() == ']' && text.size() > 2, ErrorCode::Parse, where() + "bad section header");
        section = trim(text.substr(1, text.size() - 2));
        require(valid_name(section), ErrorCode::Parse, where() + "bad section name '" + section + "'");
        continue;
      }
      const auto eq = text.find('=');
      require(eq != std::string::npos, ErrorCode::Parse, where() + "expected 'key = value'");
      const std::string key = trim(text.substr(0, eq));
      require(valid_name(key), ErrorCode::Parse, where() + "bad key '" + key + "'");
      const std::string full = section.empty() ? key : section + "." + key;
      require(!cfg.values_.count(full), ErrorCode::Parse, where() + "duplicate key '" + full + "'");
      try {
        cfg.values_[full] = parse_value(trim(text.substr(eq + 1)));
      } catch (const Error& e) {
        throw Error(ErrorCode::Parse, where() + e.what());
      }
    }
    return cfg;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(bool(in), ErrorCode::Io, "cannot open config " + path.string());
    Config cfg = parse(in, path.string());
    cfg.base_dir_ = path.parent_path();
    return cfg;
  }

  /// Applies a "section.key=value" override.
  void set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos, ErrorCode::Parse, "override must look like key=value: " + assignment);
    const std::string key = trim(assignment.substr(0, eq));
    require(!key.empty(), ErrorCode::Parse, "override has an empty key");
    values_[key] = parse_value(trim(assignment.substr(eq + 1)));
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback = "") const {
    const Value* v = scalar(key);
    return v ? v->items.front() : fallback;
  }

  double get_double(const std::string& key, double fallback) const {
    const Value* v = scalar(key);
    if (!v) return fallback;
    return to_double(key, v->items.front());
  }

  long long get_int(const std::string& key, long long fallback) const {
    const Value* v = scalar(key);
    if (!v) return fallback;
    const std::string& s = v->items.front();
    try {
      std::size_t used = 0;
      const long long out = std::stoll(s, &used);
      if (used == s.size()) return out;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::Parse, "config key '" + key + "' must be an integer, got '" + s + "'");
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const Value* v = scalar(key);
    if (!v) return fallback;
    const std::string& s = v->items.front();
    if (s == "true") return true;
    if (s == "false") return false;
    throw Error(ErrorCode::Parse, "config key '" + key + "' must be true or false, got '" + s + "'");
  }

  /// A scalar reads as a one-element list.
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback = {}) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second.items;
  }

  std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback = {}) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto& s : get_list(key)) out.push_back(to_double(key, s));
    return out;
  }

  /// Resolves a path value against the directory of the loaded config file.
  std::filesystem::path get_path(const std::string& key, const std::filesystem::path& fallback = {}) const {
    std::filesystem::path p = has(key) ? std::filesystem::path(get_string(key)) : fallback;
    if (p.empty() || p.is_absolute()) return p;
    return (base_dir_ / p).lexically_normal();
  }

  void reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [k, v] : values_)
      require(known.count(k) > 0, ErrorCode::Parse, "unknown config key '" + k + "'");
  }

  /// Sorted, normalized key = value lines; the basis of the config hash.
  std::string canonical() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) {
      os << k << " = ";
      if (v.list) os << '[';
      for (std::size_t i = 0; i < v.items.size(); ++i) os << (i ? ", " : "") << '"' << v.items[i] << '"';
      if (v.list) os << ']';
      os << '\n';
    }
    return os.str();
  }

  const std::filesystem::path& base_dir() const noexcept { return base_dir_; }
  void set_base_dir(std::filesystem::path p) { base_dir_ = std::move(p); }

 private:
  const Value* scalar(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    require(!it->second.list && it->second.items.size() == 1, ErrorCode::Parse,
            "config key '" + key + "' must be a single value, not a list");
    return &it->second;
  }

  static double to_double(const std::string& key, const std::string& s) {
    try {
      std::size_t used = 0;
      const double out = std::stod(s, &used);
      if (used == s.size()) return out;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::Parse, "config key '" + key + "' must be a number, got '" + s + "'");
  }

  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.' && c != '-') return false;
    return true;
  }

  static std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"') {
      require(s.back() == '"', ErrorCode::Parse, "unterminated string");
      return s.substr(1, s.size() - 2);
    }
    require(s.find('"') == std::string::npos, ErrorCode::Parse, "stray quote in value");
    return s;
  }

  static Value parse_value(const std::string& text) {
    require(!text.empty(), ErrorCode::Parse, "missing value");
    Value v;
    if (text.front() != '[') {
      v.items.push_back(unquote(text));
      return v;
    }
    require(text.back() == ']', ErrorCode::Parse, "unterminated list");
    v.list = true;
    const std::string body = trim(text.substr(1, text.size() - 2));
    if (body.empty()) return v;
    std::string cur;
    bool quoted = false;
    for (char c : body) {
      if (c == '"') quoted = !quoted;
      if (c == ',' && !quoted) {
        v.items.push_back(unquote(trim(cur)));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    require(!quoted, ErrorCode::Parse, "unterminated string in list");
    v.items.push_back(unquote(trim(cur)));
    for (const auto& item : v.items) require(!item.empty(), ErrorCode::Parse, "empty list item");
    return v;
  }

  std::map<std::string, Value> values_;
  std::filesystem::path base_dir_;
};

}  // namespace graphvar
