#include "exin/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "exin/error.hpp"

namespace exin {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::from_text(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" + t +
                        "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    c.values[key] = value;
  }
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return from_text(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string Config::get_str(const std::string& key, const std::string& def) const {
  const auto it = values.find(key);
  return it == values.end() ? def : it->second;
}

std::string Config::require_str(const std::string& key) const {
  const auto it = values.find(key);
  if (it == values.end() || it->second.empty())
    throw ConfigError("missing required key '" + key + "'");
  return it->second;
}

int64_t Config::get_int(const std::string& key, int64_t def) const {
  const auto it = values.find(key);
  if (it == values.end()) return def;
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected integer, got '" + it->second + "'");
  }
}

uint64_t Config::get_u64(const std::string& key, uint64_t def) const {
  const auto it = values.find(key);
  if (it == values.end()) return def;
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected unsigned integer, got '" + it->second + "'");
  }
}

double Config::get_double(const std::string& key, double def) const {
  const auto it = values.find(key);
  if (it == values.end()) return def;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected number, got '" + it->second + "'");
  }
}

bool Config::get_bool(const std::string& key, bool def) const {
  const auto it = values.find(key);
  if (it == values.end()) return def;
  const std::string& v = it->second;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<int> Config::get_int_list(const std::string& key, const std::vector<int>& def) const {
  const auto it = values.find(key);
  if (it == values.end()) return def;
  std::vector<int> out;
  std::istringstream in(it->second);
  std::string part;
  while (std::getline(in, part, ',')) {
    const std::string t = trim(part);
    if (t.empty()) continue;
    try {
      size_t pos = 0;
      out.push_back(std::stoi(t, &pos));
      if (pos != t.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected comma-separated integers, got '" +
                        it->second + "'");
    }
  }
  return out;
}

std::vector<std::string> Config::get_str_list(const std::string& key,
                                              const std::vector<std::string>& def) const {
  const auto it = values.find(key);
  if (it == values.end()) return def;
  std::vector<std::string> out;
  std::istringstream in(it->second);
  std::string part;
  while (std::getline(in, part, ',')) {
    const std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

void Config::check_keys(const std::set<std::string>& allowed) const {
  for (const auto& [key, value] : values)
    if (allowed.count(key) == 0) throw ConfigError("unknown config key '" + key + "'");
}

std::string Config::effective_text() const {
  std::string out;
  for (const auto& [key, value] : values) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  }
  return out;
}

std::string resolve_out_dir(const std::string& path) {
  if (path.empty()) throw ConfigError("empty output directory");
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  const char* root = std::getenv("EXIN_OUT_ROOT");
  if (root == nullptr || *root == '\0') return path;
  return (std::filesystem::path(root) / p).string();
}

}  // namespace exin
