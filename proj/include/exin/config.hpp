#pragma once
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace exin {

// Flat key=value configuration. Files hold one `key = value` pair per line
// ('#' comments, blank lines allowed); command-line overrides are applied on
// top, last writer wins. The effective (merged) config is echoed into every
// artifact so runs are self-describing.
struct Config {
  std::map<std::string, std::string> values;

  static Config from_file(const std::string& path);  // IoError / ConfigError
  static Config from_text(const std::string& text);  // ConfigError on bad lines

  void set(const std::string& key, const std::string& value) { values[key] = value; }
  bool has(const std::string& key) const { return values.count(key) != 0; }

  // typed getters; ConfigError when present but unparseable
  std::string get_str(const std::string& key, const std::string& def) const;
  std::string require_str(const std::string& key) const;  // ConfigError when absent
  int64_t get_int(const std::string& key, int64_t def) const;
  uint64_t get_u64(const std::string& key, uint64_t def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;  // true/false/1/0
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& def) const;
  std::vector<std::string> get_str_list(const std::string& key,
                                        const std::vector<std::string>& def) const;

  // ConfigError when a key is not in `allowed` (unknown keys are mistakes,
  // not extensions)
  void check_keys(const std::set<std::string>& allowed) const;

  std::string effective_text() const;  // sorted "key=value" lines
};

// Resolve an output directory: absolute paths pass through; relative paths
// are rooted at $EXIN_OUT_ROOT when that variable is set.
std::string resolve_out_dir(const std::string& path);

}  // namespace exin
