#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace evi {

// Flat key-value run configuration: one `section.key = value` per line,
// `#` starts a comment, list values are whitespace-separated tokens.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text,
                                     const std::string& origin = "<string>");

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  long long get_int64(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  std::vector<double> fallback) const;
  std::vector<int> get_ints(const std::string& key,
                            std::vector<int> fallback) const;
  std::vector<std::string> get_strings(
      const std::string& key, std::vector<std::string> fallback) const;

  // Keys present in the file but never read; used to reject typos.
  std::vector<std::string> unconsumed_keys() const;

  void set(const std::string& key, const std::string& value);

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;

  const std::string* find(const std::string& key) const;
};

}  // namespace evi
