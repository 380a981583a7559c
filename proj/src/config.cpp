#include "evi/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "evi/errors.hpp"

namespace evi {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) {
    ++begin;
  }
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) {
    --end;
  }
  return s.substr(begin, end - begin);
}

double parse_double_token(const std::string& key, const std::string& token) {
  char* end = nullptr;
  const double value = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') {
    throw ConfigError(key + ": expected a number, got '" + token + "'");
  }
  return value;
}

std::vector<std::string> split_tokens(const std::string& value) {
  std::vector<std::string> tokens;
  std::istringstream in(value);
  std::string token;
  while (in >> token) tokens.push_back(token);
  return tokens;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str(), path);
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text,
                                            const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": empty key");
    }
    if (cfg.values_.count(key) != 0) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

const std::string* KeyValueConfig::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  consumed_.insert(key);
  return &it->second;
}

bool KeyValueConfig::has(const std::string& key) const {
  return find(key) != nullptr;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  const std::string* v = find(key);
  return v == nullptr ? fallback : *v;
}

double KeyValueConfig::get_double(const std::string& key,
                                  double fallback) const {
  const std::string* v = find(key);
  if (v == nullptr) return fallback;
  return parse_double_token(key, *v);
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  const double value = get_double(key, static_cast<double>(fallback));
  const int as_int = static_cast<int>(value);
  if (static_cast<double>(as_int) != value) {
    throw ConfigError(key + ": expected an integer");
  }
  return as_int;
}

long long KeyValueConfig::get_int64(const std::string& key,
                                    long long fallback) const {
  const double value = get_double(key, static_cast<double>(fallback));
  const long long as_int = static_cast<long long>(value);
  if (static_cast<double>(as_int) != value) {
    throw ConfigError(key + ": expected an integer");
  }
  return as_int;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (v == nullptr) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + *v + "'");
}

std::vector<double> KeyValueConfig::get_doubles(
    const std::string& key, std::vector<double> fallback) const {
  const std::string* v = find(key);
  if (v == nullptr) return fallback;
  std::vector<double> out;
  for (const std::string& token : split_tokens(*v)) {
    out.push_back(parse_double_token(key, token));
  }
  if (out.empty()) throw ConfigError(key + ": expected at least one number");
  return out;
}

std::vector<int> KeyValueConfig::get_ints(const std::string& key,
                                          std::vector<int> fallback) const {
  const std::string* v = find(key);
  if (v == nullptr) return fallback;
  std::vector<int> out;
  for (const std::string& token : split_tokens(*v)) {
    const double value = parse_double_token(key, token);
    const int as_int = static_cast<int>(value);
    if (static_cast<double>(as_int) != value) {
      throw ConfigError(key + ": expected integers");
    }
    out.push_back(as_int);
  }
  if (out.empty()) throw ConfigError(key + ": expected at least one integer");
  return out;
}

std::vector<std::string> KeyValueConfig::get_strings(
    const std::string& key, std::vector<std::string> fallback) const {
  const std::string* v = find(key);
  if (v == nullptr) return fallback;
  std::vector<std::string> out = split_tokens(*v);
  if (out.empty()) throw ConfigError(key + ": expected at least one token");
  return out;
}

std::vector<std::string> KeyValueConfig::unconsumed_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_) {
    if (consumed_.count(key) == 0) out.push_back(key);
  }
  return out;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

}  // namespace evi
