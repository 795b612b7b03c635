#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgtlab {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Schema-checked reader over a JSON object: unknown keys and out-of-range
// values are fatal, errors name the offending key.
class ConfigReader {
 public:
  ConfigReader(const std::string& json_text, std::set<std::string> allowed_keys);
  ~ConfigReader();
  ConfigReader(ConfigReader&&) noexcept;

  double number(const std::string& key, double def, double lo, double hi) const;
  int integer(const std::string& key, int def, int lo, int hi) const;
  int64_t integer64(const std::string& key, int64_t def, int64_t lo, int64_t hi) const;
  uint64_t unsigned64(const std::string& key, uint64_t def) const;
  bool flag(const std::string& key, bool def) const;
  std::string choice(const std::string& key, const std::string& def,
                     const std::vector<std::string>& allowed) const;
  std::vector<std::string> string_list(const std::string& key) const;
  std::vector<int> int_list(const std::string& key, const std::vector<int>& def) const;
  bool has(const std::string& key) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sgtlab
