#include "sgtlab/config.hpp"

#include <algorithm>

#include "json.hpp"

namespace sgtlab {

using nlohmann::json;

struct ConfigReader::Impl {
  json doc;
};

ConfigReader::ConfigReader(const std::string& json_text, std::set<std::string> allowed_keys)
    : impl_(new Impl) {
  impl_->doc = json::parse(json_text, nullptr, false);
  if (impl_->doc.is_discarded()) throw ConfigError("config: malformed document");
  if (!impl_->doc.is_object()) throw ConfigError("config: top level is not an object");
  for (const auto& [key, value] : impl_->doc.items()) {
    (void)value;
    if (!allowed_keys.count(key)) throw ConfigError("config: unknown key '" + key + "'");
  }
}

ConfigReader::~ConfigReader() = default;
ConfigReader::ConfigReader(ConfigReader&&) noexcept = default;

bool ConfigReader::has(const std::string& key) const { return impl_->doc.contains(key); }

double ConfigReader::number(const std::string& key, double def, double lo, double hi) const {
  if (!has(key)) return def;
  const json& v = impl_->doc.at(key);
  if (!v.is_number()) throw ConfigError("config: key '" + key + "' must be a number");
  const double x = v.get<double>();
  if (x < lo || x > hi)
    throw ConfigError("config: key '" + key + "' out of range [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  return x;
}

int ConfigReader::integer(const std::string& key, int def, int lo, int hi) const {
  return static_cast<int>(integer64(key, def, lo, hi));
}

int64_t ConfigReader::integer64(const std::string& key, int64_t def, int64_t lo,
                                int64_t hi) const {
  if (!has(key)) return def;
  const json& v = impl_->doc.at(key);
  if (!v.is_number_integer()) throw ConfigError("config: key '" + key + "' must be an integer");
  const int64_t x = v.get<int64_t>();
  if (x < lo || x > hi)
    throw ConfigError("config: key '" + key + "' out of range [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  return x;
}

uint64_t ConfigReader::unsigned64(const std::string& key, uint64_t def) const {
  if (!has(key)) return def;
  const json& v = impl_->doc.at(key);
  if (!v.is_number_unsigned() && !v.is_number_integer())
    throw ConfigError("config: key '" + key + "' must be a non-negative integer");
  if (v.is_number_integer() && v.get<int64_t>() < 0 && !v.is_number_unsigned())
    throw ConfigError("config: key '" + key + "' must be non-negative");
  return v.get<uint64_t>();
}

bool ConfigReader::flag(const std::string& key, bool def) const {
  if (!has(key)) return def;
  const json& v = impl_->doc.at(key);
  if (!v.is_boolean()) throw ConfigError("config: key '" + key + "' must be a boolean");
  return v.get<bool>();
}

std::string ConfigReader::choice(const std::string& key, const std::string& def,
                                 const std::vector<std::string>& allowed) const {
  std::string value = def;
  if (has(key)) {
    const json& v = impl_->doc.at(key);
    if (!v.is_string()) throw ConfigError("config: key '" + key + "' must be a string");
    value = v.get<std::string>();
  }
  if (std::find(allowed.begin(), allowed.end(), value) == allowed.end())
    throw ConfigError("config: key '" + key + "' has unsupported value '" + value + "'");
  return value;
}

std::vector<std::string> ConfigReader::string_list(const std::string& key) const {
  if (!has(key)) return {};
  const json& v = impl_->doc.at(key);
  if (!v.is_array()) throw ConfigError("config: key '" + key + "' must be a list");
  return v.get<std::vector<std::string>>();
}

std::vector<int> ConfigReader::int_list(const std::string& key,
                                        const std::vector<int>& def) const {
  if (!has(key)) return def;
  const json& v = impl_->doc.at(key);
  if (!v.is_array()) throw ConfigError("config: key '" + key + "' must be a list");
  return v.get<std::vector<int>>();
}

}  // namespace sgtlab
