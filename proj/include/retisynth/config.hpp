#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace retisynth {

enum class ConfigType { integer, real, boolean, text, list };

struct ConfigKey {
  std::string key;  // section.name
  ConfigType type;
  std::string default_value;
  std::string doc;
};

/// Every recognised key with its default.
const std::vector<ConfigKey>& config_schema();

/// Flat section.key=value store. Accepts `[section]` headers followed by
/// `name = value`, or fully qualified `section.name = value`; '#' starts a
/// comment.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// Unknown keys and values that do not parse as the key's type throw
  /// ConfigError.
  void set(const std::string& key, const std::string& value);
  bool is_default(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// Every key with its effective value, grouped by section, documented.
  std::string echo() const;

 private:
  const std::string& raw(const std::string& key) const;

  std::map<std::string, std::string> values_;
  std::map<std::string, bool> overridden_;
};

}  // namespace retisynth
