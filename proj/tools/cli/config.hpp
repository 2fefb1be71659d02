#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ddtas/data.hpp"
#include "ddtas/trainer.hpp"

namespace ddtas::cli {

// Configuration error: unknown key, bad type, malformed file. Maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ValueType { integer, real, boolean, string, choice, int_list, real_or_auto };

struct KeySpec {
  std::string key;  // "section.name"
  ValueType type;
  std::string default_value;
  std::vector<std::string> choices;  // for ValueType::choice
  std::string doc;
};

// Every accepted key, in documentation order.
const std::vector<KeySpec>& schema();

// Flat key-value configuration with INI sections:
//
//   # comment
//   [train]
//   epochs = 50
//
// Keys are addressed as "section.name". Values are checked against schema()
// when set; unknown keys are rejected.
class Config {
 public:
  Config();  // all defaults

  static Config from_file(const std::filesystem::path& path);
  void merge_ini(const std::string& text, const std::string& source);

  // "section.name=value"
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& raw(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const { return raw(key); }
  std::vector<int> get_int_list(const std::string& key) const;

  // Resolved snapshot in INI form, every key present.
  std::string to_ini() const;

 private:
  std::map<std::string, std::string> values_;
};

ClusterSpec cluster_spec_from(const Config& cfg);
TrainConfig train_config_from(const Config& cfg);

}  // namespace ddtas::cli
