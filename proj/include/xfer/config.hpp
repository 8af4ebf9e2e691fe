#pragma once

// Flat "key = value" configuration text. Blank lines and lines starting with
// '#' are ignored. Command-line flags override file values.

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace xfer {

class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<memory>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_real(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Throws UsageError naming the first key not in `known`.
  void check_known(const std::initializer_list<const char*>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_ = "<memory>";
};

}  // namespace xfer
