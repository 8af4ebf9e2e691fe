#include "xfer/config.hpp"

#include <algorithm>
#include <sstream>

#include "xfer/error.hpp"
#include "xfer/io.hpp"

namespace xfer {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  c.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    auto key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
    c.values_[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

std::optional<std::string> Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const int out = std::stoi(*v, &used);
    if (used == v->size()) return out;
  } catch (const std::logic_error&) {
  }
  throw UsageError(origin_ + ": '" + key + "' expects an integer, got '" + *v + "'");
}

double Config::get_real(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double out = std::stod(*v, &used);
    if (used == v->size()) return out;
  } catch (const std::logic_error&) {
  }
  throw UsageError(origin_ + ": '" + key + "' expects a number, got '" + *v + "'");
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const auto s = lowercase(*v);
  if (s == "1" || s == "true" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "no") return false;
  throw UsageError(origin_ + ": '" + key + "' expects true or false, got '" + *v + "'");
}

void Config::check_known(const std::initializer_list<const char*>& known) const {
  for (const auto& [k, v] : values_)
    if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; }))
      throw UsageError(origin_ + ": unknown key '" + k + "'");
}

}  // namespace xfer
