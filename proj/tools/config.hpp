#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace xfer::cli {

// Thrown for anything the operator got wrong: unknown keys, malformed values,
// missing required options. Maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeyInfo {
  std::string default_value;
  std::string help;
  // Value used by --paper-scale when the key was not set explicitly.
  std::optional<std::string> paper_value = std::nullopt;
};

// Flat "section.key" configuration over a fixed key registry. Sources are
// applied in order: defaults, --config file, command-line flags, --set.
class RunConfig {
 public:
  RunConfig();

  static const std::map<std::string, KeyInfo>& registry();

  void load_ini(const std::filesystem::path& path);
  void load_ini_text(const std::string& text);
  // "section.key=value"
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  // Switches every key with a published-scale value that was not set
  // explicitly.
  void apply_paper_scale();

  bool is_set(const std::string& key) const { return explicit_.count(key) > 0; }
  bool any_set(const std::string& section) const;

  const std::string& str(const std::string& key) const;
  double num(const std::string& key) const;
  long long integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;
  std::vector<double> num_list(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;

  std::string to_ini() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

// "300:3600:300" (inclusive range) or "300,600,900".
std::vector<double> parse_temperatures(const std::string& text);
// "20ps", "500fs", "1ns" or a bare number of picoseconds.
double parse_duration_ps(const std::string& text);

}  // namespace xfer::cli
