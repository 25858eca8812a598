#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace xfer {

// Comma-separated table preceded by "# key: value" metadata lines.
struct CsvTable {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void meta(const std::string& key, const std::string& value) { metadata.emplace_back(key, value); }
  void add_row(std::vector<std::string> row);
  std::string str() const;
};

std::string fmt(double value);  // 12 significant digits
std::string fmt(long long value);
inline std::string fmt(int value) { return fmt(static_cast<long long>(value)); }
inline std::string fmt(std::size_t value) { return fmt(static_cast<long long>(value)); }

void write_csv(const CsvTable& table, const std::filesystem::path& path);
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);

}  // namespace xfer
