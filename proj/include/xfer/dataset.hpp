#pragma once

#include "xfer/core.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xfer {

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);
// Hash of the canonical extended-XYZ text of a set of configurations.
std::string content_hash(const std::vector<Configuration>& configs);

struct ManifestEntry {
  std::filesystem::path file;
  int frame = 0;
  std::string element;  // single symbol, or symbols joined by '+'
  int n_atoms = 0;
  std::optional<double> temperature;
  std::string kind;
  std::string hash;  // frame content hash
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;  // ordered by (file, frame)
  std::map<std::string, std::string> file_hashes;  // path -> sha256

  std::size_t size() const { return entries.size(); }
};

// Indexes extended-XYZ files, hashing every file and frame.
DatasetManifest build_manifest(const std::vector<std::filesystem::path>& files);

// Tab-separated text index. Paths are stored relative to the manifest's directory.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct PoolFilter {
  std::optional<std::string> element;
  std::optional<std::pair<double, double>> temperature_range;  // K, inclusive
  std::vector<std::string> kinds;          // allowed kinds, empty: all
  std::vector<std::string> exclude_kinds;  // e.g. "slab"
};

// Verifies file hashes against the manifest, then filters. Throws when a file
// changed or nothing survives the filters.
DatasetManifest build_pool(const DatasetManifest& inputs, const PoolFilter& filter);

// Reads the frames of a pool, adding positional noise seeded per entry.
std::vector<Configuration> load_pool(const DatasetManifest& pool, double noise_sigma,
                                     std::uint64_t seed);

}  // namespace xfer
