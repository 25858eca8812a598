#include "xfer/dataset.hpp"

#include "xfer/extxyz.hpp"
#include "xfer/md.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

namespace xfer {

std::string sha256_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("sha256 computation failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int k = 0; k < len; ++k) {
    std::snprintf(buf, sizeof buf, "%02x", digest[k]);
    hex += buf;
  }
  return hex;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string element_of(const Configuration& c) {
  std::set<std::string> s(c.species.begin(), c.species.end());
  std::string out;
  for (const auto& e : s) out += (out.empty() ? "" : "+") + e;
  return out;
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(slurp(path)); }

std::string content_hash(const std::vector<Configuration>& configs) {
  return sha256_hex(format_extxyz(configs));
}

DatasetManifest build_manifest(const std::vector<std::filesystem::path>& files) {
  DatasetManifest m;
  for (const auto& f : files) {
    const std::string text = slurp(f);
    m.file_hashes[f.string()] = sha256_hex(text);
    const auto frames = parse_extxyz(text, f.string());
    for (std::size_t k = 0; k < frames.size(); ++k) {
      ManifestEntry e;
      e.file = f;
      e.frame = static_cast<int>(k);
      e.element = element_of(frames[k]);
      e.n_atoms = static_cast<int>(frames[k].size());
      e.temperature = frames[k].temperature;
      e.kind = frames[k].kind;
      e.hash = content_hash({frames[k]});
      m.entries.push_back(std::move(e));
    }
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  auto rel = [&](const std::filesystem::path& p) {
    return std::filesystem::proximate(p, base).generic_string();
  };
  std::ostringstream out;
  out << "# xfer-manifest 1\n";
  for (const auto& [file, hash] : manifest.file_hashes) {
    out << "file\t" << rel(file) << "\t" << hash << "\n";
  }
  char tbuf[32];
  for (const auto& e : manifest.entries) {
    std::string t = "-";
    if (e.temperature) {
      std::snprintf(tbuf, sizeof tbuf, "%.17g", *e.temperature);
      t = tbuf;
    }
    out << "frame\t" << rel(e.file) << "\t" << e.frame << "\t" << e.element << "\t" << e.n_atoms
        << "\t" << t << "\t" << (e.kind.empty() ? "-" : e.kind) << "\t" << e.hash << "\n";
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << out.str();
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::istringstream in(slurp(path));
  std::string line;
  DatasetManifest m;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw Error(path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, '\t')) f.push_back(cell);
    if (f[0] == "file" && f.size() == 3) {
      m.file_hashes[(base / f[1]).lexically_normal().string()] = f[2];
    } else if (f[0] == "frame" && f.size() == 8) {
      ManifestEntry e;
      e.file = (base / f[1]).lexically_normal();
      try {
        e.frame = std::stoi(f[2]);
        e.n_atoms = std::stoi(f[4]);
        if (f[5] != "-") e.temperature = std::stod(f[5]);
      } catch (const std::exception&) {
        fail("malformed frame record");
      }
      e.element = f[3];
      e.kind = f[6] == "-" ? "" : f[6];
      e.hash = f[7];
      m.entries.push_back(std::move(e));
    } else {
      fail("unrecognised manifest record");
    }
  }
  return m;
}

DatasetManifest build_pool(const DatasetManifest& inputs, const PoolFilter& filter) {
  DatasetManifest out;
  for (const auto& [file, hash] : inputs.file_hashes) {
    const std::string actual = sha256_file(file);
    if (actual != hash) {
      throw Error("content hash mismatch for " + file + " (manifest " + hash.substr(0, 12) +
                  ", file " + actual.substr(0, 12) + ")");
    }
    out.file_hashes[file] = hash;
  }
  for (const auto& e : inputs.entries) {
    if (!inputs.file_hashes.count(e.file.string())) {
      throw Error("manifest frame refers to unhashed file " + e.file.string());
    }
    if (filter.element && e.element != *filter.element) continue;
    if (filter.temperature_range) {
      if (!e.temperature) continue;
      if (*e.temperature < filter.temperature_range->first ||
          *e.temperature > filter.temperature_range->second) {
        continue;
      }
    }
    if (!filter.kinds.empty() &&
        std::find(filter.kinds.begin(), filter.kinds.end(), e.kind) == filter.kinds.end()) {
      continue;
    }
    if (std::find(filter.exclude_kinds.begin(), filter.exclude_kinds.end(), e.kind) !=
        filter.exclude_kinds.end()) {
      continue;
    }
    out.entries.push_back(e);
  }
  if (out.entries.empty()) throw Error("no frames left after filtering the pool");
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const ManifestEntry& a, const ManifestEntry& b) {
                     return std::tie(a.file, a.frame) < std::tie(b.file, b.frame);
                   });
  return out;
}

std::vector<Configuration> load_pool(const DatasetManifest& pool, double noise_sigma,
                                     std::uint64_t seed) {
  std::map<std::string, std::vector<Configuration>> cache;
  std::vector<Configuration> out;
  out.reserve(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const auto& e = pool.entries[k];
    auto it = cache.find(e.file.string());
    if (it == cache.end()) it = cache.emplace(e.file.string(), read_extxyz(e.file, 0.0)).first;
    if (e.frame < 0 || e.frame >= static_cast<int>(it->second.size())) {
      throw Error("manifest frame " + std::to_string(e.frame) + " missing from " + e.file.string());
    }
    const Configuration& c = it->second[e.frame];
    if (content_hash({c}) != e.hash) {
      throw Error("frame " + std::to_string(e.frame) + " of " + e.file.string() +
                  " does not match its manifest hash");
    }
    out.push_back(add_position_noise(c, noise_sigma, derive_seed(seed, k)));
  }
  return out;
}

}  // namespace xfer
