#include "xfer/extxyz.hpp"

#include "xfer/md.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace xfer {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(" \t=\"") == std::string::npos && !s.empty()) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string format_extxyz(const std::vector<Configuration>& configs) {
  std::string out;
  for (const auto& c : configs) {
    c.validate();
    out += std::to_string(c.size()) + "\n";
    std::string line = "Lattice=\"";
    const Mat3& L = c.cell.lattice();
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) line += (r || k ? " " : "") + num(L(r, k));
    }
    line += "\" Properties=species:S:1:pos:R:3";
    if (c.forces) line += ":forces:R:3";
    if (c.energy) line += " energy=" + num(*c.energy);
    if (c.temperature) line += " temperature_K=" + num(*c.temperature);
    if (!c.provenance.empty()) line += " provenance=" + quote_if_needed(c.provenance);
    if (!c.kind.empty()) line += " kind=" + quote_if_needed(c.kind);
    const auto& p = c.cell.periodic();
    line += std::string(" pbc=\"") + (p[0] ? "T" : "F") + " " + (p[1] ? "T" : "F") + " " +
            (p[2] ? "T" : "F") + "\"";
    out += line + "\n";
    for (std::size_t a = 0; a < c.size(); ++a) {
      std::string row = c.species[a];
      for (int k = 0; k < 3; ++k) row += " " + num(c.positions(k, a));
      if (c.forces) {
        for (int k = 0; k < 3; ++k) row += " " + num((*c.forces)(k, a));
      }
      out += row + "\n";
    }
  }
  return out;
}

void write_extxyz(const std::vector<Configuration>& configs, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << format_extxyz(configs);
  if (!out) throw Error("write failed for " + path.string());
}

Configuration add_position_noise(Configuration config, double sigma, std::uint64_t seed) {
  if (sigma <= 0.0) return config;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  for (Eigen::Index a = 0; a < config.positions.cols(); ++a) {
    for (int k = 0; k < 3; ++k) config.positions(k, a) += normal(rng);
  }
  return config;
}

namespace {

struct Cursor {
  const std::string& source;
  int line = 0;
  int frame = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(source + ":" + std::to_string(line) + ": frame " + std::to_string(frame) +
                     ": " + msg);
  }
};

double parse_double(std::string_view s, const Cursor& cur) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    cur.fail("invalid number '" + std::string(s) + "'");
  }
  if (!std::isfinite(v)) cur.fail("non-finite value '" + std::string(s) + "'");
  return v;
}

std::map<std::string, std::string> parse_comment(const std::string& line, const Cursor& cur) {
  std::map<std::string, std::string> kv;
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= n) break;
    std::size_t k0 = i;
    while (i < n && line[i] != '=' && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::string key = line.substr(k0, i - k0);
    std::string value;
    if (i < n && line[i] == '=') {
      ++i;
      if (i < n && line[i] == '"') {
        ++i;
        bool closed = false;
        while (i < n) {
          if (line[i] == '\\' && i + 1 < n) {
            value += line[i + 1];
            i += 2;
          } else if (line[i] == '"') {
            ++i;
            closed = true;
            break;
          } else {
            value += line[i++];
          }
        }
        if (!closed) cur.fail("unterminated quote in comment line");
      } else {
        std::size_t v0 = i;
        while (i < n && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        value = line.substr(v0, i - v0);
      }
    } else {
      value = "T";
    }
    kv[key] = value;
  }
  return kv;
}

struct Column {
  std::string name;
  char type;
  int count;
};

std::vector<Column> parse_properties(const std::string& s, const Cursor& cur) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, ':')) parts.push_back(part);
  if (parts.size() % 3 != 0 || parts.empty()) cur.fail("malformed Properties '" + s + "'");
  std::vector<Column> cols;
  for (std::size_t k = 0; k < parts.size(); k += 3) {
    Column c;
    c.name = parts[k];
    if (parts[k + 1].size() != 1 || std::string("SRIL").find(parts[k + 1][0]) == std::string::npos) {
      cur.fail("unsupported property type '" + parts[k + 1] + "'");
    }
    c.type = parts[k + 1][0];
    try {
      c.count = std::stoi(parts[k + 2]);
    } catch (const std::exception&) {
      cur.fail("malformed Properties count '" + parts[k + 2] + "'");
    }
    if (c.count < 1) cur.fail("malformed Properties count '" + parts[k + 2] + "'");
    cols.push_back(c);
  }
  return cols;
}

std::vector<std::string_view> tokens(const std::string& line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t b = i;
    while (i < n && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > b) out.emplace_back(line.data() + b, i - b);
  }
  return out;
}

}  // namespace

std::vector<Configuration> parse_extxyz(const std::string& text, const std::string& source,
                                        double noise_sigma, std::uint64_t seed) {
  std::vector<Configuration> out;
  std::istringstream in(text);
  std::string line;
  Cursor cur{source};
  while (std::getline(in, line)) {
    ++cur.line;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    long n_atoms = 0;
    try {
      std::size_t used = 0;
      n_atoms = std::stol(line, &used);
      if (line.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      cur.fail("expected an atom count, got '" + line + "'");
    }
    if (n_atoms < 1) cur.fail("atom count must be positive");
    if (!std::getline(in, line)) cur.fail("truncated frame: missing comment line");
    ++cur.line;
    const auto kv = parse_comment(line, cur);

    Configuration c;
    auto lat = kv.find("Lattice");
    if (lat == kv.end()) cur.fail("missing Lattice");
    const std::string lat_str = lat->second;
    const auto lt = tokens(lat_str);
    if (lt.size() != 9) cur.fail("Lattice must hold 9 numbers");
    Mat3 L;
    for (int k = 0; k < 9; ++k) L(k / 3, k % 3) = parse_double(lt[k], cur);
    std::array<bool, 3> periodic{true, true, true};
    if (auto it = kv.find("pbc"); it != kv.end()) {
      const std::string pbc_str = it->second;
      const auto pt = tokens(pbc_str);
      if (pt.size() != 3) cur.fail("pbc must hold 3 flags");
      for (int k = 0; k < 3; ++k) {
        if (pt[k] == "T" || pt[k] == "True" || pt[k] == "1") {
          periodic[k] = true;
        } else if (pt[k] == "F" || pt[k] == "False" || pt[k] == "0") {
          periodic[k] = false;
        } else {
          cur.fail("invalid pbc flag '" + std::string(pt[k]) + "'");
        }
      }
    }
    try {
      c.cell = Cell(L, periodic);
    } catch (const Error& e) {
      cur.fail(std::string("malformed Lattice: ") + e.what());
    }
    auto props = kv.find("Properties");
    const std::vector<Column> cols =
        parse_properties(props == kv.end() ? "species:S:1:pos:R:3" : props->second, cur);
    int width = 0, species_col = -1, pos_col = -1, force_col = -1;
    for (const auto& col : cols) {
      if ((col.name == "species") && col.type == 'S' && col.count == 1) species_col = width;
      if (col.name == "pos" && col.type == 'R' && col.count == 3) pos_col = width;
      if ((col.name == "forces" || col.name == "force") && col.type == 'R' && col.count == 3) {
        force_col = width;
      }
      width += col.count;
    }
    if (species_col < 0 || pos_col < 0) cur.fail("Properties must contain species:S:1 and pos:R:3");
    if (auto it = kv.find("energy"); it != kv.end()) c.energy = parse_double(it->second, cur);
    if (auto it = kv.find("temperature_K"); it != kv.end()) {
      c.temperature = parse_double(it->second, cur);
    }
    if (auto it = kv.find("provenance"); it != kv.end()) c.provenance = it->second;
    if (auto it = kv.find("kind"); it != kv.end()) c.kind = it->second;

    c.positions.resize(3, n_atoms);
    Forces f(3, n_atoms);
    c.species.reserve(n_atoms);
    for (long a = 0; a < n_atoms; ++a) {
      if (!std::getline(in, line)) {
        cur.fail("truncated frame: expected " + std::to_string(n_atoms) + " atom lines, found " +
                 std::to_string(a));
      }
      ++cur.line;
      const auto t = tokens(line);
      if (static_cast<int>(t.size()) != width) {
        cur.fail("expected " + std::to_string(width) + " columns, found " +
                 std::to_string(t.size()));
      }
      c.species.emplace_back(t[species_col]);
      for (int k = 0; k < 3; ++k) c.positions(k, a) = parse_double(t[pos_col + k], cur);
      if (force_col >= 0) {
        for (int k = 0; k < 3; ++k) f(k, a) = parse_double(t[force_col + k], cur);
      }
    }
    if (force_col >= 0) c.forces = std::move(f);
    if (noise_sigma > 0.0) {
      c = add_position_noise(std::move(c), noise_sigma,
                             derive_seed(seed, static_cast<std::uint64_t>(cur.frame)));
    }
    out.push_back(std::move(c));
    ++cur.frame;
  }
  return out;
}

std::vector<Configuration> read_extxyz(const std::filesystem::path& path, double noise_sigma,
                                       std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_extxyz(ss.str(), path.string(), noise_sigma, seed);
}

}  // namespace xfer
