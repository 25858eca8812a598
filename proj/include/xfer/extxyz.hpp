#pragma once

#include "xfer/core.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace xfer {

class ParseError : public Error {
 public:
  using Error::Error;
};

// Extended XYZ. Comment line keys: Lattice, Properties, energy (total, eV),
// temperature_K, provenance, kind, pbc. Floats use 17 significant digits.
std::string format_extxyz(const std::vector<Configuration>& configs);
void write_extxyz(const std::vector<Configuration>& configs, const std::filesystem::path& path);

// Normal positional noise with standard deviation sigma (Å); 0 disables it.
inline constexpr double kDefaultNoiseSigma = 1e-5;

std::vector<Configuration> parse_extxyz(const std::string& text, const std::string& source = "<text>",
                                        double noise_sigma = 0.0, std::uint64_t seed = 0);
std::vector<Configuration> read_extxyz(const std::filesystem::path& path,
                                       double noise_sigma = kDefaultNoiseSigma,
                                       std::uint64_t seed = 0);

Configuration add_position_noise(Configuration config, double sigma, std::uint64_t seed);

}  // namespace xfer
