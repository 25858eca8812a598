#pragma once

// Internal unit system: Å, eV, fs, amu, K.

namespace xfer::units {

inline constexpr double kBoltzmann = 8.617333262e-5;  // eV/K

// eV / (Å amu) -> Å / fs^2
inline constexpr double kForceToAccel = 9.64853321233e-3;

// amu Å^2 / fs^2 -> eV
inline constexpr double kMv2ToEv = 1.0 / kForceToAccel;

// eV / Å^3 -> bar
inline constexpr double kEvPerA3ToBar = 1.602176634e6;

// sqrt(eV / (Å^2 amu)) -> THz (cycles, not angular)
inline constexpr double kSqrtEvA2AmuToTHz = 15.633302;

inline constexpr double kFsPerPs = 1000.0;
inline constexpr double kAngstromPerNm = 10.0;

}  // namespace xfer::units
