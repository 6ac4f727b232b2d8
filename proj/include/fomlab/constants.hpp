#pragma once

#include <numbers>

namespace fomlab::constants {

// CODATA 2018 exact or recommended values, SI units.
inline constexpr double hbar = 1.054571817e-34;       // J s
inline constexpr double c = 299792458.0;              // m/s
inline constexpr double k_B = 1.380649e-23;           // J/K
inline constexpr double epsilon_0 = 8.8541878128e-12; // F/m
inline constexpr double e_charge = 1.602176634e-19;   // C

inline constexpr double pi = std::numbers::pi;

/// Temperature of the instrument enclosure.
inline constexpr double T_default = 303.15;  // K

/// Photon energy in eV corresponding to an angular frequency in rad/s.
constexpr double rad_s_to_eV(double omega) { return hbar * omega / e_charge; }
constexpr double eV_to_rad_s(double energy) { return energy * e_charge / hbar; }

/// n-th Matsubara frequency, rad/s.
constexpr double matsubara_rad_s(int n, double T) { return 2.0 * pi * k_B * T * n / hbar; }

/// n-th Matsubara frequency expressed as a photon energy, eV.
constexpr double matsubara_eV(int n, double T) { return rad_s_to_eV(matsubara_rad_s(n, T)); }

constexpr double deg_to_rad(double deg) { return deg * pi / 180.0; }

}  // namespace fomlab::constants
