//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SPINMAP_CONSTANTS_H_
#define SPINMAP_CONSTANTS_H_

#include <numbers>

namespace spinmap {

inline constexpr double kTwoPi = 2 * std::numbers::pi;
inline constexpr double kTeslaPerGauss = 1e-4;

/**
 * @brief Physical constants in SI units.
 *
 * Gyromagnetic ratios are stored as positive magnitudes. Only |C_ij| is ever
 * compared against data, so the sign convention never enters a prediction.
 * The 13C value is the CODATA one (10.7084 MHz/T); the 14N value is
 * 2pi x 0.3077 kHz/G.
 */
struct PhysicalConstants {
  double mu0 = 1.25663706212e-6;         // T m / A
  double hbar = 1.054571817e-34;         // J s
  double gamma_c = kTwoPi * 10.7084e6;   // rad s^-1 T^-1
  double gamma_n = kTwoPi * 3.077e6;     // rad s^-1 T^-1
  double gamma_e = kTwoPi * 28.02495e9;  // rad s^-1 T^-1
  double delta_zfs = kTwoPi * 2.87e9;    // rad s^-1
  double a0 = 3.5668;                    // angstrom

  // alpha_ij = mu0 gamma_i gamma_j hbar / 4pi, in rad s^-1 m^3.
  double alpha(double gamma_i, double gamma_j) const {
    return mu0 * gamma_i * gamma_j * hbar / (4 * std::numbers::pi);
  }

  // f = kappa * |3cos^2 - 1| / r^3 with r in angstrom and f in Hz.
  double kappa_hz_a3(double gamma_i, double gamma_j) const {
    return alpha(gamma_i, gamma_j) / (4 * std::numbers::pi) * 1e30;
  }
};

// Bare 13C precession frequency measured in the m_s = 0 state, kHz.
inline constexpr double kDefaultOmega0kHz = 431.960;
// Field along the NV axis, G.
inline constexpr double kDefaultBzGauss = 403.0;

} // namespace spinmap

#endif // SPINMAP_CONSTANTS_H_
