#pragma once

#include <complex>
#include <numbers>

namespace qdspin {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Bohr magneton over Planck constant, GHz per tesla (CODATA).
inline constexpr double kBohrMagnetonGHzPerTesla = 13.996245;

// Internal units: time in ns, angular frequency in rad/ns, field in tesla.
inline constexpr double ghz_to_angular(double ghz) { return kTwoPi * ghz; }
inline constexpr double angular_to_ghz(double rad_per_ns) { return rad_per_ns / kTwoPi; }
inline constexpr double thz_to_angular(double thz) { return kTwoPi * 1e3 * thz; }
inline constexpr double ps_to_ns(double ps) { return 1e-3 * ps; }
/// Rates quoted per microsecond converted to per nanosecond.
inline constexpr double per_us_to_per_ns(double per_us) { return 1e-3 * per_us; }

}  // namespace qdspin
