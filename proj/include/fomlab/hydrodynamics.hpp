#pragma once

// Slip-corrected sphere-plate squeeze-film drag in air, distance-dependent
// quality factor and the resulting phase lag of the cantilever.

#include <cmath>
#include <numbers>

#include "fomlab/error.hpp"

namespace fomlab::hydro {

using std::numbers::pi;

inline constexpr double eta_air = 1.86e-5;           // Pa s, 303 K
inline constexpr double slip_length_low = 60e-9;     // m
inline constexpr double slip_length_high = 118e-9;   // m
inline constexpr double optimal_phase_lag_deg = 2.4;

struct HydroParams {
    double eta = eta_air;
    double b = slip_length_low;
    double Gamma0 = 0.0;  // far-field damping, kg/s
    double R = 0.0;

    void validate() const {
        if (!(eta > 0.0) || !(b > 0.0) || !(Gamma0 > 0.0) || !(R > 0.0))
            throw DomainError("hydrodynamic parameters must be positive");
    }
};

/// Far-field damping from the free quality factor.
inline double gamma0_from_q(double k, double omega1, double Q_far) { return k / (omega1 * Q_far); }

/// Slip correction f*(x) = 2x[(1+x) ln(1+1/x) - 1], x = d / 6b.
inline double f_star(double x) {
    if (!(x > 0.0)) throw DomainError("f* argument must be positive");
    if (x > 1e3) {
        // Asymptotic series; the closed form cancels catastrophically here.
        const double u = 1.0 / x;
        return 1.0 - u / 3.0 + u * u / 6.0 - u * u * u / 10.0 + u * u * u * u / 15.0;
    }
    return 2.0 * x * ((1.0 + x) * std::log1p(1.0 / x) - 1.0);
}

/// Surface contribution 6 pi eta R^2 f*(d/6b) / d to the damping, kg/s.
inline double surface_damping(double d, const HydroParams& p) {
    if (!(d > 0.0)) throw DomainError("separation must be positive");
    return 6.0 * pi * p.eta * p.R * p.R * f_star(d / (6.0 * p.b)) / d;
}

inline double damping(double d, const HydroParams& p) {
    p.validate();
    return p.Gamma0 + surface_damping(d, p);
}

inline double quality_factor(double d, double k, double omega1, const HydroParams& p) {
    return k / (omega1 * damping(d, p));
}

struct PhaseLag {
    double radians = 0.0;
    bool outside_validity = false;  // omega >= omega1 / 10
};

/// Phase lag (omega / omega1) / Q(d) of a drive well below resonance.
inline PhaseLag phase_lag(double d, double omega, double k, double omega1, const HydroParams& p) {
    return {(omega / omega1) / quality_factor(d, k, omega1, p), omega >= omega1 / 10.0};
}

/// Surface-interaction drag amplitude for plate velocity amplitude v, N.
inline double hydro_force_amplitude(double d, double v, const HydroParams& p) {
    if (!(v >= 0.0)) throw DomainError("velocity amplitude must be non-negative");
    return surface_damping(d, p) * v;
}

}  // namespace fomlab::hydro
