#pragma once

#include <cmath>

#include "mgsms/core.hpp"

namespace mgsms {

/// Continuum elastic and strength constants for the plate material.
/// Paris-law constants are carried along with the data set but no operation
/// consumes them (fatigue growth is out of scope).
struct MaterialParams {
    double youngs_modulus = 0.0;   // Pa
    double poisson_ratio = 0.0;    // -
    double shear_modulus = 0.0;    // Pa
    double yield_strength = 0.0;   // Pa
    double paris_exponent = 0.0;   // -
    double paris_coefficient = 0.0;

    void validate() const {
        require(std::isfinite(youngs_modulus) && youngs_modulus > 0.0,
                "material: youngs_modulus must be positive");
        require(poisson_ratio >= 0.0 && poisson_ratio < 0.5,
                "material: poisson_ratio must lie in [0, 0.5)");
        require(std::isfinite(shear_modulus) && shear_modulus > 0.0,
                "material: shear_modulus must be positive");
    }

    /// Relative deviation between the tabulated shear modulus and the
    /// isotropic value E/(2(1+nu)). Handbook tables round G independently,
    /// so ~1% deviations are normal; tolerance is caller-chosen.
    double shear_consistency() const {
        double g_iso = youngs_modulus / (2.0 * (1.0 + poisson_ratio));
        return std::abs(shear_modulus - g_iso) / shear_modulus;
    }

    bool is_consistent(double tol = 1e-2) const { return shear_consistency() < tol; }
};

/// Low carbon steel constants used throughout the plate problem.
inline MaterialParams low_carbon_steel() {
    MaterialParams m;
    m.youngs_modulus = 206e9;     // 206 GPa
    m.poisson_ratio = 0.3;
    m.shear_modulus = 80e9;       // 80 GPa
    m.yield_strength = 235e6;     // 235 MPa
    m.paris_exponent = 2.75;
    m.paris_coefficient = 1.43e-11;
    return m;
}

}  // namespace mgsms
