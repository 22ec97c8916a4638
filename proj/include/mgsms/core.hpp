#pragma once

#include <cstdint>
#include <cstdio>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mgsms {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Library-wide error type. All contract violations and I/O failures throw this.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

template <typename... Args>
std::string format(const char* fmt, Args... args) {
    if constexpr (sizeof...(Args) == 0) {
        return std::string(fmt);
    } else {
        int n = std::snprintf(nullptr, 0, fmt, args...);
        std::string s(static_cast<size_t>(n), '\0');
        std::snprintf(s.data(), s.size() + 1, fmt, args...);
        return s;
    }
}

template <typename... Args>
[[noreturn]] void fail(const char* fmt, Args... args) {
    throw Error(format(fmt, args...));
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

// Physical constants in the internal unit systems.
// Continuum side: SI (m, Pa, N).  Atomistic side: Angstrom, ps, eV, amu, K.
namespace constants {
inline constexpr double kB_eV_per_K = 8.617333262e-5;
// amu * (A/ps)^2 expressed in eV; converts m*v^2 to energy.
inline constexpr double mvv2e = 1.0364269e-4;
// 1 eV/A^3 in GPa, for virial stress output.
inline constexpr double eVA3_to_GPa = 160.2176634;
inline constexpr double angstrom_per_m = 1e10;
}  // namespace constants

/// SplitMix64 step; used to derive independent per-stage RNG seeds from a
/// master seed in a documented, reproducible way.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed-splitting rule: child = splitmix64(parent ^ splitmix64(tag)).
/// Applying it with a stage tag and sample indices yields seeds that are
/// stable under re-execution and independent of scheduling order.
inline uint64_t derive_seed(uint64_t master, uint64_t tag, uint64_t a = 0, uint64_t b = 0) {
    uint64_t s = splitmix64(master ^ splitmix64(tag));
    s = splitmix64(s ^ splitmix64(a + 0x51ed2701));
    s = splitmix64(s ^ splitmix64(b + 0x2c9277b5));
    return s;
}

inline bool nearly_equal(double a, double b, double rel, double abs_floor = 0.0) {
    double scale = std::max({std::abs(a), std::abs(b), abs_floor});
    return std::abs(a - b) <= rel * scale;
}

}  // namespace mgsms
