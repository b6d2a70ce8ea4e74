#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace tpp {

constexpr double kPi = 3.141592653589793238462643383279502884;

/// Base of every error the library throws. Callers that only care about
/// "did the toolkit reject this" can catch this one type.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

#define TPP_DECLARE_ERROR(Name)              \
    class Name : public Error {              \
      public:                                \
        using Error::Error;                  \
    }

TPP_DECLARE_ERROR(ValidationError);
TPP_DECLARE_ERROR(DegenerateDuration);
TPP_DECLARE_ERROR(PredictorFailure);
TPP_DECLARE_ERROR(CausalConsistencyViolation);
TPP_DECLARE_ERROR(ScheduleMismatch);
TPP_DECLARE_ERROR(StructureError);
TPP_DECLARE_ERROR(TooLarge);
TPP_DECLARE_ERROR(UnknownNode);
TPP_DECLARE_ERROR(ScenarioError);
TPP_DECLARE_ERROR(EmptyTrace);
TPP_DECLARE_ERROR(HorizonMismatch);

#undef TPP_DECLARE_ERROR

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double angle) {
    const double two_pi = 2.0 * kPi;
    double a = std::fmod(angle, two_pi);
    if (a <= -kPi) {
        a += two_pi;
    } else if (a > kPi) {
        a -= two_pi;
    }
    return a;
}

// splitmix64 finalizer; used to derive independent stream seeds from keys.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30u)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27u)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31u);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
    return mix64(seed ^ mix64(value));
}

/// FNV-1a over bytes; stable across platforms, used for config hashes.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace tpp
