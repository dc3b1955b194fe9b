#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stsm {

// Error categories used across the library. All derive from std::runtime_error
// so callers can catch broadly or by kind.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error("config error: " + m) {}
};
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& m) : std::runtime_error("format error: " + m) {}
};
struct InputError : std::runtime_error {
    explicit InputError(const std::string& m) : std::runtime_error("input error: " + m) {}
};
struct InternalError : std::runtime_error {
    explicit InternalError(const std::string& m) : std::runtime_error("internal error: " + m) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& m) : std::runtime_error("numeric error: " + m) {}
};

// splitmix64 step; used to derive independent seeded streams, e.g. per epoch.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace stsm
