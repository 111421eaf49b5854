#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace thermal {

enum class Condition { Control, Perturbation };

inline std::string_view to_string(Condition c) {
    return c == Condition::Control ? "control" : "perturbation";
}

enum class ProteinStatus { Ok, FilteredPsm, FilteredReplicates, FilteredDegenerate, FitFailed };

std::string_view to_string(ProteinStatus s);

// Malformed or unusable input data. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem and configuration problems. The CLI maps this to exit code 1.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a covariance matrix cannot be factorized even after jitter escalation.
class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// splitmix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for an independent per-item stream. Depends only on the master seed and the key,
/// never on scheduling or iteration order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view key) {
    return mix64(master ^ mix64(fnv1a(key)));
}

}  // namespace thermal
