#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace docaudit {

// Probabilities below this are clamped before entering the log domain.
inline constexpr double kProbFloor = 1e-10;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Network / timeout / transient server failure. Safe to retry.
class TransportError : public Error {
public:
    using Error::Error;
};

// Request or response violates the agreed contract (shapes, bounds, fingerprints).
class ContractError : public Error {
public:
    using Error::Error;
};

// The provider cannot do what was asked (e.g. full distributions unsupported).
class CapabilityError : public Error {
public:
    using Error::Error;
};

// On-disk store problems: missing artifacts, corrupt files, id collisions.
class StoreError : public Error {
public:
    using Error::Error;
};

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

// Accumulates a fingerprint over heterogeneous fields. Field boundaries are
// hashed explicitly so ("ab","c") and ("a","bc") differ.
class Fingerprint {
public:
    Fingerprint& add(std::string_view s) {
        h_ = fnv1a64("\x1f", h_);
        h_ = fnv1a64(s, h_);
        return *this;
    }
    Fingerprint& add(std::uint64_t v) {
        char buf[21];
        std::snprintf(buf, sizeof(buf), "%llu", static_cast<unsigned long long>(v));
        return add(buf);
    }
    Fingerprint& add(std::int64_t v) {
        char buf[22];
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
        return add(buf);
    }
    Fingerprint& add(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return add(buf);
    }
    std::string hex() const { return to_hex(h_); }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for a worker derived from a master seed; stable across schedulers.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 0x9e3779b97f4a7c15ULL));
}

// Unbiased draw in [0, n). mt19937_64 output is specified by the standard, and
// the rejection loop below is ours, so results are identical on every platform.
inline std::uint64_t bounded_u64(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0) throw Error("bounded_u64: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = rng();
    while (v >= limit) v = rng();
    return v % n;
}

template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(bounded_u64(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

// First k elements of a seeded Fisher-Yates pass: a uniform sample without
// replacement from [0, n).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           std::mt19937_64& rng) {
    if (k > n) throw Error("sample_without_replacement: k > n");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(bounded_u64(rng, n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

// Canonical float formatting for CSV output; %.17g round-trips doubles.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

}  // namespace docaudit
