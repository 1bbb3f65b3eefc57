#pragma once

#include <cstdint>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace simt {

using TokenId = std::int32_t;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (CLI exit code 1).
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Malformed or inconsistent input data, or a failed computation (CLI exit code 2).
class DataError : public Error {
  public:
    using Error::Error;
};

// 64-bit FNV-1a; used for vocabulary, config and file fingerprints.
class Fnv1a {
  public:
    void update(std::string_view bytes) noexcept {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= 0x100000001b3ULL;
        }
    }
    void update(const void* data, std::size_t n) noexcept {
        update(std::string_view(static_cast<const char*>(data), n));
    }
    std::uint64_t digest() const noexcept { return state_; }

  private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view bytes) noexcept {
    Fnv1a h;
    h.update(bytes);
    return h.digest();
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

/// Seeded generator whose draws are identical on every standard library.
///
/// std::uniform_int_distribution and friends are implementation-defined, so
/// bounded integers and unit reals are derived from the raw engine output.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ConfigError("Rng::below: empty range");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform integer in [lo, hi].
    std::int64_t between(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    /// Uniform real in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  private:
    std::mt19937_64 engine_;
};

}  // namespace simt
