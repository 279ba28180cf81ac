#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctrec {

// Error taxonomy maps onto CLI exit codes: ConfigError -> 2,
// InputMismatchError -> 3, everything else -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InputMismatchError : std::runtime_error {
    explicit InputMismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken internal precondition; a bug, not a user error.
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// Deterministic splittable RNG. All randomness in the project flows through
// this so results are pinned across platforms and standard libraries
// (std::shuffle / std::uniform_int_distribution are implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ull) {}

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Unbiased integer in [0, bound). bound must be > 0.
    uint64_t next_below(uint64_t bound) {
        uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    int next_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(next_below(static_cast<uint64_t>(hi - lo + 1)));
    }

    double next_real() {  // [0, 1)
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    double next_real(double lo, double hi) { return lo + (hi - lo) * next_real(); }

    bool next_bool() { return (next_u64() & 1ull) != 0; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

// Stable stream derivation: child generators are independent of the order in
// which siblings are drawn.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    Rng r(seed * 0x9e3779b97f4a7c15ull + stream);
    return r.next_u64();
}

inline uint64_t hash_str(const std::string& s) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace ctrec
