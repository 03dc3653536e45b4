#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mfdg {

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// All randomness in the engine flows from one master seed through named
// substreams, so every trial/restart is independently reproducible.
class SeedStream {
  public:
    explicit SeedStream(std::uint64_t master) : master_(master) {}

    std::mt19937_64 stream(std::string_view name, std::uint64_t index = 0) const {
        std::uint64_t s = splitmix64(master_ ^ fnv1a64(name));
        s = splitmix64(s ^ (0x632be59bd9b4e019ull * (index + 1)));
        return std::mt19937_64(s);
    }

    std::uint64_t master() const { return master_; }

  private:
    std::uint64_t master_;
};

// Uniform double in [0,1) from the top 53 bits; avoids distribution
// implementation differences.
inline double uniform01(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& g, double lo, double hi) {
    return lo + (hi - lo) * uniform01(g);
}

inline std::size_t uniform_index(std::mt19937_64& g, std::size_t n) {
    return static_cast<std::size_t>(uniform01(g) * static_cast<double>(n)) % n;
}

}  // namespace mfdg
