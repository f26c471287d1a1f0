#ifndef FEWREC_RNG_HPP
#define FEWREC_RNG_HPP

#include <cstdint>
#include <random>
#include <string>

namespace fewrec {

// splitmix64 mixing step
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    return mix64(seed ^ mix64(v));
}

inline std::uint64_t hash_combine(std::uint64_t seed, const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : s) {
        h = (h ^ c) * 0x100000001b3ULL;
    }
    return hash_combine(seed, h);
}

// Item-level seed derivation: independent of scheduling order, so parallel
// generation cannot change any item's stream.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t global_seed, const Parts&... parts) {
    std::uint64_t s = mix64(global_seed);
    ((s = hash_combine(s, parts)), ...);
    return s;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace fewrec

#endif
