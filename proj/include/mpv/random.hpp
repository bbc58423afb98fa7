#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mpv {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent seeds from a parent seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> salts) {
    std::uint64_t h = mix64(seed);
    for (auto s : salts) {
        h = mix64(h ^ mix64(s + 0x632be59bd9b4e019ULL));
    }
    return h;
}

// Uniform double in [0, 1) from a 64-bit hash; platform independent.
constexpr double unit_from_hash(std::uint64_t h) {
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace mpv
