#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace uizoom {

// Stable across platforms and runs, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a_double(double v, std::uint64_t h) {
    char bytes[sizeof v];
    std::memcpy(bytes, &v, sizeof v);
    return fnv1a(std::string_view(bytes, sizeof bytes), h);
}

// splitmix64 finalizer over a running combination
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace uizoom
