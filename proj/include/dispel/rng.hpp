#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dispel {

using Rng = std::mt19937_64;

/// Deterministic child stream derived from a base seed and a list of stream
/// tags (domain index, repeat index, ...). Uses std::seed_seq, whose mixing
/// is fully specified by the standard.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
    std::vector<std::uint32_t> words;
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (std::uint64_t t : tags) {
        words.push_back(static_cast<std::uint32_t>(t));
        words.push_back(static_cast<std::uint32_t>(t >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace dispel
