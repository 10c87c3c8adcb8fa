#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace semkd {

using Rng = std::mt19937_64;

/// Counter-based seed derivation: every phase/episode seed is a pure function
/// of the root seed and a stream tag, so reruns never depend on call order.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t counter = 0);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace semkd
