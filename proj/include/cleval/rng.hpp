#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cleval {

/// Derives independent RNG streams from a run seed and a stream name so that
/// consumers (init, batches, eval subsampling, ...) never share state.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t index = 0) noexcept;

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view stream,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

}  // namespace cleval
