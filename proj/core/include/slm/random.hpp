#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace slm {

using Rng = std::mt19937_64;

/// Mixes a root seed with a path of stream identifiers (trial, batch index,
/// purpose tag...) into an independent 64-bit seed. Equal paths give equal
/// seeds on every platform.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path);

inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
    return Rng(derive_seed(root, path));
}

/// Purpose tags for substreams, so that e.g. the ground truth of trial 3 never
/// shares a stream with the batches of trial 3.
enum class Stream : std::uint64_t {
    ground_truth = 0x67740001,
    train = 0x74720002,
    test = 0x74650003,
    init = 0x696e0004,
    noise = 0x6e6f0005,
    verifier = 0x76650006,
};

inline std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

}  // namespace slm
