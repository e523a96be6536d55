#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "predfuzz/target_sim.hpp"

namespace predfuzz {

inline constexpr std::size_t kEmbeddingDim = 20;

using PathEmbedding = std::array<double, kEmbeddingDim>;

/// Per-component min-max statistics applied after the log-scaled bucket sums.
/// Frozen between cycle boundaries so embeddings stay stable while models train.
struct EmbeddingScale {
    PathEmbedding lo{};
    PathEmbedding hi{};

    /// lo = 0, hi = 1 on every component (raw values clamped into [0,1]).
    static EmbeddingScale identity();

    /// Fits lo/hi to the raw embeddings of `traces`, widened by `margin`
    /// times the observed range so moderately new traces still land inside.
    static EmbeddingScale fit(std::span<const TraceBits> traces, double margin = 0.0);
};

/// Un-normalized embedding: every branch is hashed to one of 20 buckets and
/// contributes a per-branch weight times log2(1 + bucketed hits).
PathEmbedding raw_embedding(const TraceBits& trace);

/// Deterministic 20-dimensional embedding with components in [0,1].
PathEmbedding embed_path(const TraceBits& trace, const EmbeddingScale& scale);

/// byte_index / seed_length. Throws std::invalid_argument on an empty seed or
/// an out-of-range index.
double encode_action(std::size_t byte_index, std::size_t seed_length);

/// Inverse of encode_action on the circle: action a selects the byte whose
/// encoding is nearest to a, with 1.0 wrapping to byte 0.
std::size_t decode_action(double action, std::size_t seed_length);

/// mutation_id XOR (path_id >> 2).
constexpr std::uint64_t disambiguate_testcase(std::uint64_t mutation_id, std::uint64_t path_id)
{
    return mutation_id ^ (path_id >> 2);
}

}  // namespace predfuzz
