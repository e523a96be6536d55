#include "predfuzz/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace predfuzz {

namespace {

constexpr std::uint64_t kBucketSalt = 0x5eed0f0e6b3d1a27ULL;

struct BranchSlot {
    std::size_t bucket;
    double weight;
};

BranchSlot slot_of(BranchId branch)
{
    const std::uint64_t h = Rng::mix(static_cast<std::uint64_t>(branch) ^ kBucketSalt);
    // Weights in [0.5, 1.5) keep every branch's contribution comparable while
    // making exact cancellations between different traces vanishingly rare.
    const double w = 0.5 + static_cast<double>(h >> 11) * 0x1.0p-53;
    return {static_cast<std::size_t>((h & 0xFFFFFFFFULL) % kEmbeddingDim), w};
}

}  // namespace

EmbeddingScale EmbeddingScale::identity()
{
    EmbeddingScale s;
    s.lo.fill(0.0);
    s.hi.fill(1.0);
    return s;
}

EmbeddingScale EmbeddingScale::fit(std::span<const TraceBits> traces, double margin)
{
    if (traces.empty()) {
        return identity();
    }
    EmbeddingScale s;
    s.lo.fill(std::numeric_limits<double>::infinity());
    s.hi.fill(-std::numeric_limits<double>::infinity());
    for (const TraceBits& t : traces) {
        const PathEmbedding raw = raw_embedding(t);
        for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
            s.lo[i] = std::min(s.lo[i], raw[i]);
            s.hi[i] = std::max(s.hi[i], raw[i]);
        }
    }
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
        const double pad = margin * (s.hi[i] - s.lo[i]);
        s.lo[i] -= pad;
        s.hi[i] += pad;
    }
    return s;
}

PathEmbedding raw_embedding(const TraceBits& trace)
{
    PathEmbedding e{};
    for (const auto& [branch, bucket] : trace) {
        const BranchSlot slot = slot_of(branch);
        e[slot.bucket] += slot.weight * std::log2(1.0 + static_cast<double>(bucket));
    }
    return e;
}

PathEmbedding embed_path(const TraceBits& trace, const EmbeddingScale& scale)
{
    const PathEmbedding raw = raw_embedding(trace);
    PathEmbedding out{};
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
        const double range = scale.hi[i] - scale.lo[i];
        const double v = range > 0.0 ? (raw[i] - scale.lo[i]) / range : 0.5;
        out[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

double encode_action(std::size_t byte_index, std::size_t seed_length)
{
    if (seed_length == 0) {
        throw std::invalid_argument("cannot encode an action on an empty seed");
    }
    if (byte_index >= seed_length) {
        throw std::invalid_argument("action byte index beyond seed length");
    }
    return static_cast<double>(byte_index) / static_cast<double>(seed_length);
}

std::size_t decode_action(double action, std::size_t seed_length)
{
    if (seed_length == 0) {
        throw std::invalid_argument("cannot decode an action on an empty seed");
    }
    const double wrapped = action - std::floor(action);
    const auto idx = static_cast<std::size_t>(std::floor(wrapped * static_cast<double>(seed_length) + 0.5));
    return idx % seed_length;
}

}  // namespace predfuzz
