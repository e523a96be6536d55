#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

#include "predfuzz/rng.hpp"
#include "predfuzz/types.hpp"

namespace predfuzz {

/// The 16-entry havoc mutator catalogue.
enum class Mutator : std::uint8_t {
    BitFlip1 = 0,
    BitFlip2,
    BitFlip4,
    ByteFlip,
    Arith8Add,
    Arith8Sub,
    Arith16,
    Arith32,
    Interesting8,
    Interesting16,
    Interesting32,
    RandomByte,
    DeleteByte,
    InsertByte,
    OverwriteBlock,
    DuplicateBlock,
};

inline constexpr std::size_t kMutatorCount = 16;
inline constexpr std::uint32_t kArithMax = 35;
inline constexpr std::size_t kMaxBlockLen = 8;

std::string_view mutator_name(Mutator m);

/// Every mutator is a uniform choice among a finite, enumerable set of
/// outcomes at a given position. outcome_count() sizes that set and
/// apply_outcome() materializes one member of it, so exhaustive enumeration
/// and random application share one code path.
///
/// `max_len` bounds the result length; inserting mutators drop the tail byte
/// when the input is already at the bound.
std::size_t outcome_count(Mutator m, const Bytes& input, std::size_t pos, std::size_t max_len);

Bytes apply_outcome(Mutator m, const Bytes& input, std::size_t pos, std::size_t outcome, std::size_t max_len);

/// Applies `m` at `pos` with a uniformly drawn outcome. `pos` must be < input.size().
Bytes apply_mutator(Mutator m, const Bytes& input, std::size_t pos, Rng& rng, std::size_t max_len);

constexpr std::array<Mutator, kMutatorCount> all_mutators()
{
    std::array<Mutator, kMutatorCount> out{};
    for (std::size_t i = 0; i < kMutatorCount; ++i) {
        out[i] = static_cast<Mutator>(i);
    }
    return out;
}

}  // namespace predfuzz
