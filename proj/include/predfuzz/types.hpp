#pragma once

#include <cstdint>
#include <vector>

namespace predfuzz {

using Bytes = std::vector<std::uint8_t>;
using BlockId = std::uint32_t;
/// Branches are CFG edges; the id is the edge's index in ProgramSpec::edges.
using BranchId = std::uint32_t;
using PathId = std::uint64_t;

inline constexpr const char* kVersion = "0.3.0";

}  // namespace predfuzz
