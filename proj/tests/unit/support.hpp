#pragma once

#include <cmath>

#include "predfuzz/target_sim.hpp"

namespace predfuzz::test {

// 0 -> {1, 2} -> 3, branching on byte 0 < threshold.
inline ProgramSpec diamond_program(std::uint32_t threshold)
{
    ProgramSpec p;
    p.block_count = 4;
    p.edges = {{0, 1}, {0, 2}, {1, 3}, {2, 3}};
    Condition c;
    c.block = 0;
    c.bytes = {0};
    c.kind = Predicate::Less;
    c.operand = threshold;
    c.on_true = 0;
    c.on_false = 1;
    p.conditions = {c};
    p.entry_block = 0;
    p.target_block = 3;
    p.max_input_len = 4;
    return p;
}

// Block 0 loops (byte 0 mod (bound + 1)) times, then exits to block 1.
inline ProgramSpec loop_program(std::uint32_t bound)
{
    ProgramSpec p;
    p.block_count = 2;
    p.edges = {{0, 0}, {0, 1}};
    Condition c;
    c.block = 0;
    c.bytes = {0};
    c.kind = Predicate::CountLoop;
    c.operand = bound;
    c.on_true = 0;
    c.on_false = 1;
    p.conditions = {c};
    p.entry_block = 0;
    p.target_block = 1;
    p.max_input_len = 4;
    return p;
}

inline double rel_err(double got, double want)
{
    const double scale = std::max(std::abs(want), 1e-300);
    return std::abs(got - want) / scale;
}

}  // namespace predfuzz::test
