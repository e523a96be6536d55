#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "predfuzz/mutators.hpp"
#include "predfuzz/rng.hpp"
#include "predfuzz/types.hpp"

namespace predfuzz {

enum class Predicate : std::uint8_t {
    Less,       ///< value < operand
    Equal,      ///< value == operand
    InRange,    ///< operand <= value <= operand_hi
    CountLoop,  ///< self-loop taken (value % (operand + 1)) times, then exit
};

/// A two-way branch point. `on_true` / `on_false` are edge ids leaving
/// `block`; for CountLoop `on_true` is the self edge.
struct Condition {
    BlockId block = 0;
    std::vector<std::uint32_t> bytes;  ///< little-endian operand bytes
    Predicate kind = Predicate::Less;
    std::uint32_t operand = 0;
    std::uint32_t operand_hi = 0;
    BranchId on_true = 0;
    BranchId on_false = 0;

    friend bool operator==(const Condition&, const Condition&) = default;
};

struct Edge {
    BlockId from = 0;
    BlockId to = 0;

    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Synthetic byte-driven target program.
struct ProgramSpec {
    std::uint32_t block_count = 0;
    std::vector<Edge> edges;
    std::vector<Condition> conditions;
    BlockId entry_block = 0;
    BlockId target_block = 0;
    std::uint32_t max_input_len = 0;

    /// Throws std::invalid_argument naming the first violated invariant.
    void validate() const;

    friend bool operator==(const ProgramSpec&, const ProgramSpec&) = default;
};

void to_json(nlohmann::json& j, const ProgramSpec& p);
void from_json(const nlohmann::json& j, ProgramSpec& p);

ProgramSpec load_program(const std::string& path);
void save_program(const ProgramSpec& program, const std::string& path);

struct GenerationConfig {
    std::uint32_t blocks = 64;
    std::uint32_t gates = 2;
    double hardness = 1.0;
    std::uint64_t seed = 1;
    std::uint32_t max_input_len = 16;
    /// 1 = single-byte gates; 2 = 16-bit gates (pass-rate down to 1/65536).
    std::uint32_t gate_bytes = 1;

    friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;
};

/// Parses "blocks=64,gates=2,hardness=1,seed=7,len=16,gate_bytes=1".
GenerationConfig parse_generation_params(const std::string& text);

/// Pure function of `config`. Builds a layered CFG whose target sits at the
/// end of a spine guarded by `gates` conditions on distinct input bytes;
/// every other condition on the spine rejoins, so the chance that a random
/// input reaches the target is the product of the gate pass-rates.
ProgramSpec generate_program(const GenerationConfig& config);

/// Fraction of byte values (or 16-bit values) that pass gate `c`.
double gate_pass_rate(const Condition& c);

/// Conditions whose false edge leaves the spine for good.
std::vector<Condition> gate_conditions(const ProgramSpec& program);

/// Sorted (branch, bucketed hit count) pairs.
using TraceBits = std::vector<std::pair<BranchId, std::uint32_t>>;

/// Coverage-bitmap bucketing into {1,2,3,4-7,8-15,16-31,32-127,128+}.
/// Each class is represented by its smallest member, which makes the
/// mapping idempotent.
std::uint32_t bucket_hits(std::uint32_t hits);
TraceBits bucket_trace(const TraceBits& raw);
PathId hash_trace(const TraceBits& bucketed);

struct ExecutionResult {
    TraceBits raw_hits;    ///< un-bucketed per-branch hit counts
    TraceBits trace_bits;  ///< bucketed
    PathId path_id = 0;
    std::vector<BlockId> executed_blocks;
    std::uint64_t exec_time = 0;  ///< interpreted steps

    bool reached(BlockId block) const;
};

ExecutionResult execute(const ProgramSpec& program, std::span<const std::uint8_t> input);

/// Precomputes per-block dispatch once so repeated executions of the same
/// program skip the edge scan. Results are identical to execute().
class Executor {
public:
    explicit Executor(ProgramSpec program);

    ExecutionResult run(std::span<const std::uint8_t> input) const;
    const ProgramSpec& program() const noexcept { return program_; }

private:
    ProgramSpec program_;
    std::vector<std::optional<std::size_t>> condition_;  // by block
    std::vector<std::optional<BranchId>> jump_;          // by block
};

struct StaticInfo {
    std::vector<std::optional<std::uint32_t>> bb_distance;  ///< by block
    std::vector<std::vector<BranchId>> siblings;            ///< by branch
    std::vector<std::optional<std::size_t>> condition_of;   ///< by branch
};

StaticInfo compute_static_info(const ProgramSpec& program);

/// Distribution over next path ids when one mutator, drawn uniformly from
/// `mutators`, is applied at byte `action` of `seed` with a uniformly drawn
/// outcome. Exhaustive when the total outcome count is at most
/// `max_outcomes`, otherwise `max_outcomes` Monte-Carlo draws from `rng`.
std::map<PathId, double> true_transition_distribution(const ProgramSpec& program,
                                                      const Bytes& seed,
                                                      std::size_t action,
                                                      std::span<const Mutator> mutators,
                                                      std::size_t max_outcomes = 1u << 16,
                                                      std::uint64_t sample_seed = 0);

}  // namespace predfuzz
