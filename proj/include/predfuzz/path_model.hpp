#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "predfuzz/encoding.hpp"
#include "predfuzz/rng.hpp"
#include "predfuzz/target_sim.hpp"
#include "predfuzz/types.hpp"

namespace predfuzz {

/// The four seed-value features, each in [0,1] with higher = better.
struct PathFeatures {
    double closeness = 0.0;   ///< 1 - d_s / d_max
    double difficulty = 1.0;  ///< estimated difficulty ED_s
    double speed = 0.0;       ///< min_exec_steps_seen / exec_steps
    double favored = 0.0;     ///< 0 or 1

    std::array<double, 4> as_array() const { return {closeness, difficulty, speed, favored}; }
};

using FeatureWeights = std::array<double, 4>;
inline constexpr FeatureWeights kUniformWeights{0.25, 0.25, 0.25, 0.25};

inline constexpr std::uint32_t kTerminalThreshold = 256;
inline constexpr std::size_t kHistoricalCapacity = 100'000;
inline constexpr std::size_t kPredictedCapacity = 400'000;

struct PathRecord {
    PathId path_id = 0;
    Bytes seed;
    TraceBits trace;                    ///< bucketed
    std::vector<BranchId> branches;     ///< covered branches, ascending
    std::uint64_t exec_steps = 0;
    std::optional<double> distance;     ///< mean defined bb_distance of executed blocks
    bool reaches_target = false;
    PathFeatures features;
    double value = 0.0;
    bool terminal = false;
    std::uint32_t self_streak = 0;
    std::uint64_t found_at = 0;         ///< execution count at discovery
};

/// Cumulative per-branch hit counts across every execution of a campaign.
class BranchStats {
public:
    void record(const TraceBits& raw_hits);
    std::uint64_t hits(BranchId b) const { return b < hits_.size() ? hits_[b] : 0; }
    bool explored(BranchId b) const { return hits(b) > 0; }
    std::size_t explored_count() const;
    std::vector<BranchId> explored_branches() const;

private:
    std::vector<std::uint64_t> hits_;
};

/// 1 / (sum of hits over the condition's branches + 1) for an unexplored
/// branch. Throws std::invalid_argument when `ubr` is explored or has no
/// covered sibling.
double branch_probability(const BranchStats& stats, const StaticInfo& info, BranchId ubr);

/// Phi(s): unexplored siblings of the branches on the path's trace.
std::vector<BranchId> unexplored_siblings(std::span<const BranchId> covered, const BranchStats& stats,
                                          const StaticInfo& info);

/// Mean branch_probability over Phi(s); 1 when Phi(s) is empty.
double estimated_difficulty(std::span<const BranchId> covered, const BranchStats& stats, const StaticInfo& info);
double estimated_difficulty(const PathRecord& path, const BranchStats& stats, const StaticInfo& info);

/// Mean defined bb_distance over the distinct executed blocks; nullopt when
/// none of them can reach the target.
std::optional<double> seed_distance(std::span<const BlockId> executed_blocks, const StaticInfo& info);

/// Largest defined bb_distance in the program (at least 1).
double max_distance(const StaticInfo& info);

/// 1 - distance / d_max, or 0 for an undefined distance.
double closeness(std::optional<double> distance, double d_max);

/// Per-column min-max scaling followed by a +1e-6 shift, producing the
/// strictly positive matrix entropy_weights() expects.
std::vector<std::array<double, 4>> normalize_features(std::span<const std::array<double, 4>> rows);

/// Entropy Weight Method over an n x 4 matrix of strictly positive entries.
/// Throws std::invalid_argument for n < 2, a non-positive entry, or when no
/// column has any dispersion.
FeatureWeights entropy_weights(std::span<const std::array<double, 4>> rows);

double seed_value(const PathFeatures& f, const FeatureWeights& w);

inline double transition_reward(double v_prev, double v_next) { return v_next - v_prev; }

struct Transition {
    PathId p_t = 0;
    double a_t = 0.0;
    PathId p_next = 0;
    double reward = 0.0;
    std::uint64_t testcase_id = 0;
    PathEmbedding s{};
    PathEmbedding s_next{};
    bool terminal_next = false;
    std::uint32_t next_seed_len = 0;  ///< 0 when the successor was never executed
};

enum class BufferKind { Historical, Predicted };

/// Bounded FIFO of transitions. One writer, any number of readers; readers
/// take snapshots.
class ReplayBuffer {
public:
    ReplayBuffer(BufferKind kind, std::size_t capacity);
    ReplayBuffer(const ReplayBuffer& other);
    ReplayBuffer& operator=(const ReplayBuffer& other);

    void push(const Transition& t);
    void clear();
    std::size_t size() const;
    std::size_t capacity() const noexcept { return capacity_; }
    BufferKind kind() const noexcept { return kind_; }
    std::vector<Transition> snapshot() const;
    /// `n` uniform draws with replacement.
    std::vector<Transition> sample(std::size_t n, Rng& rng) const;

private:
    BufferKind kind_;
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::deque<Transition> entries_;
};

/// Appends `t` and maintains the source path's self-transition streak;
/// the source turns terminal once the streak reaches `threshold`.
void record_transition(ReplayBuffer& buffer, const Transition& t, PathRecord& source,
                       std::uint32_t threshold = kTerminalThreshold);

/// One line per transition: p_t,a_t,p_next,reward,testcase_id.
void write_transitions(const ReplayBuffer& buffer, const std::string& path);
std::vector<Transition> read_transitions(const std::string& path);

struct TabularOutcome {
    std::size_t next = 0;
    double prob = 0.0;
    double reward = 0.0;
};

/// Finite MDP: outcomes[s][a] is a distribution over next states.
struct TabularMdp {
    std::size_t states = 0;
    std::size_t actions = 0;
    std::vector<std::vector<std::vector<TabularOutcome>>> outcomes;
    std::vector<bool> terminal;
};

struct TabularValues {
    std::vector<std::vector<double>> q;  ///< [state][action]
    std::vector<double> v;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/// Exact Bellman fixed point. With a policy (probabilities [state][action])
/// this is policy evaluation; without one, greedy value iteration. Terminal
/// states have V = 0 and Q = 0. Throws std::runtime_error reporting the
/// residual if the iteration fails to converge.
TabularValues tabular_value_oracle(const TabularMdp& mdp, double gamma,
                                   const std::optional<std::vector<std::vector<double>>>& policy = std::nullopt,
                                   std::size_t max_iterations = 1'000'000);

}  // namespace predfuzz
