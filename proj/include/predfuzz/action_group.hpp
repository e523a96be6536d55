#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "predfuzz/path_model.hpp"
#include "predfuzz/rng.hpp"

namespace predfuzz {

// Layout of the 27-dimensional particle:
//   [0] SS  seed selection probability
//   [1] SE  seed energy
//   [2..8]  HR  distribution over havoc rounds
//   [9..24] MT  distribution over the 16 mutators
//   [25..26] LC distribution over {optimal locations, common locations}
inline constexpr std::size_t kActionDim = 27;
inline constexpr std::size_t kSsIndex = 0;
inline constexpr std::size_t kSeIndex = 1;
inline constexpr std::size_t kHrOffset = 2;
inline constexpr std::size_t kHrCount = 7;
inline constexpr std::size_t kMtOffset = 9;
inline constexpr std::size_t kMtCount = 16;
inline constexpr std::size_t kLcOffset = 25;
inline constexpr std::size_t kLcCount = 2;

inline constexpr std::array<std::uint32_t, kHrCount> kHavocRounds{2, 4, 8, 16, 32, 64, 128};

inline constexpr double kSsMin = 0.01;
inline constexpr double kSsMax = 1.0;
inline constexpr double kSeMin = 1.0;
inline constexpr double kSeMax = 1024.0;

inline constexpr double kInertiaStart = 0.4;
inline constexpr double kInertiaEnd = 0.9;

using Position = std::array<double, kActionDim>;

struct ActionGroup {
    Position x{};
    Position v{};
    Position lbest{};
    double lbest_eff = -std::numeric_limits<double>::infinity();
    bool has_lbest = false;
    std::uint64_t iterations = 0;      ///< g
    std::uint64_t max_iterations = 1;  ///< G

    double ss() const { return x[kSsIndex]; }
    double se() const { return x[kSeIndex]; }
    std::span<const double> hr() const { return std::span<const double>(x).subspan(kHrOffset, kHrCount); }
    std::span<const double> mt() const { return std::span<const double>(x).subspan(kMtOffset, kMtCount); }
    std::span<const double> lc() const { return std::span<const double>(x).subspan(kLcOffset, kLcCount); }
};

/// Clamps SS and SE and repairs HR, MT and LC onto their simplices
/// (negatives to zero, renormalize, uniform if nothing is left).
void project(Position& x);

/// omega = omega_ini - (omega_ini - omega_end) * g / G.
double ldiw_inertia(std::uint64_t g, std::uint64_t G);

/// exec_steps * seed length, both floored at 1.
double seed_cost(const PathRecord& r);

/// Running queue aggregates used to initialize action groups.
class QueueStats {
public:
    void add(const PathRecord& r);
    std::size_t size() const { return costs_.size(); }
    double mean_exec_steps() const;
    double mean_trace_size() const;
    /// Number of recorded seeds with a cost strictly below `cost`.
    std::size_t cheaper_than(double cost) const;

private:
    std::vector<double> costs_;  // sorted
    double steps_ = 0.0;
    double trace_ = 0.0;
};

/// SS from the rank of 1 / seed_cost within the queue (best rank 1, worst
/// 0.01); SE from an AFL-style performance score; uniform HR and MT;
/// LC = (0.5, 0.5); zero velocity. `stats` must already include `seed`.
ActionGroup init_action_group(const PathRecord& seed, const QueueStats& stats);
ActionGroup init_action_group(const PathRecord& seed, std::span<const PathRecord* const> queue);

/// AFL-style performance score of `seed` relative to queue averages, capped at kSeMax.
double performance_score(const PathRecord& seed, double avg_exec_steps, double avg_trace_size);

/// v <- omega v + r1 (lbest - x) + r2 (gbest - x); x <- project(x + v).
/// With `shared_random` a single r multiplies both attraction terms.
ActionGroup update_particle(const ActionGroup& p, const Position& gbest, Rng& rng, bool shared_random = false);

/// Reward and successor transition value of one mutation.
struct MutationOutcome {
    double reward = 0.0;
    double next_value = 0.0;
};

/// (sum_i r_i + gamma V(p'_i)) / g. Throws std::invalid_argument on empty history.
double local_efficiency(std::span<const MutationOutcome> history, double gamma);

class SwarmState {
public:
    /// Clears the per-cycle sums and gbest, which is tracked within one cycle.
    void begin_cycle();
    void record(const MutationOutcome& o);

    /// Sum over this cycle's mutations divided by their count. Throws
    /// std::invalid_argument when nothing was recorded.
    double global_efficiency(double gamma) const;
    std::uint64_t cycle_mutations() const { return mutations_; }

    /// Replaces the particle's lbest when eff_local beats it and gbest when
    /// eff_global beats the stored global efficiency.
    void update_bests(ActionGroup& particle, double eff_local, double eff_global);

    bool has_gbest() const { return has_gbest_; }
    const Position& gbest() const { return gbest_; }
    double gbest_eff() const { return gbest_eff_; }

private:
    Position gbest_{};
    double gbest_eff_ = -std::numeric_limits<double>::infinity();
    bool has_gbest_ = false;
    double reward_sum_ = 0.0;
    double value_sum_ = 0.0;
    std::uint64_t mutations_ = 0;
};

/// Bytes with density >= 0.8 x max are optimal, the rest common. The argmax
/// byte is always optimal.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> classify_locations(std::span<const double> density);

}  // namespace predfuzz
