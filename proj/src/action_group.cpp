#include "predfuzz/action_group.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace predfuzz {

namespace {

void repair_simplex(Position& x, std::size_t offset, std::size_t count)
{
    double sum = 0.0;
    for (std::size_t i = offset; i < offset + count; ++i) {
        if (!(x[i] > 0.0)) {
            x[i] = 0.0;
        }
        sum += x[i];
    }
    for (std::size_t i = offset; i < offset + count; ++i) {
        x[i] = sum > 0.0 ? x[i] / sum : 1.0 / static_cast<double>(count);
    }
}

}  // namespace

void project(Position& x)
{
    x[kSsIndex] = std::isfinite(x[kSsIndex]) ? std::clamp(x[kSsIndex], kSsMin, kSsMax) : kSsMax;
    x[kSeIndex] = std::isfinite(x[kSeIndex]) ? std::clamp(x[kSeIndex], kSeMin, kSeMax) : kSeMin;
    repair_simplex(x, kHrOffset, kHrCount);
    repair_simplex(x, kMtOffset, kMtCount);
    repair_simplex(x, kLcOffset, kLcCount);
}

double ldiw_inertia(std::uint64_t g, std::uint64_t G)
{
    if (G == 0) {
        throw std::invalid_argument("maximum iteration count must be positive");
    }
    if (g > G) {
        throw std::invalid_argument("iteration count exceeds its maximum");
    }
    return kInertiaStart - (kInertiaStart - kInertiaEnd) * (static_cast<double>(g) / static_cast<double>(G));
}

double performance_score(const PathRecord& seed, double avg_exec_steps, double avg_trace_size)
{
    double score = 100.0;
    const double t = static_cast<double>(seed.exec_steps);
    if (t * 0.1 > avg_exec_steps) {
        score = 10.0;
    } else if (t * 0.25 > avg_exec_steps) {
        score = 25.0;
    } else if (t * 0.5 > avg_exec_steps) {
        score = 50.0;
    } else if (t * 0.75 > avg_exec_steps) {
        score = 75.0;
    } else if (t * 4.0 < avg_exec_steps) {
        score = 300.0;
    } else if (t * 3.0 < avg_exec_steps) {
        score = 200.0;
    } else if (t * 2.0 < avg_exec_steps) {
        score = 150.0;
    }
    const double size = static_cast<double>(seed.trace.size());
    if (size * 0.3 > avg_trace_size) {
        score *= 3.0;
    } else if (size * 0.5 > avg_trace_size) {
        score *= 2.0;
    } else if (size * 0.75 > avg_trace_size) {
        score *= 1.5;
    } else if (size * 3.0 < avg_trace_size) {
        score *= 0.25;
    } else if (size * 2.0 < avg_trace_size) {
        score *= 0.5;
    } else if (size * 1.5 < avg_trace_size) {
        score *= 0.75;
    }
    return std::clamp(score, kSeMin, kSeMax);
}

double seed_cost(const PathRecord& r)
{
    return static_cast<double>(std::max<std::uint64_t>(r.exec_steps, 1)) *
           static_cast<double>(std::max<std::size_t>(r.seed.size(), 1));
}

void QueueStats::add(const PathRecord& r)
{
    const double c = seed_cost(r);
    costs_.insert(std::upper_bound(costs_.begin(), costs_.end(), c), c);
    steps_ += static_cast<double>(r.exec_steps);
    trace_ += static_cast<double>(r.trace.size());
}

double QueueStats::mean_exec_steps() const
{
    return costs_.empty() ? 0.0 : steps_ / static_cast<double>(costs_.size());
}

double QueueStats::mean_trace_size() const
{
    return costs_.empty() ? 0.0 : trace_ / static_cast<double>(costs_.size());
}

std::size_t QueueStats::cheaper_than(double cost) const
{
    return static_cast<std::size_t>(std::lower_bound(costs_.begin(), costs_.end(), cost) - costs_.begin());
}

ActionGroup init_action_group(const PathRecord& seed, std::span<const PathRecord* const> queue)
{
    QueueStats stats;
    for (const PathRecord* r : queue) {
        if (r != nullptr) {
            stats.add(*r);
        }
    }
    return init_action_group(seed, stats);
}

ActionGroup init_action_group(const PathRecord& seed, const QueueStats& stats)
{
    const std::size_t n = stats.size();
    const std::size_t better = stats.cheaper_than(seed_cost(seed));
    ActionGroup g;
    if (n <= 1) {
        g.x[kSsIndex] = kSsMax;
        g.x[kSeIndex] = performance_score(seed, static_cast<double>(seed.exec_steps),
                                          static_cast<double>(seed.trace.size()));
    } else {
        g.x[kSsIndex] = kSsMax - (kSsMax - kSsMin) * static_cast<double>(better) / static_cast<double>(n - 1);
        g.x[kSeIndex] = performance_score(seed, stats.mean_exec_steps(), stats.mean_trace_size());
    }
    for (std::size_t i = 0; i < kHrCount; ++i) {
        g.x[kHrOffset + i] = 1.0 / static_cast<double>(kHrCount);
    }
    for (std::size_t i = 0; i < kMtCount; ++i) {
        g.x[kMtOffset + i] = 1.0 / static_cast<double>(kMtCount);
    }
    g.x[kLcOffset] = 0.5;
    g.x[kLcOffset + 1] = 0.5;
    project(g.x);
    g.v.fill(0.0);
    g.lbest = g.x;
    return g;
}

ActionGroup update_particle(const ActionGroup& p, const Position& gbest, Rng& rng, bool shared_random)
{
    ActionGroup out = p;
    const Position& lbest = p.has_lbest ? p.lbest : p.x;
    const std::uint64_t G = std::max<std::uint64_t>(p.max_iterations, 1);
    const double omega = ldiw_inertia(std::min(p.iterations, G), G);
    const double r1 = rng.uniform();
    const double r2 = shared_random ? r1 : rng.uniform();
    for (std::size_t i = 0; i < kActionDim; ++i) {
        out.v[i] = omega * p.v[i] + r1 * (lbest[i] - p.x[i]) + r2 * (gbest[i] - p.x[i]);
        out.x[i] = p.x[i] + out.v[i];
    }
    project(out.x);
    return out;
}

double local_efficiency(std::span<const MutationOutcome> history, double gamma)
{
    if (history.empty()) {
        throw std::invalid_argument("local efficiency needs at least one mutation");
    }
    double sum = 0.0;
    for (const auto& o : history) {
        sum += o.reward + gamma * o.next_value;
    }
    return sum / static_cast<double>(history.size());
}

void SwarmState::begin_cycle()
{
    reward_sum_ = 0.0;
    value_sum_ = 0.0;
    mutations_ = 0;
    has_gbest_ = false;
    gbest_eff_ = -std::numeric_limits<double>::infinity();
}

void SwarmState::record(const MutationOutcome& o)
{
    reward_sum_ += o.reward;
    value_sum_ += o.next_value;
    ++mutations_;
}

double SwarmState::global_efficiency(double gamma) const
{
    if (mutations_ == 0) {
        throw std::invalid_argument("global efficiency needs at least one mutation this cycle");
    }
    return (reward_sum_ + gamma * value_sum_) / static_cast<double>(mutations_);
}

void SwarmState::update_bests(ActionGroup& particle, double eff_local, double eff_global)
{
    if (!particle.has_lbest || eff_local > particle.lbest_eff) {
        particle.lbest = particle.x;
        particle.lbest_eff = eff_local;
        particle.has_lbest = true;
    }
    if (!has_gbest_ || eff_global > gbest_eff_) {
        gbest_ = particle.x;
        gbest_eff_ = eff_global;
        has_gbest_ = true;
    }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> classify_locations(std::span<const double> density)
{
    if (density.empty()) {
        throw std::invalid_argument("empty location density");
    }
    const auto argmax = static_cast<std::size_t>(std::max_element(density.begin(), density.end()) - density.begin());
    const double cut = 0.8 * density[argmax];
    std::vector<std::size_t> optimal;
    std::vector<std::size_t> common;
    for (std::size_t i = 0; i < density.size(); ++i) {
        if (i == argmax || density[i] >= cut) {
            optimal.push_back(i);
        } else {
            common.push_back(i);
        }
    }
    return {optimal, common};
}

}  // namespace predfuzz
