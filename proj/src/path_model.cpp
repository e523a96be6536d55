#include "predfuzz/path_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace predfuzz {

namespace {

constexpr double kFeatureShift = 1e-6;

std::string format_double(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <typename T>
T parse_field(const std::string& s, const std::string& what)
{
    T v{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw std::invalid_argument("bad " + what + " field '" + s + "'");
    }
    return v;
}

}  // namespace

void BranchStats::record(const TraceBits& raw_hits)
{
    for (const auto& [branch, count] : raw_hits) {
        if (branch >= hits_.size()) {
            hits_.resize(branch + 1, 0);
        }
        hits_[branch] += count;
    }
}

std::size_t BranchStats::explored_count() const
{
    return static_cast<std::size_t>(std::count_if(hits_.begin(), hits_.end(), [](auto h) { return h > 0; }));
}

std::vector<BranchId> BranchStats::explored_branches() const
{
    std::vector<BranchId> out;
    for (std::size_t b = 0; b < hits_.size(); ++b) {
        if (hits_[b] > 0) {
            out.push_back(static_cast<BranchId>(b));
        }
    }
    return out;
}

double branch_probability(const BranchStats& stats, const StaticInfo& info, BranchId ubr)
{
    if (ubr >= info.siblings.size()) {
        throw std::invalid_argument("unknown branch id");
    }
    if (stats.explored(ubr)) {
        throw std::invalid_argument("branch is already explored");
    }
    std::uint64_t total = 0;
    bool covered_sibling = false;
    for (BranchId s : info.siblings[ubr]) {
        total += stats.hits(s);
        covered_sibling = covered_sibling || stats.explored(s);
    }
    if (!covered_sibling) {
        throw std::invalid_argument("branch has no covered sibling");
    }
    return 1.0 / (static_cast<double>(total) + 1.0);
}

std::vector<BranchId> unexplored_siblings(std::span<const BranchId> covered, const BranchStats& stats,
                                          const StaticInfo& info)
{
    std::set<BranchId> phi;
    for (BranchId b : covered) {
        if (b >= info.siblings.size()) {
            continue;
        }
        for (BranchId s : info.siblings[b]) {
            if (!stats.explored(s)) {
                phi.insert(s);
            }
        }
    }
    return {phi.begin(), phi.end()};
}

double estimated_difficulty(std::span<const BranchId> covered, const BranchStats& stats, const StaticInfo& info)
{
    const auto phi = unexplored_siblings(covered, stats, info);
    if (phi.empty()) {
        return 1.0;
    }
    double sum = 0.0;
    for (BranchId b : phi) {
        sum += branch_probability(stats, info, b);
    }
    return sum / static_cast<double>(phi.size());
}

double estimated_difficulty(const PathRecord& path, const BranchStats& stats, const StaticInfo& info)
{
    return estimated_difficulty(path.branches, stats, info);
}

std::optional<double> seed_distance(std::span<const BlockId> executed_blocks, const StaticInfo& info)
{
    std::set<BlockId> seen(executed_blocks.begin(), executed_blocks.end());
    double sum = 0.0;
    std::size_t n = 0;
    for (BlockId b : seen) {
        if (b < info.bb_distance.size() && info.bb_distance[b]) {
            sum += *info.bb_distance[b];
            ++n;
        }
    }
    if (n == 0) {
        return std::nullopt;
    }
    return sum / static_cast<double>(n);
}

double max_distance(const StaticInfo& info)
{
    std::uint32_t m = 1;
    for (const auto& d : info.bb_distance) {
        if (d) {
            m = std::max(m, *d);
        }
    }
    return m;
}

double closeness(std::optional<double> distance, double d_max)
{
    if (!distance) {
        return 0.0;
    }
    return std::clamp(1.0 - *distance / d_max, 0.0, 1.0);
}

std::vector<std::array<double, 4>> normalize_features(std::span<const std::array<double, 4>> rows)
{
    std::vector<std::array<double, 4>> out(rows.begin(), rows.end());
    for (std::size_t j = 0; j < 4; ++j) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& r : rows) {
            lo = std::min(lo, r[j]);
            hi = std::max(hi, r[j]);
        }
        for (auto& r : out) {
            const double scaled = hi > lo ? (r[j] - lo) / (hi - lo) : 0.0;
            r[j] = scaled + kFeatureShift;
        }
    }
    return out;
}

FeatureWeights entropy_weights(std::span<const std::array<double, 4>> rows)
{
    const std::size_t n = rows.size();
    if (n < 2) {
        throw std::invalid_argument("entropy weights need at least two samples");
    }
    std::array<double, 4> col_sum{};
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < 4; ++j) {
            if (!(r[j] > 0.0)) {
                throw std::invalid_argument("entropy weight inputs must be strictly positive");
            }
            col_sum[j] += r[j];
        }
    }
    const double k = 1.0 / std::log(static_cast<double>(n));
    std::array<double, 4> entropy{};
    for (std::size_t j = 0; j < 4; ++j) {
        double h = 0.0;
        for (const auto& r : rows) {
            const double p = r[j] / col_sum[j];
            h -= p * std::log(p);
        }
        entropy[j] = std::clamp(k * h, 0.0, 1.0);
    }
    double denom = 0.0;
    for (double e : entropy) {
        denom += 1.0 - e;
    }
    if (!(denom > 1e-12)) {
        throw std::invalid_argument("no feature column has any dispersion");
    }
    FeatureWeights w{};
    double total = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
        w[j] = (1.0 - entropy[j]) / denom;
        total += w[j];
    }
    for (double& x : w) {
        x /= total;
    }
    return w;
}

double seed_value(const PathFeatures& f, const FeatureWeights& w)
{
    return w[0] * f.closeness + w[1] * f.difficulty + w[2] * f.speed + w[3] * f.favored;
}

// ---------------------------------------------------------------------------
// ReplayBuffer

ReplayBuffer::ReplayBuffer(BufferKind kind, std::size_t capacity) : kind_(kind), capacity_(capacity)
{
    if (capacity == 0) {
        throw std::invalid_argument("replay buffer capacity must be positive");
    }
}

ReplayBuffer::ReplayBuffer(const ReplayBuffer& other) : kind_(other.kind_), capacity_(other.capacity_)
{
    std::lock_guard lock(other.mu_);
    entries_ = other.entries_;
}

ReplayBuffer& ReplayBuffer::operator=(const ReplayBuffer& other)
{
    if (this != &other) {
        std::deque<Transition> copy;
        {
            std::lock_guard lock(other.mu_);
            copy = other.entries_;
        }
        std::lock_guard lock(mu_);
        kind_ = other.kind_;
        capacity_ = other.capacity_;
        entries_ = std::move(copy);
    }
    return *this;
}

void ReplayBuffer::push(const Transition& t)
{
    std::lock_guard lock(mu_);
    if (entries_.size() == capacity_) {
        entries_.pop_front();
    }
    entries_.push_back(t);
}

void ReplayBuffer::clear()
{
    std::lock_guard lock(mu_);
    entries_.clear();
}

std::size_t ReplayBuffer::size() const
{
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::vector<Transition> ReplayBuffer::snapshot() const
{
    std::lock_guard lock(mu_);
    return {entries_.begin(), entries_.end()};
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const
{
    std::lock_guard lock(mu_);
    std::vector<Transition> out;
    if (entries_.empty()) {
        return out;
    }
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(entries_[rng.below(entries_.size())]);
    }
    return out;
}

void record_transition(ReplayBuffer& buffer, const Transition& t, PathRecord& source, std::uint32_t threshold)
{
    buffer.push(t);
    if (t.p_next == t.p_t) {
        ++source.self_streak;
        if (source.self_streak >= threshold) {
            source.terminal = true;
        }
    } else {
        source.self_streak = 0;
    }
}

void write_transitions(const ReplayBuffer& buffer, const std::string& path)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write transition log: " + path);
    }
    out << "p_t,a_t,p_next,reward,testcase_id\n";
    for (const Transition& t : buffer.snapshot()) {
        out << t.p_t << ',' << format_double(t.a_t) << ',' << t.p_next << ',' << format_double(t.reward) << ','
            << t.testcase_id << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

std::vector<Transition> read_transitions(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open transition log: " + path);
    }
    std::vector<Transition> out;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) {
            f.push_back(item);
        }
        if (f.size() != 5) {
            throw std::invalid_argument("transition log line has " + std::to_string(f.size()) + " fields");
        }
        Transition t;
        t.p_t = parse_field<std::uint64_t>(f[0], "p_t");
        t.a_t = parse_field<double>(f[1], "a_t");
        t.p_next = parse_field<std::uint64_t>(f[2], "p_next");
        t.reward = parse_field<double>(f[3], "reward");
        t.testcase_id = parse_field<std::uint64_t>(f[4], "testcase_id");
        out.push_back(t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tabular oracle

TabularValues tabular_value_oracle(const TabularMdp& mdp, double gamma,
                                   const std::optional<std::vector<std::vector<double>>>& policy,
                                   std::size_t max_iterations)
{
    if (mdp.states == 0 || mdp.actions == 0 || mdp.states > 64 || mdp.actions > 16) {
        throw std::invalid_argument("tabular MDP must have 1..64 states and 1..16 actions");
    }
    if (mdp.outcomes.size() != mdp.states || mdp.terminal.size() != mdp.states) {
        throw std::invalid_argument("tabular MDP tables do not match the state count");
    }
    if (policy && policy->size() != mdp.states) {
        throw std::invalid_argument("policy table does not match the state count");
    }
    for (const auto& row : mdp.outcomes) {
        if (row.size() != mdp.actions) {
            throw std::invalid_argument("tabular MDP tables do not match the action count");
        }
        for (const auto& outs : row) {
            for (const auto& o : outs) {
                if (o.next >= mdp.states) {
                    throw std::invalid_argument("tabular MDP outcome leads to an unknown state");
                }
            }
        }
    }

    TabularValues tv;
    tv.q.assign(mdp.states, std::vector<double>(mdp.actions, 0.0));
    tv.v.assign(mdp.states, 0.0);
    constexpr double kTol = 1e-12;
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        double residual = 0.0;
        for (std::size_t s = 0; s < mdp.states; ++s) {
            if (mdp.terminal[s]) {
                continue;
            }
            for (std::size_t a = 0; a < mdp.actions; ++a) {
                double q = 0.0;
                for (const auto& o : mdp.outcomes[s][a]) {
                    q += o.prob * (o.reward + gamma * tv.v[o.next]);
                }
                residual = std::max(residual, std::abs(q - tv.q[s][a]));
                tv.q[s][a] = q;
            }
        }
        for (std::size_t s = 0; s < mdp.states; ++s) {
            if (mdp.terminal[s]) {
                tv.v[s] = 0.0;
                continue;
            }
            double v = 0.0;
            if (policy) {
                for (std::size_t a = 0; a < mdp.actions; ++a) {
                    v += (*policy)[s][a] * tv.q[s][a];
                }
            } else {
                v = *std::max_element(tv.q[s].begin(), tv.q[s].end());
            }
            tv.v[s] = v;
        }
        tv.iterations = it;
        tv.residual = residual;
        if (residual < kTol) {
            return tv;
        }
    }
    throw std::runtime_error("tabular value iteration did not converge, residual " + format_double(tv.residual));
}

}  // namespace predfuzz
