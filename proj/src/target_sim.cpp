#include "predfuzz/target_sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace predfuzz {

namespace {

constexpr std::uint64_t kMaxSteps = 1u << 20;

std::string predicate_name(Predicate p)
{
    switch (p) {
    case Predicate::Less: return "less";
    case Predicate::Equal: return "equal";
    case Predicate::InRange: return "in_range";
    case Predicate::CountLoop: return "count_loop";
    }
    return "less";
}

Predicate predicate_from(const std::string& s)
{
    if (s == "less") return Predicate::Less;
    if (s == "equal") return Predicate::Equal;
    if (s == "in_range") return Predicate::InRange;
    if (s == "count_loop") return Predicate::CountLoop;
    throw std::invalid_argument("unknown predicate kind '" + s + "'");
}

std::uint64_t read_operand(const Condition& c, std::span<const std::uint8_t> input)
{
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < c.bytes.size(); ++i) {
        const std::uint32_t idx = c.bytes[i];
        const std::uint64_t b = idx < input.size() ? input[idx] : 0;
        v |= b << (8 * i);
    }
    return v;
}

// Per-block outgoing structure, derived from the flat edge/condition lists.
struct Layout {
    std::vector<std::optional<std::size_t>> condition;  // by block
    std::vector<std::optional<BranchId>> jump;          // unconditional edge, by block
};

Layout build_layout(const ProgramSpec& p)
{
    Layout l;
    l.condition.assign(p.block_count, std::nullopt);
    l.jump.assign(p.block_count, std::nullopt);
    std::vector<bool> conditional(p.edges.size(), false);
    for (std::size_t i = 0; i < p.conditions.size(); ++i) {
        const Condition& c = p.conditions[i];
        l.condition[c.block] = i;
        conditional[c.on_true] = true;
        conditional[c.on_false] = true;
    }
    for (std::size_t e = 0; e < p.edges.size(); ++e) {
        if (!conditional[e]) {
            l.jump[p.edges[e].from] = static_cast<BranchId>(e);
        }
    }
    return l;
}

std::vector<bool> reachable_from(const ProgramSpec& p, BlockId start)
{
    std::vector<std::vector<BlockId>> succ(p.block_count);
    for (const Edge& e : p.edges) {
        succ[e.from].push_back(e.to);
    }
    std::vector<bool> seen(p.block_count, false);
    std::deque<BlockId> queue{start};
    seen[start] = true;
    while (!queue.empty()) {
        const BlockId b = queue.front();
        queue.pop_front();
        for (BlockId n : succ[b]) {
            if (!seen[n]) {
                seen[n] = true;
                queue.push_back(n);
            }
        }
    }
    return seen;
}

// Incremental CFG construction used by generate_program.
class Builder {
public:
    explicit Builder(std::uint32_t max_len) { program_.max_input_len = max_len; }

    BlockId add_block() { return program_.block_count++; }

    BranchId add_edge(BlockId from, BlockId to)
    {
        program_.edges.push_back({from, to});
        return static_cast<BranchId>(program_.edges.size() - 1);
    }

    void add_condition(BlockId block, std::vector<std::uint32_t> bytes, Predicate kind, std::uint32_t lo,
                       std::uint32_t hi, BlockId if_true, BlockId if_false)
    {
        Condition c;
        c.block = block;
        c.bytes = std::move(bytes);
        c.kind = kind;
        c.operand = lo;
        c.operand_hi = hi;
        c.on_true = add_edge(block, if_true);
        c.on_false = add_edge(block, if_false);
        program_.conditions.push_back(std::move(c));
    }

    ProgramSpec& program() { return program_; }

private:
    ProgramSpec program_;
};

// Consumes exactly `budget` new blocks hanging off `open`, returns the new
// open block. Fillers either rejoin (diamonds) or fall through, so they never
// change whether the block after them is reached.
BlockId emit_fillers(Builder& b, BlockId open, std::uint32_t budget, Rng& rng)
{
    const auto max_len = b.program().max_input_len;
    while (budget > 0) {
        const double roll = rng.uniform();
        const std::uint32_t byte = static_cast<std::uint32_t>(rng.below(max_len));
        if (budget >= 3 && roll < 0.45) {
            const BlockId left = b.add_block();
            const BlockId right = b.add_block();
            const BlockId join = b.add_block();
            const auto threshold = static_cast<std::uint32_t>(64 + rng.below(129));
            b.add_condition(open, {byte}, Predicate::Less, threshold, 0, left, right);
            b.add_edge(left, join);
            b.add_edge(right, join);
            open = join;
            budget -= 3;
        } else if (roll < 0.7) {
            const BlockId next = b.add_block();
            const auto iterations = static_cast<std::uint32_t>(2 + rng.below(11));
            b.add_condition(open, {byte}, Predicate::CountLoop, iterations, 0, open, next);
            open = next;
            budget -= 1;
        } else {
            const BlockId next = b.add_block();
            b.add_edge(open, next);
            open = next;
            budget -= 1;
        }
    }
    return open;
}

}  // namespace

// ---------------------------------------------------------------------------
// ProgramSpec

void ProgramSpec::validate() const
{
    if (block_count == 0) {
        throw std::invalid_argument("program has no blocks");
    }
    if (entry_block >= block_count || target_block >= block_count) {
        throw std::invalid_argument("entry or target block out of range");
    }
    if (max_input_len == 0) {
        throw std::invalid_argument("max_input_len must be positive");
    }
    std::vector<std::uint32_t> out_degree(block_count, 0);
    for (const Edge& e : edges) {
        if (e.from >= block_count || e.to >= block_count) {
            throw std::invalid_argument("edge endpoint out of range");
        }
        if (e.to == entry_block && e.from != entry_block) {
            throw std::invalid_argument("entry block must not have predecessors");
        }
        ++out_degree[e.from];
    }
    std::vector<bool> has_condition(block_count, false);
    std::vector<bool> edge_claimed(edges.size(), false);
    for (const Condition& c : conditions) {
        if (c.block >= block_count) {
            throw std::invalid_argument("condition block out of range");
        }
        if (has_condition[c.block]) {
            throw std::invalid_argument("block has more than one condition");
        }
        has_condition[c.block] = true;
        if (c.bytes.empty() || c.bytes.size() > 4) {
            throw std::invalid_argument("condition must read between 1 and 4 bytes");
        }
        for (std::uint32_t idx : c.bytes) {
            if (idx >= max_input_len) {
                throw std::invalid_argument("condition reads byte beyond max_input_len");
            }
        }
        if (c.on_true >= edges.size() || c.on_false >= edges.size() || c.on_true == c.on_false) {
            throw std::invalid_argument("condition edges invalid");
        }
        if (edges[c.on_true].from != c.block || edges[c.on_false].from != c.block) {
            throw std::invalid_argument("condition edges must leave the condition block");
        }
        if (edge_claimed[c.on_true] || edge_claimed[c.on_false]) {
            throw std::invalid_argument("edge shared between conditions");
        }
        edge_claimed[c.on_true] = edge_claimed[c.on_false] = true;
        if (c.kind == Predicate::CountLoop && edges[c.on_true].to != c.block) {
            throw std::invalid_argument("loop condition must take its self edge when true");
        }
        if (c.kind == Predicate::InRange && c.operand_hi < c.operand) {
            throw std::invalid_argument("empty range predicate");
        }
    }
    for (BlockId b = 0; b < block_count; ++b) {
        if (out_degree[b] > 2) {
            throw std::invalid_argument("block fan-out exceeds 2");
        }
        if (!has_condition[b] && out_degree[b] > 1) {
            throw std::invalid_argument("unconditional block with more than one successor");
        }
        if (has_condition[b] && out_degree[b] != 2) {
            throw std::invalid_argument("condition block must have exactly two successors");
        }
    }
    if (!reachable_from(*this, entry_block)[target_block]) {
        throw std::invalid_argument("target block unreachable from entry");
    }
}

void to_json(nlohmann::json& j, const ProgramSpec& p)
{
    std::vector<BlockId> blocks(p.block_count);
    std::iota(blocks.begin(), blocks.end(), BlockId{0});
    nlohmann::json edges = nlohmann::json::array();
    for (const Edge& e : p.edges) {
        edges.push_back({e.from, e.to});
    }
    nlohmann::json conds = nlohmann::json::array();
    for (const Condition& c : p.conditions) {
        conds.push_back({{"block", c.block},
                         {"bytes", c.bytes},
                         {"kind", predicate_name(c.kind)},
                         {"operand", c.operand},
                         {"operand_hi", c.operand_hi},
                         {"on_true", c.on_true},
                         {"on_false", c.on_false}});
    }
    j = nlohmann::json{{"format", "predfuzz-program"},
                       {"version", 1},
                       {"blocks", blocks},
                       {"edges", edges},
                       {"conditions", conds},
                       {"entry", p.entry_block},
                       {"target", p.target_block},
                       {"max_input_len", p.max_input_len}};
}

void from_json(const nlohmann::json& j, ProgramSpec& p)
{
    p = ProgramSpec{};
    const auto blocks = j.at("blocks").get<std::vector<BlockId>>();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i] != i) {
            throw std::invalid_argument("block ids must be 0..n-1 in order");
        }
    }
    p.block_count = static_cast<std::uint32_t>(blocks.size());
    for (const auto& e : j.at("edges")) {
        p.edges.push_back({e.at(0).get<BlockId>(), e.at(1).get<BlockId>()});
    }
    for (const auto& cj : j.at("conditions")) {
        Condition c;
        c.block = cj.at("block").get<BlockId>();
        c.bytes = cj.at("bytes").get<std::vector<std::uint32_t>>();
        c.kind = predicate_from(cj.at("kind").get<std::string>());
        c.operand = cj.at("operand").get<std::uint32_t>();
        c.operand_hi = cj.value("operand_hi", 0u);
        c.on_true = cj.at("on_true").get<BranchId>();
        c.on_false = cj.at("on_false").get<BranchId>();
        p.conditions.push_back(std::move(c));
    }
    p.entry_block = j.at("entry").get<BlockId>();
    p.target_block = j.at("target").get<BlockId>();
    p.max_input_len = j.at("max_input_len").get<std::uint32_t>();
}

ProgramSpec load_program(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open program file: " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("malformed program file " + path + ": " + e.what());
    }
    ProgramSpec p = j.get<ProgramSpec>();
    p.validate();
    return p;
}

void save_program(const ProgramSpec& program, const std::string& path)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write program file: " + path);
    }
    out << nlohmann::json(program).dump(2) << '\n';
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

// ---------------------------------------------------------------------------
// Generation

GenerationConfig parse_generation_params(const std::string& text)
{
    GenerationConfig cfg;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("generation parameter '" + item + "' is not key=value");
        }
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        static const std::set<std::string> known{"blocks", "gates", "hardness", "seed", "len", "max_input_len", "gate_bytes"};
        if (!known.contains(key)) {
            throw std::invalid_argument("unknown generation parameter '" + key + "'");
        }
        try {
            std::size_t used = 0;
            if (key == "hardness") {
                cfg.hardness = std::stod(value, &used);
            } else {
                const unsigned long long v = std::stoull(value, &used);
                if (key == "seed") cfg.seed = v;
                else if (key == "blocks") cfg.blocks = static_cast<std::uint32_t>(v);
                else if (key == "gates") cfg.gates = static_cast<std::uint32_t>(v);
                else if (key == "gate_bytes") cfg.gate_bytes = static_cast<std::uint32_t>(v);
                else cfg.max_input_len = static_cast<std::uint32_t>(v);
            }
            if (used != value.size()) {
                throw std::invalid_argument("trailing characters");
            }
        } catch (const std::logic_error&) {
            throw std::invalid_argument("bad value for generation parameter '" + key + "': " + value);
        }
    }
    return cfg;
}

ProgramSpec generate_program(const GenerationConfig& config)
{
    if (config.blocks < 4) {
        throw std::invalid_argument("block count must be at least 4");
    }
    if (!(config.hardness >= 0.0 && config.hardness <= 1.0)) {
        throw std::invalid_argument("gate hardness must lie in [0,1]");
    }
    if (config.gate_bytes < 1 || config.gate_bytes > 2) {
        throw std::invalid_argument("gate_bytes must be 1 or 2");
    }
    if (config.max_input_len == 0) {
        throw std::invalid_argument("max_input_len must be positive");
    }
    if (static_cast<std::uint64_t>(config.gates) * config.gate_bytes > config.max_input_len) {
        throw std::invalid_argument("gate chain needs more bytes than max_input_len");
    }
    const std::uint64_t fixed = 1 + 2 * static_cast<std::uint64_t>(config.gates);
    if (config.blocks < fixed) {
        throw std::invalid_argument("block count too small for the requested gate chain");
    }

    Rng rng(config.seed);
    Builder b(config.max_input_len);

    std::vector<std::uint32_t> byte_order(config.max_input_len);
    std::iota(byte_order.begin(), byte_order.end(), 0u);
    for (std::size_t i = byte_order.size(); i > 1; --i) {
        std::swap(byte_order[i - 1], byte_order[rng.below(i)]);
    }

    // Filler budget split over G+1 spine slots and G side slots.
    const std::uint32_t fillers = config.blocks - static_cast<std::uint32_t>(fixed);
    const std::size_t slots = 2 * config.gates + 1;
    std::vector<std::uint32_t> budget(slots, 0);
    for (std::uint32_t i = 0; i < fillers; ++i) {
        ++budget[rng.below(slots)];
    }

    const double domain = config.gate_bytes == 1 ? 256.0 : 65536.0;
    const auto width = static_cast<std::uint32_t>(
        std::max(1.0, std::round(std::pow(domain, 1.0 - config.hardness))));

    BlockId open = b.add_block();
    b.program().entry_block = open;
    for (std::uint32_t g = 0; g < config.gates; ++g) {
        open = emit_fillers(b, open, budget[2 * g], rng);
        std::vector<std::uint32_t> bytes;
        for (std::uint32_t k = 0; k < config.gate_bytes; ++k) {
            bytes.push_back(byte_order[g * config.gate_bytes + k]);
        }
        const BlockId pass = b.add_block();
        const BlockId fail = b.add_block();
        const auto lo = static_cast<std::uint32_t>(rng.below(static_cast<std::uint64_t>(domain) - width + 1));
        if (width == 1) {
            b.add_condition(open, bytes, Predicate::Equal, lo, lo, pass, fail);
        } else {
            b.add_condition(open, bytes, Predicate::InRange, lo, lo + width - 1, pass, fail);
        }
        emit_fillers(b, fail, budget[2 * g + 1], rng);
        open = pass;
    }
    open = emit_fillers(b, open, budget[2 * config.gates], rng);
    b.program().target_block = open;

    ProgramSpec program = std::move(b.program());
    program.validate();
    return program;
}

double gate_pass_rate(const Condition& c)
{
    const double domain = std::ldexp(1.0, 8 * static_cast<int>(c.bytes.size()));
    switch (c.kind) {
    case Predicate::Equal: return 1.0 / domain;
    case Predicate::InRange: return (static_cast<double>(c.operand_hi) - c.operand + 1.0) / domain;
    case Predicate::Less: return std::min(1.0, c.operand / domain);
    case Predicate::CountLoop: return 1.0;
    }
    return 1.0;
}

std::vector<Condition> gate_conditions(const ProgramSpec& program)
{
    const StaticInfo info = compute_static_info(program);
    std::vector<Condition> gates;
    for (const Condition& c : program.conditions) {
        if (c.kind == Predicate::CountLoop) {
            continue;
        }
        const bool t = info.bb_distance[program.edges[c.on_true].to].has_value();
        const bool f = info.bb_distance[program.edges[c.on_false].to].has_value();
        if (t && !f) {
            gates.push_back(c);
        }
    }
    return gates;
}

// ---------------------------------------------------------------------------
// Execution

std::uint32_t bucket_hits(std::uint32_t hits)
{
    if (hits <= 3) return hits;
    if (hits <= 7) return 4;
    if (hits <= 15) return 8;
    if (hits <= 31) return 16;
    if (hits <= 127) return 32;
    return 128;
}

TraceBits bucket_trace(const TraceBits& raw)
{
    TraceBits out;
    out.reserve(raw.size());
    for (const auto& [branch, hits] : raw) {
        if (hits > 0) {
            out.emplace_back(branch, bucket_hits(hits));
        }
    }
    return out;
}

PathId hash_trace(const TraceBits& bucketed)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFF;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [branch, bucket] : bucketed) {
        feed(branch);
        feed(bucket);
    }
    return Rng::mix(h);
}

bool ExecutionResult::reached(BlockId block) const
{
    return std::find(executed_blocks.begin(), executed_blocks.end(), block) != executed_blocks.end();
}

Executor::Executor(ProgramSpec program) : program_(std::move(program))
{
    const Layout layout = build_layout(program_);
    condition_ = layout.condition;
    jump_ = layout.jump;
}

ExecutionResult Executor::run(std::span<const std::uint8_t> input) const
{
    std::vector<std::uint32_t> hits(program_.edges.size(), 0);
    std::vector<std::uint64_t> loop_count(program_.block_count, 0);

    ExecutionResult r;
    BlockId cur = program_.entry_block;
    std::uint64_t steps = 0;
    while (steps < kMaxSteps) {
        r.executed_blocks.push_back(cur);
        ++steps;
        std::optional<BranchId> taken;
        if (const auto ci = condition_[cur]) {
            const Condition& c = program_.conditions[*ci];
            const std::uint64_t v = read_operand(c, input);
            bool cond = false;
            switch (c.kind) {
            case Predicate::Less: cond = v < c.operand; break;
            case Predicate::Equal: cond = v == c.operand; break;
            case Predicate::InRange: cond = v >= c.operand && v <= c.operand_hi; break;
            case Predicate::CountLoop:
                cond = loop_count[cur] < v % (static_cast<std::uint64_t>(c.operand) + 1);
                loop_count[cur] = cond ? loop_count[cur] + 1 : 0;
                break;
            }
            taken = cond ? c.on_true : c.on_false;
        } else if (jump_[cur]) {
            taken = jump_[cur];
        }
        if (!taken) {
            break;
        }
        ++hits[*taken];
        cur = program_.edges[*taken].to;
    }
    r.exec_time = steps;
    for (std::size_t e = 0; e < hits.size(); ++e) {
        if (hits[e] > 0) {
            r.raw_hits.emplace_back(static_cast<BranchId>(e), hits[e]);
        }
    }
    r.trace_bits = bucket_trace(r.raw_hits);
    r.path_id = hash_trace(r.trace_bits);
    return r;
}

ExecutionResult execute(const ProgramSpec& program, std::span<const std::uint8_t> input)
{
    return Executor(program).run(input);
}

// ---------------------------------------------------------------------------
// Static analysis

StaticInfo compute_static_info(const ProgramSpec& program)
{
    StaticInfo info;
    info.bb_distance.assign(program.block_count, std::nullopt);
    info.siblings.assign(program.edges.size(), {});
    info.condition_of.assign(program.edges.size(), std::nullopt);

    std::vector<std::vector<BlockId>> pred(program.block_count);
    for (const Edge& e : program.edges) {
        pred[e.to].push_back(e.from);
    }
    std::deque<BlockId> queue{program.target_block};
    info.bb_distance[program.target_block] = 0;
    while (!queue.empty()) {
        const BlockId b = queue.front();
        queue.pop_front();
        for (BlockId p : pred[b]) {
            if (!info.bb_distance[p]) {
                info.bb_distance[p] = *info.bb_distance[b] + 1;
                queue.push_back(p);
            }
        }
    }
    for (std::size_t i = 0; i < program.conditions.size(); ++i) {
        const Condition& c = program.conditions[i];
        info.siblings[c.on_true] = {c.on_false};
        info.siblings[c.on_false] = {c.on_true};
        info.condition_of[c.on_true] = i;
        info.condition_of[c.on_false] = i;
    }
    return info;
}

// ---------------------------------------------------------------------------
// Ground-truth transition distribution

std::map<PathId, double> true_transition_distribution(const ProgramSpec& program,
                                                      const Bytes& seed,
                                                      std::size_t action,
                                                      std::span<const Mutator> mutators,
                                                      std::size_t max_outcomes,
                                                      std::uint64_t sample_seed)
{
    if (action >= seed.size()) {
        throw std::invalid_argument("action byte beyond seed length");
    }
    if (mutators.empty()) {
        throw std::invalid_argument("empty mutator set");
    }
    const std::size_t max_len = program.max_input_len;
    const Executor exec(program);
    std::vector<std::size_t> counts;
    std::size_t total = 0;
    for (Mutator m : mutators) {
        counts.push_back(outcome_count(m, seed, action, max_len));
        total += counts.back();
    }

    std::map<PathId, double> dist;
    const double per_mutator = 1.0 / static_cast<double>(mutators.size());
    if (total <= max_outcomes) {
        for (std::size_t i = 0; i < mutators.size(); ++i) {
            const double w = per_mutator / static_cast<double>(counts[i]);
            for (std::size_t o = 0; o < counts[i]; ++o) {
                const Bytes mutated = apply_outcome(mutators[i], seed, action, o, max_len);
                dist[exec.run(mutated).path_id] += w;
            }
        }
    } else {
        Rng rng(sample_seed);
        const double w = 1.0 / static_cast<double>(max_outcomes);
        for (std::size_t s = 0; s < max_outcomes; ++s) {
            const Mutator m = mutators[rng.below(mutators.size())];
            const Bytes mutated = apply_mutator(m, seed, action, rng, max_len);
            dist[exec.run(mutated).path_id] += w;
        }
    }
    // Renormalize away accumulated rounding so the mass sums to 1 within 1e-12.
    double sum = 0.0;
    for (const auto& [_, p] : dist) {
        sum += p;
    }
    for (auto& [_, p] : dist) {
        p /= sum;
    }
    return dist;
}

}  // namespace predfuzz
