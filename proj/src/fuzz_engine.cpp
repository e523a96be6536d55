#include "predfuzz/fuzz_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "predfuzz/types.hpp"

namespace predfuzz {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string to_hex(const Bytes& b)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(b.size() * 2);
    for (std::uint8_t x : b) {
        s.push_back(digits[x >> 4]);
        s.push_back(digits[x & 0xF]);
    }
    return s;
}

Bytes from_hex(const std::string& s)
{
    if (s.size() % 2 != 0) {
        throw std::invalid_argument("odd-length hex seed: " + s);
    }
    auto nibble = [&](char c) -> std::uint8_t {
        if (c >= '0' && c <= '9') {
            return static_cast<std::uint8_t>(c - '0');
        }
        if (c >= 'a' && c <= 'f') {
            return static_cast<std::uint8_t>(c - 'a' + 10);
        }
        if (c >= 'A' && c <= 'F') {
            return static_cast<std::uint8_t>(c - 'A' + 10);
        }
        throw std::invalid_argument("bad hex digit in seed: " + s);
    };
    Bytes out;
    for (std::size_t i = 0; i < s.size(); i += 2) {
        out.push_back(static_cast<std::uint8_t>(nibble(s[i]) << 4 | nibble(s[i + 1])));
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Queue

std::size_t SeedQueue::add(QueueEntry entry)
{
    const PathId id = entry.record.path_id;
    if (index_.contains(id)) {
        throw std::invalid_argument("path already queued");
    }
    index_.emplace(id, entries_.size());
    entries_.push_back(std::move(entry));
    return entries_.size() - 1;
}

std::optional<std::size_t> SeedQueue::find(PathId id) const
{
    const auto it = index_.find(id);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t select_seed(SeedQueue& queue, Rng& rng)
{
    if (queue.empty()) {
        throw std::invalid_argument("cannot select from an empty queue");
    }
    const auto& entries = queue.entries();
    const bool any_open =
        std::any_of(entries.begin(), entries.end(), [](const QueueEntry& e) { return !e.record.terminal; });
    if (!any_open) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < entries.size(); ++i) {
            if (entries[i].record.value > entries[best].record.value) {
                best = i;
            }
        }
        return best;
    }
    const std::size_t n = entries.size();
    while (true) {
        const std::size_t i = queue.cursor % n;
        queue.cursor = (i + 1) % n;
        if (!entries[i].record.terminal && rng.bernoulli(entries[i].group.ss())) {
            return i;
        }
    }
}

std::uint32_t mutation_count(double se)
{
    if (!(se >= 1.0)) {
        throw std::invalid_argument("seed energy must be at least 1");
    }
    return static_cast<std::uint32_t>(std::clamp(std::round(se), 8.0, 1024.0));
}

HavocResult havoc_mutate(const Bytes& seed, const ActionGroup& group, std::span<const std::size_t> optimal,
                         std::span<const std::size_t> common, Rng& rng, std::size_t max_len)
{
    if (seed.empty()) {
        throw std::invalid_argument("cannot mutate an empty seed");
    }
    HavocResult res;
    res.input = seed;
    res.rounds = kHavocRounds[rng.categorical(group.hr())];
    for (std::uint32_t r = 0; r < res.rounds; ++r) {
        const std::size_t cls = rng.categorical(group.lc());
        std::span<const std::size_t> pick = cls == 0 ? optimal : common;
        if (pick.empty()) {
            pick = cls == 0 ? common : optimal;
        }
        std::size_t pos = pick.empty() ? rng.below(res.input.size()) : pick[rng.below(pick.size())];
        if (pos >= res.input.size()) {
            pos = rng.below(res.input.size());
        }
        const auto m = static_cast<Mutator>(rng.categorical(group.mt()));
        const std::size_t count = outcome_count(m, res.input, pos, max_len);
        const std::size_t outcome = rng.below(count);
        res.input = apply_outcome(m, res.input, pos, outcome, max_len);
        res.steps.push_back({pos, m, outcome});
    }
    return res;
}

void update_favored(SeedQueue& queue)
{
    auto& entries = queue.entries();
    BranchId max_branch = 0;
    for (auto& e : entries) {
        e.favored = false;
        if (!e.record.branches.empty()) {
            max_branch = std::max(max_branch, e.record.branches.back());
        }
    }
    const std::size_t none = entries.size();
    std::vector<std::size_t> top(static_cast<std::size_t>(max_branch) + 1, none);
    auto cost = [&](std::size_t i) {
        return static_cast<double>(entries[i].record.exec_steps) *
               static_cast<double>(entries[i].record.seed.size());
    };
    for (std::size_t i = 0; i < entries.size(); ++i) {
        for (BranchId b : entries[i].record.branches) {
            if (top[b] == none || cost(i) < cost(top[b])) {
                top[b] = i;
            }
        }
    }
    std::vector<bool> covered(top.size(), false);
    for (BranchId b : queue.stats().explored_branches()) {
        if (b >= top.size() || covered[b] || top[b] == none) {
            continue;
        }
        QueueEntry& chosen = entries[top[b]];
        chosen.favored = true;
        for (BranchId c : chosen.record.branches) {
            covered[c] = true;
        }
    }
    for (auto& e : entries) {
        e.record.features.favored = e.favored ? 1.0 : 0.0;
    }
}

// ---------------------------------------------------------------------------
// Configuration

Ablation parse_ablation(const std::string& text)
{
    Ablation a;
    if (text.empty() || text == "none") {
        return a;
    }
    if (text == "all") {
        return {true, true, true};
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "vee") {
            a.vee = true;
        } else if (item == "rlf") {
            a.rlf = true;
        } else if (item == "fo") {
            a.fo = true;
        } else {
            throw std::invalid_argument("unknown ablation '" + item + "' (expected vee, rlf, fo or all)");
        }
    }
    return a;
}

std::string ablation_name(const Ablation& a)
{
    if (a.all()) {
        return "all";
    }
    if (a.none()) {
        return "none";
    }
    std::string s;
    for (const auto& [on, name] : {std::pair{a.vee, "vee"}, std::pair{a.rlf, "rlf"}, std::pair{a.fo, "fo"}}) {
        if (on) {
            s += s.empty() ? name : std::string(",") + name;
        }
    }
    return s;
}

void CampaignConfig::validate() const
{
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument("gamma must lie in (0,1]");
    }
    if (k < 1) {
        throw std::invalid_argument("rollout length k must be at least 1");
    }
    if (ensemble < 1) {
        throw std::invalid_argument("ensemble needs at least one member");
    }
    if (cycle_execs == 0) {
        throw std::invalid_argument("cycle length must be positive");
    }
    if (!(lr > 0.0) || !(vee_lr > 0.0)) {
        throw std::invalid_argument("learning rates must be positive");
    }
    if (hidden < 1) {
        throw std::invalid_argument("hidden width must be positive");
    }
    if (rlf_batch == 0) {
        throw std::invalid_argument("policy batch size must be positive");
    }
    if (!(historical_fraction >= 0.0 && historical_fraction <= 1.0)) {
        throw std::invalid_argument("historical fraction must lie in [0,1]");
    }
    if (historical_capacity == 0 || predicted_capacity == 0) {
        throw std::invalid_argument("buffer capacities must be positive");
    }
    if (terminal_threshold == 0) {
        throw std::invalid_argument("terminal threshold must be positive");
    }
    if (!(cycle_seconds >= 0.0)) {
        throw std::invalid_argument("cycle wall-clock cap must be non-negative");
    }
    if (!(alpha >= 0.0)) {
        throw std::invalid_argument("entropy temperature must be non-negative");
    }
    if (!(scale_margin >= 0.0)) {
        throw std::invalid_argument("embedding scale margin must be non-negative");
    }
    for (const Bytes& s : initial_seeds) {
        if (s.empty()) {
            throw std::invalid_argument("initial seeds must be non-empty");
        }
    }
}

void to_json(nlohmann::json& j, const CampaignConfig& c)
{
    std::vector<std::string> seeds;
    for (const Bytes& s : c.initial_seeds) {
        seeds.push_back(to_hex(s));
    }
    j = nlohmann::json{
        {"program", c.program_file},
        {"generate", c.generate},
        {"target", c.target ? nlohmann::json(*c.target) : nlohmann::json(nullptr)},
        {"initial_seeds", seeds},
        {"budget_execs", c.budget_execs},
        {"cycle_execs", c.cycle_execs},
        {"cycle_seconds", c.cycle_seconds},
        {"stop_on_target", c.stop_on_target},
        {"gamma", c.gamma},
        {"k", c.k},
        {"ensemble", c.ensemble},
        {"lr", c.lr},
        {"alpha", c.alpha},
        {"hidden", c.hidden},
        {"rlf_batch", c.rlf_batch},
        {"rlf_steps", c.rlf_steps},
        {"historical_fraction", c.historical_fraction},
        {"standard_v_target", c.standard_v_target},
        {"vee_lr", c.vee_lr},
        {"max_epochs", c.max_epochs},
        {"vee_batches_per_epoch", c.vee_batches_per_epoch},
        {"rollouts", c.rollouts},
        {"eval_cases", c.eval_cases},
        {"historical_capacity", c.historical_capacity},
        {"predicted_capacity", c.predicted_capacity},
        {"terminal_threshold", c.terminal_threshold},
        {"shared_random", c.shared_random},
        {"scale_margin", c.scale_margin},
        {"seed", c.seed},
        {"ablate", ablation_name(c.ablate)},
    };
}

void from_json(const nlohmann::json& j, CampaignConfig& c)
{
    static const std::set<std::string> known{
        "program", "generate", "target", "initial_seeds", "budget_execs", "cycle_execs", "cycle_seconds",
        "stop_on_target", "gamma", "k", "ensemble", "lr", "alpha", "hidden", "rlf_batch", "rlf_steps",
        "historical_fraction", "standard_v_target", "vee_lr", "max_epochs", "vee_batches_per_epoch", "rollouts", "eval_cases",
        "historical_capacity", "predicted_capacity", "terminal_threshold", "shared_random", "scale_margin", "seed",
        "ablate"};
    if (!j.is_object()) {
        throw std::invalid_argument("campaign config must be a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw std::invalid_argument("unknown config key: " + key);
        }
    }
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) {
            j.at(key).get_to(field);
        }
    };
    get("program", c.program_file);
    get("generate", c.generate);
    if (j.contains("target")) {
        c.target = j.at("target").is_null() ? std::nullopt : std::optional<BlockId>(j.at("target").get<BlockId>());
    }
    if (j.contains("initial_seeds")) {
        c.initial_seeds.clear();
        for (const auto& s : j.at("initial_seeds")) {
            c.initial_seeds.push_back(from_hex(s.get<std::string>()));
        }
    }
    get("budget_execs", c.budget_execs);
    get("cycle_execs", c.cycle_execs);
    get("cycle_seconds", c.cycle_seconds);
    get("stop_on_target", c.stop_on_target);
    get("gamma", c.gamma);
    get("k", c.k);
    get("ensemble", c.ensemble);
    get("lr", c.lr);
    get("alpha", c.alpha);
    get("hidden", c.hidden);
    get("rlf_batch", c.rlf_batch);
    get("rlf_steps", c.rlf_steps);
    get("historical_fraction", c.historical_fraction);
    get("standard_v_target", c.standard_v_target);
    get("vee_lr", c.vee_lr);
    get("max_epochs", c.max_epochs);
    get("vee_batches_per_epoch", c.vee_batches_per_epoch);
    get("rollouts", c.rollouts);
    get("eval_cases", c.eval_cases);
    get("historical_capacity", c.historical_capacity);
    get("predicted_capacity", c.predicted_capacity);
    get("terminal_threshold", c.terminal_threshold);
    get("shared_random", c.shared_random);
    get("scale_margin", c.scale_margin);
    get("seed", c.seed);
    if (j.contains("ablate")) {
        c.ablate = parse_ablation(j.at("ablate").get<std::string>());
    }
}

ProgramSpec resolve_program(const CampaignConfig& config)
{
    ProgramSpec p = config.program_file.empty() ? generate_program(parse_generation_params(config.generate))
                                                : load_program(config.program_file);
    if (config.target) {
        p.target_block = *config.target;
        p.validate();
    }
    return p;
}

// ---------------------------------------------------------------------------
// Campaign

namespace {

VeeConfig vee_config(const CampaignConfig& c)
{
    VeeConfig v;
    v.members = static_cast<int>(c.ensemble);
    v.lr = c.vee_lr;
    v.max_epochs = c.max_epochs;
    v.max_batches_per_epoch = c.vee_batches_per_epoch;
    return v;
}

RlfConfig rlf_config(const CampaignConfig& c)
{
    RlfConfig r;
    r.hidden = c.hidden;
    r.lr = c.lr;
    r.gamma = c.gamma;
    r.alpha = c.alpha;
    r.k = c.k;
    r.batch = c.rlf_batch;
    r.historical_fraction = c.historical_fraction;
    r.standard_v_target = c.standard_v_target;
    return r;
}

const CampaignConfig& checked(const CampaignConfig& c)
{
    c.validate();
    return c;
}

}  // namespace

Campaign::Campaign(const CampaignConfig& config) : Campaign(config, resolve_program(checked(config))) {}

Campaign::Campaign(const CampaignConfig& config, ProgramSpec program)
    : config_(checked(config)),
      exec_(std::move(program)),
      info_(compute_static_info(exec_.program())),
      d_max_(max_distance(info_)),
      rng_(Rng(config.seed).fork(1)),
      train_rng_(Rng(config.seed).fork(2)),
      historical_(BufferKind::Historical, config.historical_capacity),
      predicted_(BufferKind::Predicted, config.predicted_capacity),
      ensemble_(vee_config(config), Rng(config.seed).fork(3).next()),
      agent_(rlf_config(config), Rng(config.seed).fork(4).next())
{
    seed_queue();
}

void Campaign::seed_queue()
{
    std::vector<Bytes> seeds = config_.initial_seeds;
    if (seeds.empty()) {
        seeds.emplace_back(std::max<std::uint32_t>(exec_.program().max_input_len, 1), 0);
    }
    for (const Bytes& s : seeds) {
        if (execs_ >= config_.budget_execs) {
            break;
        }
        run_input(s);
    }
    if (!queue_.empty()) {
        update_favored(queue_);
        refresh_values();
        rebase_embeddings();
    }
}

PathFeatures Campaign::features_of(const PathRecord& rec) const
{
    PathFeatures f;
    f.closeness = closeness(rec.distance, d_max_);
    f.difficulty = estimated_difficulty(rec, queue_.stats(), info_);
    f.speed = static_cast<double>(std::max<std::uint64_t>(min_exec_steps_, 1)) /
              static_cast<double>(std::max<std::uint64_t>(rec.exec_steps, 1));
    f.favored = rec.features.favored;
    return f;
}

Campaign::Executed Campaign::run_input(const Bytes& input)
{
    ++execs_;
    if (audit_) {
        audit_inputs_.push_back(input);
    }
    const ExecutionResult res = exec_.run(input);
    queue_.stats().record(res.raw_hits);
    if (!reached_at_ && res.reached(exec_.program().target_block)) {
        reached_at_ = execs_;
        reached_seconds_ = seconds_since(started_);
    }
    if (const auto idx = queue_.find(res.path_id)) {
        return {*idx, false};
    }

    QueueEntry e;
    PathRecord& rec = e.record;
    rec.path_id = res.path_id;
    rec.seed = input;
    rec.trace = res.trace_bits;
    rec.branches.reserve(res.trace_bits.size());
    for (const auto& [b, _] : res.trace_bits) {
        rec.branches.push_back(b);
    }
    rec.exec_steps = res.exec_time;
    rec.distance = seed_distance(res.executed_blocks, info_);
    rec.reaches_target = res.reached(exec_.program().target_block);
    rec.found_at = execs_;
    if (min_exec_steps_ == 0 || res.exec_time < min_exec_steps_) {
        min_exec_steps_ = std::max<std::uint64_t>(res.exec_time, 1);
    }
    rec.features = features_of(rec);
    rec.value = seed_value(rec.features, weights_);
    e.embedding = embed_path(rec.trace, scale_);

    queue_stats_.add(rec);
    e.group = init_action_group(rec, queue_stats_);
    return {queue_.add(std::move(e)), true};
}

double Campaign::transition_value(std::size_t index) const
{
    const QueueEntry& e = queue_[index];
    if (config_.ablate.rlf || !rlf_ready_ || e.record.terminal) {
        return 0.0;
    }
    return agent_.v(e.embedding);
}

void Campaign::fuzz_seed(std::size_t index, std::uint64_t cycle_end, CycleReport& report, double& reward_sum)
{
    const Bytes seed = queue_[index].record.seed;
    const PathId source = queue_[index].record.path_id;
    ActionGroup group = queue_[index].group;
    const std::uint32_t mn = mutation_count(group.se());
    group.iterations = 0;
    group.max_iterations = mn;

    std::vector<std::size_t> optimal;
    std::vector<std::size_t> common;
    if (!config_.ablate.rlf && rlf_ready_) {
        const auto density = policy_density_over_bytes(agent_.actor(), queue_[index].embedding, seed.size());
        std::tie(optimal, common) = classify_locations(density);
    } else {
        optimal.resize(seed.size());
        for (std::size_t i = 0; i < seed.size(); ++i) {
            optimal[i] = i;
        }
    }

    std::vector<MutationOutcome> history;
    const std::size_t max_len = exec_.program().max_input_len;
    for (std::uint32_t j = 0; j < mn; ++j) {
        if (execs_ >= cycle_end || (config_.stop_on_target && reached_at_)) {
            break;
        }
        const HavocResult h = havoc_mutate(seed, group, optimal, common, rng_, max_len);
        const Executed ex = run_input(h.input);
        if (ex.is_new) {
            ++report.new_paths;
        }
        const QueueEntry& src = queue_[index];
        const QueueEntry& dst = queue_[ex.index];

        Transition t;
        t.p_t = source;
        t.a_t = encode_action(h.steps.front().pos, seed.size());
        t.p_next = dst.record.path_id;
        t.reward = transition_reward(src.record.value, dst.record.value);
        t.testcase_id = disambiguate_testcase(++mutation_counter_, t.p_next);
        t.s = src.embedding;
        t.s_next = dst.embedding;
        t.terminal_next = dst.record.terminal;
        t.next_seed_len = static_cast<std::uint32_t>(dst.record.seed.size());
        record_transition(historical_, t, queue_[index].record, config_.terminal_threshold);
        cycle_log_.push_back(t);
        reward_sum += t.reward;

        const MutationOutcome o{t.reward, transition_value(ex.index)};
        history.push_back(o);
        swarm_.record(o);
        // The swarm starts moving once the policy has given feedback.
        if (!config_.ablate.fo && (rlf_ready_ || config_.ablate.rlf)) {
            swarm_.update_bests(group, local_efficiency(history, config_.gamma), swarm_.global_efficiency(config_.gamma));
            group.iterations = j + 1;
            group = update_particle(group, swarm_.gbest(), rng_, config_.shared_random);
        }
    }
    queue_[index].group = group;
}

void Campaign::refresh_values()
{
    auto& entries = queue_.entries();
    std::vector<std::array<double, 4>> rows;
    rows.reserve(entries.size());
    for (auto& e : entries) {
        e.record.features = features_of(e.record);
        rows.push_back(e.record.features.as_array());
    }
    weights_ = kUniformWeights;
    if (rows.size() >= 2) {
        try {
            weights_ = entropy_weights(normalize_features(rows));
        } catch (const std::invalid_argument&) {
            weights_ = kUniformWeights;
        }
    }
    for (auto& e : entries) {
        e.record.value = seed_value(e.record.features, weights_);
    }
}

void Campaign::rebase_embeddings()
{
    std::vector<TraceBits> traces;
    traces.reserve(queue_.size());
    for (const auto& e : queue_.entries()) {
        traces.push_back(e.record.trace);
    }
    scale_ = EmbeddingScale::fit(traces, config_.scale_margin);
    for (auto& e : queue_.entries()) {
        e.embedding = embed_path(e.record.trace, scale_);
    }
    std::vector<Transition> old = historical_.snapshot();
    historical_.clear();
    for (Transition& t : old) {
        const auto from = queue_.find(t.p_t);
        const auto to = queue_.find(t.p_next);
        if (!from || !to) {
            continue;
        }
        t.s = queue_[*from].embedding;
        t.s_next = queue_[*to].embedding;
        t.reward = transition_reward(queue_[*from].record.value, queue_[*to].record.value);
        t.terminal_next = queue_[*to].record.terminal;
        historical_.push(t);
    }
    predicted_.clear();
}

std::pair<double, double> Campaign::evaluate_cycle(std::span<const Transition> data) const
{
    if (!ensemble_.trained() || data.empty()) {
        return {0.0, 0.0};
    }
    struct Group {
        std::size_t total = 0;
        std::map<PathId, std::pair<std::size_t, double>> next;  // count, reward sum
    };
    std::map<std::pair<PathId, std::size_t>, Group> groups;
    for (const Transition& t : data) {
        const auto from = queue_.find(t.p_t);
        if (!from) {
            continue;
        }
        const std::size_t byte = decode_action(t.a_t, queue_[*from].record.seed.size());
        Group& g = groups[{t.p_t, byte}];
        ++g.total;
        auto& [count, reward] = g.next[t.p_next];
        ++count;
        reward += t.reward;
    }
    std::vector<std::pair<std::size_t, std::pair<PathId, std::size_t>>> ranked;
    for (const auto& [key, g] : groups) {
        if (g.total >= 8) {
            ranked.emplace_back(g.total, key);
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    if (ranked.size() > config_.eval_cases) {
        ranked.resize(config_.eval_cases);
    }
    std::vector<EvalCase> cases;
    for (const auto& [_, key] : ranked) {
        const Group& g = groups.at(key);
        const QueueEntry& src = queue_[*queue_.find(key.first)];
        EvalCase c;
        c.path = src.embedding;
        c.action = encode_action(key.second, src.record.seed.size());
        for (const auto& [next, cr] : g.next) {
            EvalOutcome o;
            o.embedding = queue_[*queue_.find(next)].embedding;
            o.prob = static_cast<double>(cr.first) / static_cast<double>(g.total);
            o.reward = cr.second / static_cast<double>(cr.first);
            o.self = next == key.first;
            c.outcomes.push_back(o);
        }
        cases.push_back(std::move(c));
    }
    if (cases.empty()) {
        return {0.0, 0.0};
    }
    const AccuracyReport r = evaluate_accuracy(ensemble_, cases);
    return {r.aapp, r.aapr};
}

void Campaign::train_models(CycleReport& report)
{
    if (historical_.size() == 0) {
        return;
    }
    if (!config_.ablate.vee) {
        const std::vector<Transition> data = historical_.snapshot();
        const TrainReport tr = ensemble_.train(data, config_.max_epochs, train_rng_);
        double loss = 0.0;
        std::size_t n = 0;
        for (const auto& curve : tr.curves) {
            if (!curve.empty()) {
                loss += curve.back();
                ++n;
            }
        }
        report.vee_loss = n > 0 ? loss / static_cast<double>(n) : 0.0;
        if (tr.diverged) {
            report.warnings.push_back("transition model diverged; kept last good weights");
        }
        if (!config_.ablate.rlf) {
            for (std::size_t i = 0; i < config_.rollouts; ++i) {
                const Transition& start = data[train_rng_.below(data.size())];
                const RolloutBatch rb =
                    k_step_rollout(ensemble_, agent_.actor(), start.s, start.p_t, config_.k, train_rng_, mutation_counter_);
                for (const Transition& t : rb.steps) {
                    predicted_.push(t);
                }
            }
        }
        report.predicted = predicted_.size();
    }
    if (!config_.ablate.rlf) {
        const RlfLosses l = agent_.train(historical_, predicted_, config_.rlf_steps, train_rng_);
        report.j_v = l.j_v;
        report.j_q = l.j_q;
        report.j_pi = l.j_pi;
        if (l.diverged) {
            report.warnings.push_back("policy networks diverged; kept last good weights");
        }
        rlf_ready_ = true;
    }
}

bool Campaign::done() const
{
    return execs_ >= config_.budget_execs || queue_.empty() || (config_.stop_on_target && reached_at_.has_value());
}

CycleReport Campaign::fuzz_cycle()
{
    const auto t0 = Clock::now();
    CycleReport report;
    report.cycle = cycle_++;
    swarm_.begin_cycle();
    cycle_log_.clear();
    double reward_sum = 0.0;

    // Task 1: fuzz.
    const std::uint64_t cycle_end = std::min(execs_ + config_.cycle_execs, config_.budget_execs);
    while (!queue_.empty() && execs_ < cycle_end && !(config_.stop_on_target && reached_at_)) {
        const std::size_t idx = select_seed(queue_, rng_);
        fuzz_seed(idx, cycle_end, report, reward_sum);
        if (config_.cycle_seconds > 0.0 && seconds_since(t0) >= config_.cycle_seconds) {
            break;
        }
    }
    report.transitions = cycle_log_.size();
    report.ar = cycle_log_.empty() ? 0.0 : reward_sum / static_cast<double>(cycle_log_.size());
    report.global_efficiency = swarm_.cycle_mutations() > 0 ? swarm_.global_efficiency(config_.gamma) : 0.0;

    // Task 4 bookkeeping first so the models train on the embedding scale the
    // next cycle will use.
    update_favored(queue_);
    refresh_values();
    rebase_embeddings();

    // Tasks 2 and 3; a finished campaign does not need new models.
    if (!done()) {
        train_models(report);
    }
    const auto [aapp, aapr] = evaluate_cycle(cycle_log_);
    report.aapp = aapp;
    report.aapr = aapr;

    report.execs = execs_;
    report.queue_size = queue_.size();
    for (const auto& e : queue_.entries()) {
        if (e.record.distance) {
            ++report.rseed;
        }
    }
    report.prseed = queue_.empty() ? 0.0 : static_cast<double>(report.rseed) / static_cast<double>(queue_.size());
    report.target_reached = reached_at_.has_value();
    report.reached_at = reached_at_;
    if (swarm_.has_gbest()) {
        report.gbest_eff = swarm_.gbest_eff();
        report.gbest = swarm_.gbest();
    }
    for (const auto& e : queue_.entries()) {
        for (std::size_t i = 0; i < kActionDim; ++i) {
            report.mean_position[i] += e.group.x[i] / static_cast<double>(queue_.size());
        }
    }
    return report;
}

CampaignReport Campaign::run(const std::function<void(const CycleReport&)>& on_cycle)
{
    CampaignReport r;
    r.config = config_;
    r.version = kVersion;
    r.seed = config_.seed;
    r.budget_execs = config_.budget_execs;
    // A target hit by an initial seed still produces one (empty) cycle report.
    while (!done() || (r.cycles.empty() && execs_ > 0)) {
        r.cycles.push_back(fuzz_cycle());
        if (on_cycle) {
            on_cycle(r.cycles.back());
        }
    }
    r.reached = reached_at_.has_value();
    r.ttr_execs = reached_at_;
    r.ttr_seconds = reached_seconds_;
    r.total_execs = execs_;
    r.final_queue = queue_.size();
    for (const auto& e : queue_.entries()) {
        r.final_favored += e.favored ? 1 : 0;
        r.final_rseed += e.record.distance ? 1 : 0;
    }
    r.final_prseed = queue_.empty() ? 0.0 : static_cast<double>(r.final_rseed) / static_cast<double>(queue_.size());
    return r;
}

CampaignReport run_campaign(const CampaignConfig& config)
{
    Campaign c(config);
    return c.run();
}

}  // namespace predfuzz
