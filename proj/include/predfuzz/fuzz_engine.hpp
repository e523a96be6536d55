#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "predfuzz/action_group.hpp"
#include "predfuzz/encoding.hpp"
#include "predfuzz/mutators.hpp"
#include "predfuzz/path_model.hpp"
#include "predfuzz/rlf.hpp"
#include "predfuzz/rng.hpp"
#include "predfuzz/target_sim.hpp"
#include "predfuzz/vee.hpp"

namespace predfuzz {

struct QueueEntry {
    PathRecord record;
    ActionGroup group;
    bool favored = false;
    PathEmbedding embedding{};
};

class SeedQueue {
public:
    /// Appends a new path; throws std::invalid_argument on a duplicate path id.
    std::size_t add(QueueEntry entry);

    std::optional<std::size_t> find(PathId id) const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    QueueEntry& operator[](std::size_t i) { return entries_[i]; }
    const QueueEntry& operator[](std::size_t i) const { return entries_[i]; }
    std::vector<QueueEntry>& entries() { return entries_; }
    const std::vector<QueueEntry>& entries() const { return entries_; }

    BranchStats& stats() { return stats_; }
    const BranchStats& stats() const { return stats_; }

    /// Position the next select_seed() call starts from.
    std::size_t cursor = 0;

private:
    std::vector<QueueEntry> entries_;
    std::unordered_map<PathId, std::size_t> index_;
    BranchStats stats_;
};

/// Walks the queue from its cursor, accepting each non-terminal seed with
/// probability SS, until one accepts. Returns the highest-value seed when
/// every seed is terminal. Throws std::invalid_argument on an empty queue.
std::size_t select_seed(SeedQueue& queue, Rng& rng);

/// round(SE) clamped to [8, 1024].
std::uint32_t mutation_count(double se);

struct HavocStep {
    std::size_t pos = 0;
    Mutator mutator = Mutator::BitFlip1;
    std::size_t outcome = 0;
};

struct HavocResult {
    Bytes input;
    std::vector<HavocStep> steps;
    std::uint32_t rounds = 0;
};

/// Stacked havoc: draws a round count from HR, then per round a location
/// class from LC, a byte uniformly inside it (the other class when the drawn
/// one is empty) and a mutator from MT. Throws std::invalid_argument on an
/// empty seed.
HavocResult havoc_mutate(const Bytes& seed, const ActionGroup& group, std::span<const std::size_t> optimal,
                         std::span<const std::size_t> common, Rng& rng, std::size_t max_len);

/// Greedy cover: every explored branch's fastest-smallest covering seed is
/// marked favored unless an already chosen seed covers it. Refreshes the
/// favored feature of every record.
void update_favored(SeedQueue& queue);

struct Ablation {
    bool vee = false;  ///< disable the transition model (rollouts)
    bool rlf = false;  ///< disable policy and critics
    bool fo = false;   ///< disable swarm optimization of action groups

    bool all() const { return vee && rlf && fo; }
    bool none() const { return !vee && !rlf && !fo; }
    friend bool operator==(const Ablation&, const Ablation&) = default;
};

/// Parses "none", "all" or a comma list over {vee, rlf, fo}.
Ablation parse_ablation(const std::string& text);
std::string ablation_name(const Ablation& a);

struct CampaignConfig {
    std::string program_file;
    std::string generate = "blocks=64,gates=2,hardness=1,seed=1,len=16";
    std::optional<BlockId> target;
    std::vector<Bytes> initial_seeds;  ///< empty: one all-zero input of max_input_len bytes

    std::uint64_t budget_execs = 200'000;
    std::uint64_t cycle_execs = 20'000;
    double cycle_seconds = 0.0;  ///< wall-clock cap per cycle; 0 disables it
    bool stop_on_target = true;

    double gamma = 0.8;
    std::size_t k = 4;
    std::size_t ensemble = 6;
    double lr = 0.005;
    double alpha = 0.2;
    int hidden = 64;
    std::size_t rlf_batch = 128;
    std::size_t rlf_steps = 200;
    double historical_fraction = 0.25;
    /// V-critic target r + gamma V(s') instead of gamma r + V(s').
    bool standard_v_target = true;

    double vee_lr = 1e-3;
    std::size_t max_epochs = 500;
    std::size_t vee_batches_per_epoch = 0;
    std::size_t rollouts = 256;
    std::size_t eval_cases = 16;

    std::size_t historical_capacity = kHistoricalCapacity;
    std::size_t predicted_capacity = kPredictedCapacity;
    std::uint32_t terminal_threshold = kTerminalThreshold;
    bool shared_random = false;
    double scale_margin = 0.25;

    std::uint64_t seed = 1;
    Ablation ablate;

    /// Throws std::invalid_argument with a field-specific message.
    void validate() const;
};

void to_json(nlohmann::json& j, const CampaignConfig& c);
void from_json(const nlohmann::json& j, CampaignConfig& c);

/// Loads the program file or generates one, and applies the target override.
ProgramSpec resolve_program(const CampaignConfig& config);

struct CycleReport {
    std::size_t cycle = 0;
    std::uint64_t execs = 0;  ///< cumulative at cycle end
    std::size_t transitions = 0;
    std::size_t predicted = 0;
    double vee_loss = 0.0;
    double j_v = 0.0;
    double j_q = 0.0;
    double j_pi = 0.0;
    double aapp = 0.0;
    double aapr = 0.0;
    double ar = 0.0;
    double global_efficiency = 0.0;
    std::size_t new_paths = 0;
    std::size_t queue_size = 0;
    std::size_t rseed = 0;
    double prseed = 0.0;
    bool target_reached = false;
    std::optional<std::uint64_t> reached_at;  ///< executions at first reach
    std::vector<std::string> warnings;
    /// Swarm snapshot at cycle end.
    double gbest_eff = 0.0;
    Position gbest{};
    Position mean_position{};
};

struct CampaignReport {
    nlohmann::json config;
    std::string version;
    std::uint64_t seed = 0;
    std::uint64_t budget_execs = 0;
    bool reached = false;
    std::optional<std::uint64_t> ttr_execs;
    std::optional<double> ttr_seconds;
    std::uint64_t total_execs = 0;
    std::vector<CycleReport> cycles;
    std::size_t final_queue = 0;
    std::size_t final_favored = 0;
    std::size_t final_rseed = 0;
    double final_prseed = 0.0;
};

class Campaign {
public:
    explicit Campaign(const CampaignConfig& config);
    Campaign(const CampaignConfig& config, ProgramSpec program);

    /// One four-task cycle.
    CycleReport fuzz_cycle();
    /// Cycles until the target is reached (with stop_on_target) or the budget
    /// runs out; `on_cycle` sees each report as it completes.
    CampaignReport run(const std::function<void(const CycleReport&)>& on_cycle = {});

    bool done() const;
    bool target_reached() const { return reached_at_.has_value(); }
    std::uint64_t execs() const { return execs_; }

    const CampaignConfig& config() const { return config_; }
    const ProgramSpec& program() const { return exec_.program(); }
    const StaticInfo& static_info() const { return info_; }
    const SeedQueue& queue() const { return queue_; }
    const ReplayBuffer& historical() const { return historical_; }
    const ReplayBuffer& predicted() const { return predicted_; }
    const Ensemble& ensemble() const { return ensemble_; }
    const RlfAgent& agent() const { return agent_; }
    const FeatureWeights& weights() const { return weights_; }
    const EmbeddingScale& scale() const { return scale_; }
    const SwarmState& swarm() const { return swarm_; }
    bool models_ready() const { return rlf_ready_; }
    /// Transitions recorded during the most recent cycle, as recorded.
    const std::vector<Transition>& cycle_log() const { return cycle_log_; }

    /// Every execution's input, when audit logging is enabled.
    void enable_audit(bool on) { audit_ = on; }
    const std::vector<Bytes>& audit_inputs() const { return audit_inputs_; }

private:
    struct Executed {
        std::size_t index = 0;
        bool is_new = false;
    };

    void seed_queue();
    Executed run_input(const Bytes& input);
    void fuzz_seed(std::size_t index, std::uint64_t cycle_end, CycleReport& report, double& reward_sum);
    PathFeatures features_of(const PathRecord& rec) const;
    void refresh_values();
    void rebase_embeddings();
    void train_models(CycleReport& report);
    std::pair<double, double> evaluate_cycle(std::span<const Transition> data) const;
    double transition_value(std::size_t index) const;

    CampaignConfig config_;
    Executor exec_;
    StaticInfo info_;
    double d_max_ = 1.0;
    Rng rng_;
    Rng train_rng_;
    SeedQueue queue_;
    ReplayBuffer historical_;
    ReplayBuffer predicted_;
    Ensemble ensemble_;
    RlfAgent agent_;
    SwarmState swarm_;
    FeatureWeights weights_ = kUniformWeights;
    EmbeddingScale scale_ = EmbeddingScale::identity();
    std::uint64_t min_exec_steps_ = 0;
    QueueStats queue_stats_;
    std::uint64_t execs_ = 0;
    std::uint64_t mutation_counter_ = 0;
    std::size_t cycle_ = 0;
    std::size_t cycle_start_transitions_ = 0;
    std::vector<Transition> cycle_log_;
    std::optional<std::uint64_t> reached_at_;
    std::optional<double> reached_seconds_;
    std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
    bool rlf_ready_ = false;
    bool audit_ = false;
    std::vector<Bytes> audit_inputs_;
};

CampaignReport run_campaign(const CampaignConfig& config);

}  // namespace predfuzz
